"""Finite Fourier series over a reciprocal lattice.

A :class:`FourierFunction` represents

    f(z) = sum_K c_K exp(i K.z - |K|^2 s / 2)

with a finite support of reciprocal vectors ``K``. The optional ``heat_time``
``s`` is zero for an ordinary trigonometric polynomial on the cell; transforms
into the holomorphic representation set it to the diffusion time instead of
multiplying the coefficients out, which keeps large-|K| Gram entries finite.
Evaluation accepts real points (functions on the cell) or complex points (the
entire continuation to the complexified cell).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .lattice import ReciprocalLattice


def as_points(z, n: int) -> np.ndarray:
    """Attach an explicit trailing point axis.

    One-dimensional spaces take plain arrays of coordinates (any shape); for
    ``n >= 2`` the last axis must have length ``n``.
    """
    arr = np.asarray(z)
    if n == 1:
        return arr[..., None]
    if arr.ndim == 0 or arr.shape[-1] != n:
        raise DimensionMismatch(f"expected points with trailing axis of length {n}, got shape {arr.shape}")
    return arr


def strip_points(arr: np.ndarray, n: int) -> np.ndarray:
    return arr[..., 0] if n == 1 else arr


@dataclass(frozen=True)
class FourierFunction:
    recip: ReciprocalLattice
    indices: np.ndarray
    coeffs: np.ndarray
    heat_time: float = 0.0
    _lookup: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.recip.dim
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, n)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if idx.shape[0] != c.shape[0]:
            raise DimensionMismatch("indices and coeffs have different lengths")
        # merge duplicate indices, deterministic lexicographic order
        if idx.shape[0]:
            uniq, inv = np.unique(idx, axis=0, return_inverse=True)
            merged = np.zeros(uniq.shape[0], dtype=complex)
            np.add.at(merged, inv.reshape(-1), c)
            idx, c = uniq, merged
        idx.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "heat_time", float(self.heat_time))
        object.__setattr__(self, "_lookup", {tuple(int(v) for v in m): i for i, m in enumerate(idx)})

    # construction helpers -------------------------------------------------

    @classmethod
    def from_dict(cls, recip: ReciprocalLattice, terms: dict, heat_time: float = 0.0) -> "FourierFunction":
        """``terms`` maps integer index tuples (or ints in 1-D) to coefficients."""
        n = recip.dim
        keys = [tuple(np.atleast_1d(k).astype(int)) for k in terms]
        if any(len(k) != n for k in keys):
            raise DimensionMismatch(f"index tuples must have length {n}")
        idx = np.array(keys, dtype=np.int64).reshape(-1, n)
        return cls(recip, idx, np.array(list(terms.values()), dtype=complex), heat_time)

    @classmethod
    def exponential(cls, recip: ReciprocalLattice, index, coeff=1.0) -> "FourierFunction":
        return cls.from_dict(recip, {tuple(np.atleast_1d(index)): coeff})

    @classmethod
    def constant(cls, recip: ReciprocalLattice, value=1.0) -> "FourierFunction":
        return cls.from_dict(recip, {(0,) * recip.dim: value})

    @classmethod
    def random(cls, recip: ReciprocalLattice, degree: int, rng: np.random.Generator,
               density: float = 1.0) -> "FourierFunction":
        """Random trigonometric polynomial with ``max_i |m_i| <= degree``."""
        n = recip.dim
        axis = np.arange(-degree, degree + 1)
        grid = np.stack([g.ravel() for g in np.meshgrid(*([axis] * n), indexing="ij")], axis=-1)
        if density < 1.0:
            keep = rng.random(grid.shape[0]) < density
            keep[rng.integers(grid.shape[0])] = True
            grid = grid[keep]
        c = rng.normal(size=grid.shape[0]) + 1j * rng.normal(size=grid.shape[0])
        return cls(recip, grid, c)

    # basic properties -----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.recip.dim

    @property
    def vectors(self) -> np.ndarray:
        return self.recip.vectors(self.indices)

    @property
    def norm2(self) -> np.ndarray:
        v = self.vectors
        return np.einsum("ij,ij->i", v, v)

    @property
    def max_norm(self) -> float:
        return float(np.sqrt(self.norm2.max())) if len(self) else 0.0

    @property
    def max_index(self) -> int:
        return int(np.abs(self.indices).max()) if len(self) else 0

    def __len__(self) -> int:
        return self.indices.shape[0]

    def coefficient(self, index) -> complex:
        """Effective coefficient of ``exp(i K.z)`` (heat factor folded in)."""
        key = tuple(int(v) for v in np.atleast_1d(index))
        i = self._lookup.get(key)
        if i is None:
            return 0j
        k = self.recip.vectors(np.array(key))
        return complex(self.coeffs[i] * np.exp(-0.5 * self.heat_time * float(k @ k)))

    def effective_coeffs(self) -> np.ndarray:
        return self.coeffs * np.exp(-0.5 * self.heat_time * self.norm2)

    # evaluation -----------------------------------------------------------

    def __call__(self, z) -> np.ndarray:
        pts = as_points(z, self.dim)
        if len(self) == 0:
            return np.zeros(pts.shape[:-1], dtype=complex)
        phase = pts @ self.vectors.T
        expo = 1j * phase - 0.5 * self.heat_time * self.norm2
        return np.exp(expo) @ self.coeffs

    def on_grid(self, n_per_dim: int, basis_matrix: np.ndarray) -> np.ndarray:
        """Values on the grid ``x_j = B (j / N)`` via an inverse FFT.

        Requires ``max |m_i| < N/2`` so that no two modes alias.
        """
        n = self.dim
        if 2 * self.max_index >= n_per_dim:
            raise ValueError("grid too coarse for the support of this function")
        arr = np.zeros((n_per_dim,) * n, dtype=complex)
        np.add.at(arr, tuple((self.indices % n_per_dim).T), self.effective_coeffs())
        return np.fft.ifftn(arr) * n_per_dim ** n

    @classmethod
    def from_grid(cls, recip: ReciprocalLattice, values: np.ndarray, max_index: int | None = None,
                  atol: float = 0.0) -> "FourierFunction":
        """Discrete Fourier coefficients of samples on ``x_j = B (j / N)``.

        Modes with ``|m_i| < N/2`` are kept (optionally capped at ``max_index``);
        coefficients below ``atol`` in magnitude are dropped.
        """
        n = recip.dim
        values = np.asarray(values)
        N = values.shape[0]
        coef = np.fft.fftn(values) / N ** n
        freqs = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)
        grids = np.meshgrid(*([freqs] * n), indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=-1)
        c = coef.ravel()
        keep = np.all(np.abs(idx) < N / 2, axis=1)
        if max_index is not None:
            keep &= np.all(np.abs(idx) <= max_index, axis=1)
        keep &= np.abs(c) > atol
        return cls(recip, idx[keep], c[keep])

    # algebra --------------------------------------------------------------

    def _compatible(self, other: "FourierFunction"):
        if not np.array_equal(self.recip.matrix, other.recip.matrix):
            raise DimensionMismatch("functions live on different lattices")

    def __add__(self, other: "FourierFunction") -> "FourierFunction":
        self._compatible(other)
        if self.heat_time != other.heat_time:
            a, b = self.materialized(), other.materialized()
            return FourierFunction(self.recip, np.vstack([a.indices, b.indices]),
                                   np.concatenate([a.coeffs, b.coeffs]))
        return FourierFunction(self.recip, np.vstack([self.indices, other.indices]),
                               np.concatenate([self.coeffs, other.coeffs]), self.heat_time)

    def __mul__(self, scalar) -> "FourierFunction":
        return FourierFunction(self.recip, self.indices, self.coeffs * complex(scalar), self.heat_time)

    __rmul__ = __mul__

    def materialized(self) -> "FourierFunction":
        """Same function with the heat factor multiplied into the coefficients."""
        return FourierFunction(self.recip, self.indices, self.effective_coeffs())

    def with_heat_time(self, s: float) -> "FourierFunction":
        return FourierFunction(self.recip, self.indices, self.coeffs, s)

    def conj_real(self) -> "FourierFunction":
        """The function ``conj(f(x))`` on real points (coefficients ``conj(c_{-K})``)."""
        return FourierFunction(self.recip, -self.indices, np.conj(self.coeffs), self.heat_time)

    def to_terms(self) -> list:
        """Serializable ``[[index...], [re, im]]`` list of the effective coefficients."""
        return [[[int(v) for v in m], [float(c.real), float(c.imag)]]
                for m, c in zip(self.indices, self.effective_coeffs())]

    @classmethod
    def from_terms(cls, recip: ReciprocalLattice, terms) -> "FourierFunction":
        idx = np.array([t[0] for t in terms], dtype=np.int64).reshape(-1, recip.dim)
        c = np.array([complex(t[1][0], t[1][1]) for t in terms], dtype=complex)
        return cls(recip, idx, c)
