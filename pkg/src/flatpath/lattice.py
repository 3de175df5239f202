"""Translation lattices, their 2*pi-dual reciprocal lattices and shell enumeration.

Every lattice sum in the package (heat kernels, Fourier series, inner products)
runs over a finite shell ``{K in L : |K| <= R}`` of a reciprocal lattice ``L``.
Bases are stored column-wise: column ``j`` of ``matrix`` is the ``j``-th basis vector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import DimensionMismatch, SingularBasis

TWO_PI = 2.0 * math.pi

# relative threshold on |det| / prod(column norms) below which a basis is singular
_SINGULAR_RTOL = 1e-12
# radius ties within this absolute slack are included in a shell
_TIE_ATOL = 1e-12


def _checked_matrix(matrix) -> np.ndarray:
    arr = np.array(matrix, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatch(f"lattice basis must be a square n x n matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SingularBasis("lattice basis has non-finite entries")
    scale = np.prod(np.linalg.norm(arr, axis=0))
    det = np.linalg.det(arr)
    if scale == 0.0 or abs(det) <= _SINGULAR_RTOL * scale:
        raise SingularBasis(f"lattice basis is singular (det={det:.3e})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LatticeBasis:
    """Basis of a translation lattice in R^n (columns are the generators)."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _checked_matrix(self.matrix))

    @classmethod
    def from_rows(cls, rows) -> "LatticeBasis":
        """Build from a row-major nested list (the matrix as written, not its transpose)."""
        return cls(np.array(rows, dtype=float))

    @classmethod
    def diagonal(cls, lengths) -> "LatticeBasis":
        return cls(np.diag(np.atleast_1d(np.asarray(lengths, dtype=float))))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def columns(self) -> np.ndarray:
        """Basis vectors as rows of the returned array, shape ``(n, n)``."""
        return self.matrix.T

    def fractional(self, x) -> np.ndarray:
        """Coordinates of points ``x`` (last axis n) in this basis."""
        return np.linalg.solve(self.matrix, np.asarray(x, dtype=float)[..., None])[..., 0]

    def reduce(self, x) -> np.ndarray:
        """Map points into the fundamental parallelepiped ``B [0, 1)^n``."""
        frac = self.fractional(x)
        frac = frac - np.floor(frac)
        return frac @ self.matrix.T

    def distance_to_lattice(self, v) -> np.ndarray:
        """Distance from each vector ``v`` to the nearest lattice point.

        Searches the 3^n neighbouring cells around the rounded fractional
        coordinates, which is exact for reasonably reduced bases.
        """
        v = np.asarray(v, dtype=float)
        frac = self.fractional(v)
        base = np.round(frac)
        best = np.full(v.shape[:-1], np.inf)
        for shift in itertools.product((-1, 0, 1), repeat=self.dim):
            cand = (base + np.array(shift)) @ self.matrix.T
            best = np.minimum(best, np.linalg.norm(v - cand, axis=-1))
        return best


@dataclass(frozen=True)
class ReciprocalLattice:
    """The 2*pi-dual lattice: ``matrix.T @ B = 2*pi*I`` for the source basis ``B``."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _checked_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def columns(self) -> np.ndarray:
        return self.matrix.T

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    def vectors(self, indices) -> np.ndarray:
        """``K = B_r m`` for integer index vectors ``m`` (last axis n)."""
        return np.asarray(indices, dtype=float) @ self.matrix.T

    def indices_of(self, vectors) -> np.ndarray:
        """Integer coordinates of reciprocal vectors; raises if any is off-lattice."""
        m = np.linalg.solve(self.matrix, np.asarray(vectors, dtype=float)[..., None])[..., 0]
        mi = np.round(m)
        if np.any(np.abs(m - mi) > 1e-8):
            raise ValueError("vector is not a reciprocal-lattice point")
        return mi.astype(np.int64)


@dataclass(frozen=True)
class LatticePoint:
    index: tuple
    vector: np.ndarray
    norm2: float


@dataclass(frozen=True)
class LatticeShell:
    """All reciprocal-lattice points with ``|K| <= radius``, stored as arrays.

    Points are ordered by increasing norm, ties broken lexicographically on the
    integer index, so the summation order is deterministic.
    """

    recip: ReciprocalLattice
    radius: float
    indices: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    norm2: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self) -> Iterator[LatticePoint]:
        for m, k, k2 in zip(self.indices, self.vectors, self.norm2):
            yield LatticePoint(tuple(int(v) for v in m), k, float(k2))

    def as_set(self) -> set:
        return {tuple(int(v) for v in m) for m in self.indices}


def reciprocal(basis: LatticeBasis) -> ReciprocalLattice:
    """Reciprocal lattice ``B_r = 2*pi * B^{-T}``."""
    if not isinstance(basis, LatticeBasis):
        basis = LatticeBasis(basis)
    return ReciprocalLattice(TWO_PI * np.linalg.inv(basis.matrix).T)


def cell_volume(basis: LatticeBasis) -> float:
    if not isinstance(basis, LatticeBasis):
        basis = LatticeBasis(basis)
    return abs(float(np.linalg.det(basis.matrix)))


def enumerate_shell(recip: ReciprocalLattice, radius: float) -> LatticeShell:
    """Every ``K = B_r m`` with ``|K| <= radius`` exactly once.

    Candidates come from the integer box ``|m_i| <= radius / s_min`` where
    ``s_min`` is the smallest singular value of ``B_r``; since
    ``|B_r m| >= s_min |m| >= s_min |m_i|`` nothing outside the box qualifies.
    """
    if radius < 0 or not math.isfinite(radius):
        raise ValueError(f"radius must be finite and nonnegative, got {radius}")
    mat = recip.matrix
    n = recip.dim
    s_min = np.linalg.svd(mat, compute_uv=False)[-1]
    bound = int(math.floor((radius + _TIE_ATOL) / s_min))
    axis = np.arange(-bound, bound + 1)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=-1)
    vec = idx @ mat.T
    nrm2 = np.einsum("ij,ij->i", vec, vec)
    keep = np.sqrt(nrm2) <= radius + _TIE_ATOL
    idx, vec, nrm2 = idx[keep], vec[keep], nrm2[keep]
    order = np.lexsort(tuple(idx[:, j] for j in reversed(range(n))) + (np.round(nrm2, 9),))
    idx, vec, nrm2 = idx[order], vec[order], nrm2[order]
    for a in (idx, vec, nrm2):
        a.setflags(write=False)
    return LatticeShell(recip, float(radius), idx, vec, nrm2)


def count_upper_bound(recip: ReciprocalLattice, radius: float) -> float:
    """Upper bound on the number of reciprocal points with ``|K| <= radius``.

    Translated copies of the fundamental parallelepiped are disjoint and lie
    inside the ball of radius ``radius + diam``, so the count is at most
    ``vol(ball) / covolume``.
    """
    n = recip.dim
    diam = float(np.sum(np.linalg.norm(recip.matrix, axis=0)))
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * (radius + diam) ** n
    return ball / recip.covolume
