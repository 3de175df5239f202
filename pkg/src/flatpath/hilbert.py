"""The weighted space L^2(Q, rho_t) and the holomorphic space HL^2(Q_C, nu_{t/2}).

Both inner products, the transform between them, reproducing kernels and the
integral-kernel calculus of operators are available in two independent forms
wherever possible: a closed coefficient formula and a quadrature realization.
Tests hold the two against each other.

Conventions
-----------
* Points of 1-D spaces are plain (complex) arrays; ``n >= 2`` uses a trailing axis.
* Operator kernels are called as ``K(z, wbar)``: holomorphic in both arguments,
  with ``wbar`` the complex conjugate of the second point.
* The holomorphic measure is ``nu_{t/2}^{x0}``: the heat kernel at time ``t/2``
  on the cell times ``(pi t)^(-n/2) exp(-|y|^2/t)`` in the imaginary directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft as sp_fft

from . import heatkernel as hk
from .errors import InvalidParameters, NotConverged, UnderResolvedQuadrature
from .fourier import FourierFunction, as_points, strip_points
from .lattice import LatticeBasis, enumerate_shell
from .quadrature import (GAUSS_LADDER, QuadratureRule, cell_nodes_for, check_gaussian_rule, gauss_nodes_for,
                         gaussian_weighted, product_rule, quotient_trapezoid)
from .spaceform import SpaceFormSpec, apply

# relative size of a shell's contribution at which the basis-sum kernel stops
BASIS_STOP_RTOL = 1e-10
_GAUSS_RTOL = 1e-13


@dataclass(frozen=True)
class BasePoint:
    """Real base point of the weighted measures, inside the closed centred cell."""

    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))

    def check_in(self, basis: LatticeBasis):
        frac = basis.fractional(self.x0)
        if np.any(np.abs(frac) > 0.5 + 1e-12):
            raise InvalidParameters(f"base point {self.x0.tolist()} lies outside the closed cell")


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True)
class SpaceFormSpace:
    """Holomorphic quantization data on a compact space form: ``(Q, t, x0)``."""

    spec: SpaceFormSpec
    t: float
    x0: np.ndarray = None
    tol: float = hk.DEFAULT_TOL
    images: bool = True
    _basis_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise InvalidParameters(f"t must be positive, got {self.t}")
        x0 = np.zeros(self.spec.dim) if self.x0 is None else self.x0
        base = BasePoint(x0)
        if base.x0.size != self.spec.dim:
            raise InvalidParameters("base point dimension does not match the space form")
        base.check_in(self.spec.translation_basis)
        object.__setattr__(self, "x0", base.x0)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def recip(self):
        return self.spec.reciprocal

    @property
    def base(self):
        """Base point in the package's point convention (scalar in 1-D)."""
        return self.x0[0] if self.dim == 1 else self.x0

    def base_images(self) -> np.ndarray:
        """``g x0`` for every holonomy coset representative, shape ``(m, n)``."""
        if not self.images:
            return self.x0[None, :]
        return np.array([apply(g, self.x0) for g in self.spec.coset_representatives])

    def rho(self, x, time: float | None = None) -> np.ndarray:
        return hk.rho_spaceform(x, self.base, self.t if time is None else time, self.spec, self.tol, self.images)

    def rho_at(self, z, x, time: float | None = None) -> np.ndarray:
        """``rho_t^z(x)`` for complex base points ``z``."""
        return hk.rho_analytic(z, x, self.t if time is None else time, self.spec, self.tol, self.images)

    def index_bandwidth(self, time: float, imag_bound: float = 0.0) -> int:
        """Largest integer lattice coordinate inside the kernel truncation shell."""
        R = hk.truncation_radius(time, self.tol, self.recip, imag_bound, self.spec.volume).radius
        s_min = np.linalg.svd(self.recip.matrix, compute_uv=False)[-1]
        return int(math.floor(R / s_min + 1e-12))

    def cell_rule(self, N: int | None = None) -> QuadratureRule:
        if N is None:
            N = cell_nodes_for(self.index_bandwidth(self.t))
        return quotient_trapezoid(self.spec, N)

    def holomorphic_rule(self, kmax: float = 0.0, mode_bound: float = 0.0, nx: int | None = None,
                         ny: int | None = None) -> QuadratureRule:
        """Product rule on ``Q_C`` whose weights include ``nu_{t/2}^{x0}``.

        ``kmax`` bounds the growth rate ``|K_d + K'_d|`` of integrands in each
        imaginary direction and fixes the Gauss-Hermite order (checked against
        the exactness sentinel); ``mode_bound`` is the largest integer lattice
        coordinate of the integrand on the cell, excluding the weight itself.
        """
        half = 0.5 * self.t
        if nx is None:
            nx = cell_nodes_for(mode_bound + self.index_bandwidth(half))
        if ny is None:
            ny = gauss_nodes_for(kmax, self.t, _GAUSS_RTOL)
        else:
            check_gaussian_rule(ny, self.t, kmax, 1e-10)
        cell = quotient_trapezoid(self.spec, nx)
        cell = cell.reweighted(self.rho(strip_points(cell.nodes, self.dim), half))
        rule = product_rule(cell, gaussian_weighted(self.t, self.dim, ny))
        return QuadratureRule("Product", rule.nodes, rule.weights, ("Q_C", self.spec.family, nx, ny), rule.factors)

    def kernel(self, method: str | None = None, **kwargs) -> "OperatorKernel":
        return reproducing_kernel(self, method=method, **kwargs)


@dataclass(frozen=True)
class EuclideanSpace:
    """Segal-Bargmann data on C^n: kernel ``exp((z-x0).(wbar-x0)/t)``."""

    t: float
    n: int = 1
    x0: np.ndarray = None

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise InvalidParameters(f"t must be positive, got {self.t}")
        x0 = np.zeros(self.n) if self.x0 is None else np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", x0)

    @property
    def dim(self) -> int:
        return self.n

    def holomorphic_rule(self, kmax: float = 0.0, degree: int = 0, N: int | None = None) -> QuadratureRule:
        """Gauss-Hermite in every real coordinate against ``nu_{t/2}^{x0}`` on C^n."""
        if N is None:
            N = gauss_nodes_for(kmax, self.t, _GAUSS_RTOL, minimum=max(24, degree + 8))
        else:
            check_gaussian_rule(N, self.t, kmax, 1e-10)
        g = gaussian_weighted(self.t, self.n, N)
        rule = product_rule(g, g)
        nodes = rule.nodes.copy()
        nodes[:, : self.n] += self.x0
        return QuadratureRule("EuclideanGaussian", nodes, rule.weights, ("C^n", self.n, N))

    def kernel(self, **_) -> "OperatorKernel":
        return reproducing_kernel(self)


# ---------------------------------------------------------------------------
# operator kernels


class OperatorKernel:
    """An integral kernel ``K_A(z, wbar)`` of an operator on the holomorphic space.

    ``func(z, wbar)`` must broadcast over batch axes (points in the package
    convention). ``matrix(zs, wbars)`` returns the ``(len(zs), len(wbars))``
    table; kernels with low-rank structure override it.
    """

    def __init__(self, func: Callable, dim: int = 1, name: str = "", matrix: Callable | None = None):
        self._func = func
        self.dim = dim
        self.name = name
        self._matrix = matrix

    def __repr__(self):
        return f"OperatorKernel({self.name or self._func!r}, dim={self.dim})"

    def __call__(self, z, wbar):
        return self._func(np.asarray(z, dtype=complex), np.asarray(wbar, dtype=complex))

    def matrix(self, zs, wbars) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        wbars = np.asarray(wbars, dtype=complex)
        if self._matrix is not None:
            return self._matrix(zs, wbars)
        if self.dim == 1:
            return self(zs[:, None], wbars[None, :])
        return self(zs[:, None, :], wbars[None, :, :])

    def hermitian_defect(self, z, w) -> float:
        """``max |K(z, conj w) - conj K(w, conj z)|`` over the given point pairs."""
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        return float(np.max(np.abs(self(z, np.conj(w)) - np.conj(self(w, np.conj(z))))))

    @classmethod
    def zero(cls, dim: int = 1) -> "OperatorKernel":
        def func(z, wbar):
            shape = np.broadcast_shapes(np.shape(z)[: np.ndim(z) - (dim > 1)], np.shape(wbar)[: np.ndim(wbar) - (dim > 1)])
            return np.zeros(shape, dtype=complex)
        return cls(func, dim, "zero")


def _pairing(z, wbar, n):
    return np.sum(as_points(z, n) * as_points(wbar, n), axis=-1)


def euclidean_kernel(t: float, n: int = 1, x0=None, scale: complex = 1.0) -> OperatorKernel:
    """``exp(scale * (z - x0).(wbar - x0) / t)``; ``scale=1`` is the reproducing kernel."""
    x0 = np.zeros(n) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    shift = x0[0] if n == 1 else x0

    def func(z, wbar):
        return np.exp(scale * _pairing(z - shift, wbar - shift, n) / t)
    return OperatorKernel(func, n, f"exp({scale}*z.wbar/{t})")


# ---------------------------------------------------------------------------
# inner products


def _require_same_lattice(space: SpaceFormSpace, *fs: FourierFunction):
    for f in fs:
        if not np.allclose(f.recip.matrix, space.recip.matrix, rtol=0, atol=1e-12):
            raise InvalidParameters("function lattice does not match the space form")


def _pair_sum(f: FourierFunction, g: FourierFunction, space: SpaceFormSpace, x_time: float,
              y_time: float | None) -> complex:
    """Closed-form double sum shared by both inner products.

    Sums ``conj(a_K) b_K' exp(-i (K-K').g x0 - |K-K'|^2 x_time/2 [+ |K+K'|^2 y_time/4])``
    averaged over holonomy images, with each function's heat factor folded into
    the exponent.
    """
    Ka, Kb = f.vectors, g.vectors
    d = Ka[:, None, :] - Kb[None, :, :]
    expo = -0.5 * x_time * np.einsum("ijk,ijk->ij", d, d)
    if y_time is not None:
        s = Ka[:, None, :] + Kb[None, :, :]
        expo = expo + 0.25 * y_time * np.einsum("ijk,ijk->ij", s, s)
    expo = expo - 0.5 * f.heat_time * f.norm2[:, None] - 0.5 * g.heat_time * g.norm2[None, :]
    imgs = space.base_images()
    phase = np.mean(np.exp(-1j * np.einsum("ijk,mk->mij", d, imgs)), axis=0)
    amp = np.exp(expo) * phase
    return complex(np.conj(f.coeffs) @ amp @ g.coeffs)


def inner_Q(f: FourierFunction, g: FourierFunction, space: SpaceFormSpace, method: str = "closed",
            N: int | None = None) -> complex:
    """``<f, g>_Q = int_Q conj(f) g rho_t^{x0} dx``.

    ``method="closed"`` evaluates the coefficient double sum, ``"quadrature"`` the
    periodic trapezoid rule on the translation cell (divided by the holonomy
    order; valid for Gamma-invariant ``f``, ``g``).
    """
    _require_same_lattice(space, f, g)
    if method == "closed":
        return _pair_sum(f, g, space, space.t, None)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    if N is None:
        N = cell_nodes_for(f.max_index + g.max_index + space.index_bandwidth(space.t))
    rule = quotient_trapezoid(space.spec, N)
    x = strip_points(rule.nodes, space.dim)
    return complex(rule.integrate(np.conj(f(x)) * g(x) * space.rho(x)))


def _imag_growth(f: FourierFunction, g: FourierFunction) -> float:
    """Largest ``|K_d + K'_d|`` over both supports (per-coordinate exponential rate)."""
    a = np.abs(f.vectors).max(axis=0) if len(f) else 0.0
    b = np.abs(g.vectors).max(axis=0) if len(g) else 0.0
    return float(np.max(a + b))


def _grid_values(f: FourierFunction, space: SpaceFormSpace, nx: int, ys: np.ndarray) -> np.ndarray:
    """``f(x_j + i y)`` on the centred trapezoid grid for every ``y`` in ``ys``.

    Returns shape ``(len(ys), nx**n)`` in the grid order of :func:`periodic_trapezoid`.
    """
    n = space.dim
    shift = -0.5 * space.spec.translation_basis.matrix @ np.ones(n)
    K = f.vectors
    base = f.coeffs * np.exp(1j * (K @ shift) - 0.5 * f.heat_time * f.norm2)
    flatpos = np.ravel_multi_index(tuple((f.indices % nx).T), (nx,) * n)
    unique = np.unique(flatpos).size == flatpos.size
    out = np.empty((ys.shape[0], nx ** n), dtype=complex)
    chunk = max(1, 2 ** 22 // nx ** n)
    for s in range(0, ys.shape[0], chunk):
        yy = ys[s: s + chunk]
        arr = np.zeros((yy.shape[0], nx ** n), dtype=complex)
        coef = base[None, :] * np.exp(-(yy @ K.T))
        if unique:
            arr[:, flatpos] = coef
        else:
            for j in range(yy.shape[0]):
                np.add.at(arr[j], flatpos, coef[j])
        arr = arr.reshape((yy.shape[0],) + (nx,) * n)
        vals = sp_fft.ifftn(arr, axes=tuple(range(1, n + 1)), overwrite_x=True) * nx ** n
        out[s: s + chunk] = vals.reshape(yy.shape[0], -1)
    return out


def inner_QC(psi: FourierFunction, phi: FourierFunction, space: SpaceFormSpace, method: str = "closed",
             nx: int | None = None, ny: int | None = None) -> complex:
    """``<psi, phi> = int_{Q_C} conj(psi) phi nu_{t/2}^{x0} dz``.

    ``"closed"``: ``sum conj(a_K) b_K' e^{-i(K-K').x0} e^{-|K-K'|^2 t/4 + |K+K'|^2 t/4}``.
    ``"quadrature"``: trapezoid x Gauss-Hermite product rule; the Gauss-Hermite
    order is chosen (or checked) against the growth ``exp(|K+K'| y)`` of the
    integrand and :class:`UnderResolvedQuadrature` is raised when it is too low.
    """
    _require_same_lattice(space, psi, phi)
    t = space.t
    if method == "closed":
        return _pair_sum(psi, phi, space, 0.5 * t, t)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    n = space.dim
    kmax = _imag_growth(psi, phi)
    if ny is None:
        ny = gauss_nodes_for(kmax, t, _GAUSS_RTOL)
    else:
        check_gaussian_rule(ny, t, kmax, 1e-10)
    if nx is None:
        # trapezoid is exact once nx exceeds the integrand's index bandwidth;
        # the FFT placement needs nx > 2 * max index
        bound = psi.max_index + phi.max_index + space.index_bandwidth(0.5 * t)
        nx = max(bound + 1, 2 * max(psi.max_index, phi.max_index) + 1, 16)
        nx += nx % 2
    if 2 * max(psi.max_index, phi.max_index) >= nx:
        raise UnderResolvedQuadrature("cell grid too coarse for the functions' modes")
    cell = quotient_trapezoid(space.spec, nx)
    wx = cell.weights * space.rho(strip_points(cell.nodes, n), 0.5 * t)
    gauss = gaussian_weighted(t, n, ny)
    a = _grid_values(psi, space, nx, gauss.nodes)
    b = _grid_values(phi, space, nx, gauss.nodes)
    return complex(gauss.weights @ ((np.conj(a) * b) @ wx))


def norm_Q(f: FourierFunction, space: SpaceFormSpace) -> float:
    return math.sqrt(max(inner_Q(f, f, space).real, 0.0))


# ---------------------------------------------------------------------------
# weighted <-> standard representation, transform


def weighted_from_standard(fs_values, x, space: SpaceFormSpace) -> np.ndarray:
    """``f = f_S / sqrt(rho_t^{x0})`` at the points ``x`` where ``f_S`` was sampled."""
    r = space.rho(x)
    if np.any(r <= 0):
        raise ArithmeticError("heat kernel vanishes at an evaluation point")
    return np.asarray(fs_values) / np.sqrt(r)


def standard_from_weighted(f_values, x, space: SpaceFormSpace) -> np.ndarray:
    r = space.rho(x)
    if np.any(r <= 0):
        raise ArithmeticError("heat kernel vanishes at an evaluation point")
    return np.asarray(f_values) * np.sqrt(r)


def sb_transform(f: FourierFunction, t: float) -> FourierFunction:
    """``c_K -> c_K exp(-|K|^2 t / 2)`` attached to ``exp(i K.z)``.

    The factor is carried as the result's ``heat_time``; evaluate the returned
    function at complex points.
    """
    if not (t > 0 and math.isfinite(t)):
        raise InvalidParameters(f"t must be positive, got {t}")
    return FourierFunction(f.recip, f.indices, f.coeffs, f.heat_time + t)


def sb_transform_quadrature(f: FourierFunction, space: SpaceFormSpace, z, N: int | None = None) -> np.ndarray:
    """``int_Q rho_t^z(x) f(x) dx`` by the periodic trapezoid rule."""
    n = space.dim
    zp = as_points(np.asarray(z, dtype=complex), n)
    imag = float(np.max(np.abs(zp.imag), initial=0.0)) * math.sqrt(n)
    if N is None:
        N = cell_nodes_for(f.max_index + space.index_bandwidth(space.t, imag))
    rule = quotient_trapezoid(space.spec, N)
    x = rule.nodes
    kern = space.rho_at(strip_points(zp[..., None, :], n), strip_points(x, n))
    vals = f(strip_points(x, n))
    return kern @ (rule.weights * vals)


# ---------------------------------------------------------------------------
# reproducing kernels


def invariant_modes(space: SpaceFormSpace, radius: float) -> list:
    """Gamma-invariant symmetrised exponentials with ``|K| <= radius``.

    Each entry is a :class:`FourierFunction` ``(1/m) sum_g exp(i K.(A_g x + a_g))``
    (one per holonomy orbit, zero combinations dropped), normalised in ``L^2(Q)``.
    """
    spec = space.spec
    recip = space.recip
    shell = enumerate_shell(recip, radius)
    seen = set()
    out = []
    m = spec.holonomy_order
    for idx, K in zip(shell.indices, shell.vectors):
        key = tuple(int(v) for v in idx)
        if key in seen:
            continue
        terms = {}
        for g in spec.coset_representatives:
            img = recip.indices_of(K @ g.rotation)
            img_key = tuple(int(v) for v in img)
            seen.add(img_key)
            terms[img_key] = terms.get(img_key, 0) + np.exp(1j * float(K @ g.translation)) / m
        f = FourierFunction.from_dict(recip, terms)
        mask = np.abs(f.coeffs) > 1e-12
        if not mask.any():
            continue
        f = FourierFunction(recip, f.indices[mask], f.coeffs[mask])
        norm = math.sqrt(spec.volume * float(np.sum(np.abs(f.coeffs) ** 2)))
        out.append(f * (1.0 / norm))
    return out


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal functions ``u_i(z) = sum_K U[K, i] exp(i K.z - |K|^2 t/2)``."""

    space: SpaceFormSpace
    indices: np.ndarray
    U: np.ndarray
    shell_ends: tuple
    converged: bool = False

    def __len__(self):
        return self.U.shape[1]

    def functions(self) -> list:
        return [FourierFunction(self.space.recip, self.indices, self.U[:, i], self.space.t) for i in range(len(self))]

    def values(self, z) -> np.ndarray:
        """``u_i(z)`` for every basis element, shape ``batch + (len,)``."""
        n = self.space.dim
        K = self.space.recip.vectors(self.indices)
        zp = as_points(np.asarray(z, dtype=complex), n)
        E = np.exp(1j * (zp @ K.T) - 0.5 * self.space.t * np.einsum("ij,ij->i", K, K))
        return E @ self.U


def _gram_matrix(space: SpaceFormSpace, indices: np.ndarray) -> np.ndarray:
    """Gram matrix of the transformed modes ``exp(i K.z - K^2 t/2)`` under ``nu_{t/2}``.

    Entry ``(K, K')`` is the closed-form inner product; the heat factors cancel
    the Gaussian growth, leaving ``mean_g exp(-i (K-K').g x0 - |K-K'|^2 t/2)``.
    """
    K = space.recip.vectors(indices)
    k2 = np.einsum("ij,ij->i", K, K)
    dist2 = np.maximum(k2[:, None] + k2[None, :] - 2.0 * (K @ K.T), 0.0)
    # mean over images factors as P P^H / m
    P = np.exp(-1j * (K @ space.base_images().T))
    return np.exp(-0.5 * space.t * dist2) * (P @ np.conj(P).T) / P.shape[1]


def _grid_points(space: SpaceFormSpace, N: int) -> np.ndarray:
    n = space.dim
    fr = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(N) / N] * n), indexing="ij")], -1)
    return strip_points(fr @ space.spec.translation_basis.matrix.T, n)


def _inverse_root_band(space: SpaceFormSpace) -> tuple:
    """``(band, N)``: index bandwidth of ``1/sqrt(rho_t^{x0})`` (coefficients above
    1e-16 of the peak) and a grid size resolving it."""
    n = space.dim
    N = 32
    while True:
        inv_root = (1.0 / np.sqrt(space.rho(_grid_points(space, N)))).reshape((N,) * n)
        c = np.abs(np.fft.fftn(inv_root)) / N ** n
        freq = np.abs(np.fft.fftfreq(N, 1.0 / N)).astype(int)
        idx = np.max(np.stack(np.meshgrid(*([freq] * n), indexing="ij")), axis=0)
        band = int(idx[c > 1e-16 * c.max()].max())
        if band < N // 2 - 2 or N >= 1024 // n:
            return band, N
        N *= 2


def iso_transform(f_standard: FourierFunction, space: SpaceFormSpace, grid: int | None = None) -> FourierFunction:
    """``A_t(f_S / sqrt(rho_t^{x0}))``: the holomorphic image of an ``L^2(Q, dx)`` function.

    Sends an orthonormal family of ``L^2(Q, dx)`` to an orthonormal family of the
    holomorphic space; on the circle ``e^{inx}/sqrt(2 pi)`` gives the basis
    ``phi_n``. Coefficients of the quotient come from an FFT on ``grid`` points.
    """
    band, N0 = _inverse_root_band(space)
    if grid is None:
        grid = max(N0, cell_nodes_for(f_standard.max_index + band))
    grid += grid % 2
    L = space.spec.translation_basis.matrix
    vals = f_standard.on_grid(grid, L) * (1.0 / np.sqrt(space.rho(_grid_points(space, grid)))).reshape((grid,) * space.dim)
    w = FourierFunction.from_grid(space.recip, vals)
    # below roundoff of the FFT
    keep = np.abs(w.coeffs) > 1e-16 * np.max(np.abs(w.coeffs))
    w = FourierFunction(w.recip, w.indices[keep], w.coeffs[keep])
    return sb_transform(w, space.t)


def s1_basis_element(space: SpaceFormSpace, n: int) -> FourierFunction:
    """``phi_n``: the holomorphic image of ``e^{inx} / sqrt(2 pi)`` on the circle."""
    if space.dim != 1:
        raise ValueError("phi_n is defined on one-dimensional space forms")
    L = space.spec.translation_basis.matrix[0, 0]
    return iso_transform(FourierFunction.exponential(space.recip, n, 1.0 / math.sqrt(L)), space)


def orthonormal_basis(space: SpaceFormSpace, radius: float, construction: str = "iso", grid: int | None = None,
                      mode_radius: float | None = None, probe=None,
                      stop_rtol: float | None = None) -> OrthonormalBasis:
    """Orthonormal basis of the holomorphic space from invariant exponentials.

    ``construction="iso"``: each invariant exponential ``s`` (orthonormal in
    ``L^2(Q)``) is sent through the weighted isomorphism ``s / sqrt(rho_t^{x0})``
    (Fourier coefficients by FFT on a ``grid``-point mesh, truncated to
    ``|K| <= mode_radius``) and the transform. ``construction="modes"`` transforms
    the invariant exponentials directly. Either way the images are orthonormalised
    in order of ``|K|`` by Gram-Schmidt, each step projected out twice, under the
    closed-form holomorphic inner product; vectors whose residual collapses below
    ``1e-10`` of their norm are dropped as linearly dependent.

    With ``probe`` points and ``stop_rtol`` the construction stops after two
    consecutive shells each add less than ``stop_rtol`` (relative) to
    ``sum_i |u_i(z)|^2`` at every probe point; ``converged`` records the outcome.

    Partial kernel sums converge only geometrically, roughly like
    ``exp(-t |K|)``: the iso images inherit the Fourier decay of ``1/sqrt(rho)``,
    and in either construction the inverse Gram matrix has geometric tails.
    """
    if construction not in ("iso", "modes"):
        raise ValueError(f"unknown construction {construction!r}")
    spec = space.spec
    n = space.dim
    L = spec.translation_basis.matrix
    svals = np.linalg.svd(space.recip.matrix, compute_uv=False)
    r_idx = int(math.ceil(radius / svals[-1]))
    funcs = invariant_modes(space, radius)

    if construction == "modes":
        modes = enumerate_shell(space.recip, radius)
        index_of = {tuple(int(v) for v in m): i for i, m in enumerate(modes.indices)}

        def image(f):
            v = np.zeros(len(modes), dtype=complex)
            for m, c in zip(f.indices, f.coeffs):
                v[index_of[tuple(int(q) for q in m)]] += c
            return v
    else:
        band, N0 = _inverse_root_band(space)
        if mode_radius is None:
            mode_radius = radius + band * svals[0]
        modes = enumerate_shell(space.recip, mode_radius)
        index_of = {tuple(int(v) for v in m): i for i, m in enumerate(modes.indices)}
        if grid is None:
            grid = max(N0, cell_nodes_for(r_idx + band))
        grid += grid % 2
        inv_root = (1.0 / np.sqrt(space.rho(_grid_points(space, grid)))).reshape((grid,) * n)

        def image(f):
            w = FourierFunction.from_grid(space.recip, f.on_grid(grid, L) * inv_root)
            v = np.zeros(len(modes), dtype=complex)
            for m, c in zip(w.indices, w.coeffs):
                j = index_of.get(tuple(int(q) for q in m))
                if j is not None:
                    v[j] += c
            return v

    indices = modes.indices
    G = _gram_matrix(space, indices)
    E = None
    if probe is not None and stop_rtol is not None:
        K = space.recip.vectors(indices)
        zp = as_points(np.asarray(probe, dtype=complex), n).reshape(-1, n)
        E = np.exp(1j * (zp @ K.T) - 0.5 * space.t * np.einsum("ij,ij->i", K, K))
        partial = np.zeros(zp.shape[0])

    # rows are basis vectors so that the leading block stays contiguous
    U = np.zeros((len(funcs), indices.shape[0]), dtype=complex)
    GU = np.zeros_like(U)
    count, ends, small, converged = 0, [], 0, False
    for i, f in enumerate(funcs):
        v = image(f)
        start = math.sqrt(max((np.conj(v) @ G @ v).real, 0.0))
        for _ in range(2):
            v = v - (np.conj(GU[:count]) @ v) @ U[:count]
        gv = G @ v
        nrm = math.sqrt(max((np.conj(v) @ gv).real, 0.0))
        if start > 0.0 and nrm > 1e-10 * start:
            U[count] = v / nrm
            GU[count] = gv / nrm
            count += 1
        shell_done = i + 1 == len(funcs) or funcs[i + 1].max_norm > f.max_norm + 1e-9
        if not shell_done:
            continue
        begin = ends[-1] if ends else 0
        ends.append(count)
        if E is not None and count > begin:
            contrib = np.sum(np.abs(E @ U[begin:count].T) ** 2, axis=-1)
            partial = partial + contrib
            if np.max(contrib / np.maximum(partial, 1e-300)) < stop_rtol:
                small += 1
                if small >= 2:
                    converged = True
                    break
            else:
                small = 0
    return OrthonormalBasis(space, indices, U[:count].T.copy(), tuple(ends), converged)


def _integral_kernel(space: SpaceFormSpace, nx: int | None = None) -> OperatorKernel:
    """``(1/m) int_cell rho_t^z(x) rho_t^{wbar}(x) / rho_t^{x0}(x) dx`` by trapezoid."""
    n = space.dim
    if nx is None:
        nx = cell_nodes_for(4 * space.index_bandwidth(space.t), minimum=64)
    rule = quotient_trapezoid(space.spec, nx)
    x = strip_points(rule.nodes, n)
    w_over_rho = rule.weights / space.rho(x)

    def columns(points):
        pts = as_points(np.asarray(points, dtype=complex), n)
        vals = hk.rho_analytic_matrix(pts.reshape(-1, n), x, space.t, space.spec, space.tol, space.images)
        return vals.reshape(pts.shape[:-1] + (x.shape[0],))

    def func(z, wbar):
        a = columns(z)
        b = columns(wbar)
        return np.sum(a * b * w_over_rho, axis=-1)

    def matrix(zs, wbars):
        return (columns(zs) * w_over_rho) @ columns(wbars).T

    return OperatorKernel(func, n, f"integral kernel ({space.spec.family}, t={space.t})", matrix)


def _basis_kernel(space: SpaceFormSpace, radius: float | None = None, max_radius: float | None = None,
                  probe=None, construction: str | None = None) -> OperatorKernel:
    """Basis-sum kernel, truncated when a whole shell adds < 1e-10 (relative) at ``probe``.

    ``probe`` defaults to points of the strip ``|Im z| <= 1.5``. A fixed ``radius``
    skips the stopping rule. The iso construction is the default in one
    dimension; higher dimensions default to the mode construction, which needs
    no FFT grid and keeps the mode set at the basis radius.
    """
    n = space.dim
    if construction is None:
        construction = "iso" if n == 1 else "modes"
    if radius is not None:
        basis = orthonormal_basis(space, radius, construction)
    else:
        if max_radius is None:
            # partial sums decay roughly like exp(-t |K|) in absolute |K|
            smax = np.linalg.svd(space.recip.matrix, compute_uv=False)[0]
            max_radius = max(24.0 / space.t + 8.0, 3.0 * smax)
        if probe is None:
            rng = np.random.default_rng(7)
            L = space.spec.translation_basis.matrix
            probe = strip_points(rng.random((8, n)) @ L.T + 1j * rng.uniform(-1.5, 1.5, (8, n)), n)
        basis = orthonormal_basis(space, max_radius, construction, probe=probe, stop_rtol=BASIS_STOP_RTOL)
        if not basis.converged:
            raise NotConverged(f"basis-sum reproducing kernel did not converge within radius {max_radius:g}")

    def func(z, wbar):
        return np.sum(basis.values(z) * np.conj(basis.values(np.conj(wbar))), axis=-1)

    def matrix(zs, wbars):
        return basis.values(zs) @ np.conj(basis.values(np.conj(wbars))).T

    return OperatorKernel(func, n, f"basis kernel ({space.spec.family}, t={space.t}, {len(basis)} terms)", matrix)


def reproducing_kernel(space, z=None, wbar=None, method: str | None = None, **kwargs):
    """Reproducing kernel ``K(z, wbar)`` of the holomorphic space.

    Euclidean: ``exp((z - x0).(wbar - x0) / t)`` exactly. Space forms:
    ``method="integral"`` (default on the circle) evaluates
    ``int_Q rho_t^z rho_t^{wbar} / rho_t^{x0} dx`` by quadrature; ``"basis"``
    (default otherwise) sums ``u_i(z) conj(u_i(w))`` over an orthonormal basis.
    Returns the :class:`OperatorKernel`, or its value when ``z`` and ``wbar``
    are given.
    """
    if isinstance(space, EuclideanSpace):
        kern = euclidean_kernel(space.t, space.n, space.x0)
    else:
        if method is None:
            method = "integral" if space.spec.family == "circle" else "basis"
        if method == "integral":
            kern = _integral_kernel(space, **kwargs)
        elif method == "basis":
            kern = _basis_kernel(space, **kwargs)
        else:
            raise ValueError(f"unknown method {method!r}")
    if z is None:
        return kern
    return kern(z, wbar)


# ---------------------------------------------------------------------------
# operator calculus


def _default_rule(space, kmax: float, degree: int = 0) -> QuadratureRule:
    if isinstance(space, EuclideanSpace):
        return space.holomorphic_rule(kmax=kmax, degree=degree)
    return space.holomorphic_rule(kmax=kmax, mode_bound=degree)


def operator_rule(space, z_extent: float = 2.0, phi: FourierFunction | None = None,
                  degree: int = 0) -> QuadratureRule:
    """Rule resolving kernels whose first argument stays within ``|Im z| <= z_extent``.

    For space forms the kernel's growth in the integration variable is bounded by
    its lattice-sum bandwidth; for C^n by ``|z| / t``.
    """
    if isinstance(space, EuclideanSpace):
        return space.holomorphic_rule(kmax=2.0 * z_extent / space.t + 1.0, degree=degree)
    band_idx = space.index_bandwidth(space.t, z_extent * math.sqrt(space.dim))
    s_max = np.linalg.svd(space.recip.matrix, compute_uv=False)[0]
    kmax = band_idx * s_max
    mode = band_idx
    if phi is not None and len(phi):
        # size of each mode's contribution under nu_{t/2}; ignore negligible ones
        with np.errstate(divide="ignore"):
            logw = np.log(np.abs(phi.coeffs)) - (0.5 * phi.heat_time - 0.25 * space.t) * phi.norm2
        live = logw > np.max(logw) - 39.0
        # kernel modes near those of phi dominate, so the growth rate doubles
        kmax += 2.0 * float(np.max(np.abs(phi.vectors[live])))
        mode += 2 * int(np.max(np.abs(phi.indices[live])))
    return space.holomorphic_rule(kmax=kmax, mode_bound=mode)


def _apply_with_rule(K_A: OperatorKernel, phi, n: int, zp, rule: QuadratureRule) -> np.ndarray:
    w = strip_points(rule.complex_points(), n)
    vals = rule.weights * phi(w)
    flat = strip_points(zp.reshape(-1, n), n)
    # bounded memory for large product rules
    step = max(4096, 2 ** 21 // max(len(flat), 1))
    out = np.zeros(len(flat), dtype=complex)
    for s in range(0, len(vals), step):
        out += K_A.matrix(flat, np.conj(w[s: s + step])) @ vals[s: s + step]
    return out


def apply_operator(K_A: OperatorKernel, phi, space, z, rule: QuadratureRule | None = None,
                   rtol: float = 1e-10) -> np.ndarray:
    """``(A phi)(z) = int K_A(z, wbar) phi(w) nu_{t/2}^{x0}(w) dw`` at the points ``z``.

    ``phi`` is any vectorised holomorphic function. Without an explicit ``rule``
    one is built from the extent of ``z`` (and ``phi``'s modes when it is a
    :class:`FourierFunction`); the Gauss-Hermite order then climbs the ladder
    until successive results agree to ``rtol`` or stop improving.
    """
    n = space.dim
    z = np.asarray(z, dtype=complex)
    zp = as_points(z, n)
    shape = z.shape if n == 1 else z.shape[:-1]
    if rule is not None:
        return _apply_with_rule(K_A, phi, n, zp, rule).reshape(shape)
    extent = float(np.max(np.abs(zp.imag if not isinstance(space, EuclideanSpace) else zp), initial=0.0))
    rule = operator_rule(space, max(extent, 0.5), phi if isinstance(phi, FourierFunction) else None,
                         degree=getattr(phi, "degree", 0))
    order = rule.cell[-1]
    prev = _apply_with_rule(K_A, phi, n, zp, rule)
    last_change = math.inf
    for N in (m for m in GAUSS_LADDER if m > order):
        if isinstance(space, EuclideanSpace):
            rule = space.holomorphic_rule(N=N)
        else:
            rule = space.holomorphic_rule(nx=rule.cell[2], ny=N)
        cur = _apply_with_rule(K_A, phi, n, zp, rule)
        change = float(np.max(np.abs(cur - prev)) / max(np.max(np.abs(cur)), 1e-300))
        prev = cur
        if change <= rtol or change > 0.5 * last_change:
            break
        last_change = change
    return prev.reshape(shape)


def compose_kernels(K_A: OperatorKernel, K_B: OperatorKernel, space, rule: QuadratureRule | None = None,
                    z_extent: float = 2.0) -> OperatorKernel:
    """``K_AB(z, wbar) = int K_A(z, vbar) K_B(v, wbar) nu_{t/2}^{x0}(v) dv`` by quadrature."""
    n = space.dim
    if rule is None:
        rule = operator_rule(space, z_extent)
    v = strip_points(rule.complex_points(), n)
    wts = rule.weights

    def func(z, wbar):
        z, wbar = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(wbar, dtype=complex))
        zp = as_points(z, n)
        wp = as_points(wbar, n)
        batch = zp.shape[:-1]
        zf = strip_points(zp.reshape(-1, n), n)
        wf = strip_points(wp.reshape(-1, n), n)
        left = K_A.matrix(zf, np.conj(v))            # (B, P)
        right = K_B.matrix(v, wf)                    # (P, B)
        return np.einsum("bp,p,pb->b", left, wts, right).reshape(batch)

    def matrix(zs, wbars):
        return (K_A.matrix(zs, np.conj(v)) * wts) @ K_B.matrix(v, wbars)

    return OperatorKernel(func, n, f"({K_A.name}) o ({K_B.name})", matrix)
