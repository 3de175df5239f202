"""Heat kernels of dt u = (1/2) Laplacian u on R^n, on flat space forms and on the circle.

Space-form kernels are reciprocal-lattice sums truncated at a Euclidean shell
radius chosen from a rigorous tail bound (see :func:`truncation_radius`).
For quotients with nontrivial holonomy the kernel is the image sum over the
holonomy cosets,

    rho_t(x, x0) = 1/|cell| * sum_g sum_K exp(i K.(x - g x0) - |K|^2 t / 2),

which is invariant in ``x`` under the whole group and integrates to one over the
quotient; for tori it reduces to the single lattice sum ``1/V sum_K ...``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import InvalidParameters, TruncationCapExceeded
from .fourier import as_points
from .lattice import LatticeShell, ReciprocalLattice, count_upper_bound, enumerate_shell
from .spaceform import SpaceFormSpec, apply

DEFAULT_TOL = 1e-14
MAX_LATTICE_POINTS = 10 ** 6
# imaginary residue tolerated (relative) before a "real" kernel value is rejected
_IMAG_RESIDUE = 1e-12


class Truncation(NamedTuple):
    radius: float
    capped: bool


@dataclass(frozen=True)
class HeatKernelParams:
    """Diffusion time, base point and truncation tolerance of a kernel evaluation."""

    t: float
    base: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        _check_t(self.t)
        if not self.tol > 0:
            raise InvalidParameters("tol must be positive")
        object.__setattr__(self, "base", np.atleast_1d(np.asarray(self.base)))

    def radius(self, recip: ReciprocalLattice, volume: float) -> float:
        imag = float(np.linalg.norm(np.imag(self.base)))
        return truncation_radius(self.t, self.tol, recip, imag, volume).radius


def _check_t(t):
    if not (t > 0 and math.isfinite(t)):
        raise InvalidParameters(f"diffusion time must be positive and finite, got {t}")


def cap_radius(recip: ReciprocalLattice, max_points: int = MAX_LATTICE_POINTS) -> float:
    """Radius whose ball holds about ``max_points`` reciprocal points."""
    n = recip.dim
    ball_unit = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return (max_points * recip.covolume / ball_unit) ** (1.0 / n)


def tail_bound(R: float, t: float, recip: ReciprocalLattice, imag_bound: float = 0.0) -> float:
    """Upper bound on ``sum_{|K| > R} exp(|K| b - |K|^2 t / 2)``.

    With ``N(r) <= c (r + d)^n`` (``count_upper_bound``) and ``f`` decreasing past
    ``r* = b / t``, summation by parts gives ``tail <= int_R^inf N(r) (-f'(r)) dr``.
    Below ``r*`` every term is bounded by ``f(r*)``.
    """
    b = imag_bound
    r_star = b / t

    def f(r):
        return math.exp(r * b - 0.5 * t * r * r)

    def integrand(r):
        return count_upper_bound(recip, r) * (r * t - b) * f(r)

    start = max(R, r_star)
    extra = count_upper_bound(recip, r_star) * f(r_star) if R < r_star else 0.0
    hi = start + 40.0 / math.sqrt(t) + 10.0
    val, _ = integrate.quad(integrand, start, hi, limit=200, epsabs=0.0, epsrel=1e-10)
    return extra + val


def truncation_radius(t: float, tol: float, recip: ReciprocalLattice, imag_bound: float = 0.0,
                      volume: float = 1.0, max_points: int = MAX_LATTICE_POINTS) -> Truncation:
    """Smallest shell radius whose analytic tail bound is below ``tol * volume``.

    Returns the capped radius with ``capped=True`` when even the hard cap (the
    radius enclosing ``max_points`` lattice points) does not meet the bound.
    """
    _check_t(t)
    if not tol > 0 or imag_bound < 0:
        raise InvalidParameters("tol must be positive and imag_bound nonnegative")
    # round the growth bound up so nearby requests share a cache entry
    imag_bound = math.ceil(imag_bound * 64.0) / 64.0
    return _truncation_radius(float(t), float(tol), recip.matrix.tobytes(), recip.dim, imag_bound,
                              float(volume), int(max_points))


@functools.lru_cache(maxsize=1024)
def _truncation_radius(t, tol, matrix_bytes, n, imag_bound, volume, max_points) -> Truncation:
    recip = ReciprocalLattice(np.frombuffer(matrix_bytes, dtype=float).reshape(n, n).copy())
    target = tol * volume
    cap = cap_radius(recip, max_points)
    if tail_bound(0.0, t, recip, imag_bound) < target:
        return Truncation(0.0, False)
    if tail_bound(cap, t, recip, imag_bound) >= target:
        return Truncation(cap, True)
    lo, hi = 0.0, cap
    while hi - lo > 1e-3 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if tail_bound(mid, t, recip, imag_bound) < target:
            hi = mid
        else:
            lo = mid
    return Truncation(hi, False)


@functools.lru_cache(maxsize=256)
def _cached_shell(matrix_bytes: bytes, n: int, radius: float) -> LatticeShell:
    mat = np.frombuffer(matrix_bytes, dtype=float).reshape(n, n)
    return enumerate_shell(ReciprocalLattice(mat.copy()), radius)


def kernel_shell(recip: ReciprocalLattice, t: float, tol: float, volume: float,
                 imag_bound: float = 0.0) -> LatticeShell:
    trunc = truncation_radius(t, tol, recip, imag_bound, volume)
    if trunc.capped:
        raise TruncationCapExceeded(
            f"lattice sum needs more than {MAX_LATTICE_POINTS} points for t={t}, tol={tol}, "
            f"|Im z|<={imag_bound}")
    return _cached_shell(recip.matrix.tobytes(), recip.dim, round(trunc.radius, 12))


def rho_euclidean(x, x0, t: float, n: int | None = None) -> np.ndarray:
    """``(2 pi t)^(-n/2) exp(-|x - x0|^2 / 2t)`` on R^n."""
    _check_t(t)
    if n is None:
        n = 1 if np.ndim(x) == 0 or np.ndim(x0) == 0 else np.shape(x)[-1]
    d = as_points(x, n) - as_points(x0, n)
    return (2 * math.pi * t) ** (-n / 2) * np.exp(-np.einsum("...i,...i->...", d, d) / (2 * t))


def _lattice_sum(diff: np.ndarray, shell: LatticeShell, t: float) -> np.ndarray:
    """``sum_K exp(i K.diff - |K|^2 t/2)`` for points ``diff`` (trailing axis n).

    Real ``diff`` takes a cosine sum: shells are symmetric under ``K -> -K``.
    """
    decay = -0.5 * t * shell.norm2
    real = not np.iscomplexobj(diff)
    if real:
        # keep one of each pair +-K, doubled
        idx = shell.indices
        nz = idx != 0
        first = np.where(nz.any(axis=1), idx[np.arange(len(idx)), np.argmax(nz, axis=1)], 1)
        half = first > 0
        vecs = shell.vectors[half]
        weights = np.where(np.any(nz[half], axis=1), 2.0, 1.0) * np.exp(decay[half])

    def block(d):
        if real:
            return np.cos(d @ vecs.T) @ weights
        # one exponent per term: growth in Im(diff) and heat decay must not overflow separately
        return np.exp(1j * (d @ shell.vectors.T) + decay).sum(axis=-1)

    flat = diff.reshape(-1, diff.shape[-1])
    step = max(1, 2 ** 22 // max(len(decay), 1))
    if flat.shape[0] <= step:
        return block(diff)
    out = np.empty(flat.shape[0], dtype=float if real else complex)
    for s in range(0, flat.shape[0], step):
        out[s: s + step] = block(flat[s: s + step])
    return out.reshape(diff.shape[:-1])


def _images(x0: np.ndarray, spec: SpaceFormSpec, images: bool):
    if not images or spec.holonomy_order == 1:
        return [x0]
    return [apply(g, x0) for g in spec.coset_representatives]


def _spaceform_sum(x, x0, t, spec: SpaceFormSpec, tol, images: bool):
    n = spec.dim
    xp = as_points(x, n)
    x0p = as_points(x0, n)
    imag = float(np.max(np.abs(np.imag(x0p)), initial=0.0)) * math.sqrt(n) + \
        float(np.max(np.abs(np.imag(xp)), initial=0.0)) * math.sqrt(n)
    recip = spec.reciprocal
    if images and spec.holonomy_order > 1:
        prefactor, norm_volume = 1.0 / spec.cell_volume, spec.cell_volume
    else:
        prefactor, norm_volume = 1.0 / spec.volume, spec.volume
    # tolerance is absolute on rho, so scale per image
    shell = kernel_shell(recip, t, tol / max(1, spec.holonomy_order if images else 1), norm_volume, imag)
    total = 0
    for y0 in _images(x0p, spec, images):
        total = total + _lattice_sum(xp - y0, shell, t)
    return prefactor * total


def rho_spaceform(x, x0, t: float, spec: SpaceFormSpec, tol: float = DEFAULT_TOL,
                  images: bool = True) -> np.ndarray:
    """Heat kernel on the space form at real points.

    ``images=False`` gives the bare lattice sum ``1/V sum_K exp(i K.(x-x0) - K^2 t/2)``
    with ``V`` the quotient volume; it coincides with the default for tori.
    """
    _check_t(t)
    val = _spaceform_sum(np.real(x), np.real(x0), t, spec, tol, images)
    scale = np.maximum(1.0, np.abs(val.real))
    if np.any(np.abs(val.imag) > _IMAG_RESIDUE * scale):
        raise ArithmeticError("imaginary residue in a real heat-kernel sum")
    return val.real


def rho_analytic(z, x, t: float, spec: SpaceFormSpec, tol: float = DEFAULT_TOL,
                 images: bool = True) -> np.ndarray:
    """``rho_t^z(x)``: the kernel continued analytically in the base point ``z``.

    The truncation radius absorbs the growth ``exp(|K| |Im z|)`` of the terms.
    """
    _check_t(t)
    return _spaceform_sum(np.asarray(x), np.asarray(z, dtype=complex), t, spec, tol, images)


def rho_analytic_matrix(z, x, t: float, spec: SpaceFormSpec, tol: float = DEFAULT_TOL,
                        images: bool = True) -> np.ndarray:
    """``M[i, j] = rho_t^{z_i}(x_j)`` for complex ``z`` and real ``x``.

    Factorises each term as ``exp(i K.x_j) * exp(-i K.g z_i - K^2 t/2)`` so the
    table costs one matrix product instead of a (points, nodes, terms) array.
    """
    _check_t(t)
    n = spec.dim
    zp = as_points(np.asarray(z, dtype=complex), n).reshape(-1, n)
    xp = as_points(np.real(x), n).reshape(-1, n)
    imag = float(np.max(np.abs(zp.imag), initial=0.0)) * math.sqrt(n)
    if images and spec.holonomy_order > 1:
        prefactor, norm_volume = 1.0 / spec.cell_volume, spec.cell_volume
    else:
        prefactor, norm_volume = 1.0 / spec.volume, spec.volume
    shell = kernel_shell(spec.reciprocal, t, tol / max(1, spec.holonomy_order if images else 1), norm_volume, imag)
    K = shell.vectors
    left = 0
    for y0 in _images(zp, spec, images):
        left = left + np.exp(-1j * (y0 @ K.T) - 0.5 * t * shell.norm2)
    return prefactor * (left @ np.exp(1j * (xp @ K.T)).T)


# -log of the relative tail kept by the extended-precision circle sum
_LD_TAIL = 50.0


def rho_s1(theta, theta0, t: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``(1/2pi) sum_k exp(i k (theta - theta0) - k^2 t / 2)``.

    Accepts complex ``theta0`` (analytic continuation); the result is real when
    both arguments are.
    """
    _check_t(t)
    d = np.asarray(theta) - np.asarray(theta0)
    imag = float(np.max(np.abs(np.imag(d)), initial=0.0))
    trunc = truncation_radius(t, tol, ReciprocalLattice([[1.0]]), imag, 2 * math.pi)
    if trunc.capped:
        raise TruncationCapExceeded(f"circle kernel sum needs too many terms for t={t}")
    kmax = int(math.floor(trunc.radius + 1e-12))
    if np.isrealobj(d):
        # paired cosine sum in extended precision: near the antipode the terms
        # cancel to ~1e-7 of their size at small t; the tail is cut far below
        # tol for the same reason
        kmax = max(kmax, int(math.ceil(math.sqrt(2 * _LD_TAIL / t))))
        k = np.arange(1, kmax + 1, dtype=np.longdouble)
        dl = d.astype(np.longdouble)[..., None]
        w = np.exp(-0.5 * np.longdouble(t) * k * k)
        val = (1 + 2 * (np.cos(dl * k) * w).sum(axis=-1)) / np.longdouble(2 * math.pi)
        return val.astype(float)
    k = np.arange(-kmax, kmax + 1)
    return np.exp(1j * d[..., None] * k - 0.5 * t * k * k).sum(axis=-1) / (2 * math.pi)


def nu_euclidean(z, z0, t: float, n: int | None = None) -> np.ndarray:
    """``(2 pi t)^(-n) exp(-|z - z0|^2 / 2t)`` on C^n."""
    _check_t(t)
    if n is None:
        n = 1 if np.ndim(z) == 0 or np.ndim(z0) == 0 else np.shape(z)[-1]
    d = as_points(z, n) - as_points(z0, n)
    return (2 * math.pi * t) ** (-n) * np.exp(-np.sum(np.abs(d) ** 2, axis=-1) / (2 * t))


def gaussian_factor(y, t: float, n: int) -> np.ndarray:
    """``(2 pi t)^(-n/2) exp(-|y|^2 / 2t)``, the imaginary-direction factor of nu."""
    yp = as_points(y, n)
    return (2 * math.pi * t) ** (-n / 2) * np.exp(-np.einsum("...i,...i->...", yp, yp) / (2 * t))


def nu_complexified(z, z0, t: float, spec: SpaceFormSpec | None = None, tol: float = DEFAULT_TOL,
                    n: int | None = None, images: bool = True) -> np.ndarray:
    """Heat kernel of the complexified space ``Q x R^n`` (or of C^n when ``spec`` is None).

    For space forms this is ``rho_t^{Re z0}(Re z)`` times the Gaussian in
    ``Im(z - z0)``.
    """
    if spec is None:
        return nu_euclidean(z, z0, t, n)
    _check_t(t)
    z = np.asarray(z, dtype=complex)
    z0 = np.asarray(z0, dtype=complex)
    real = rho_spaceform(z.real, z0.real, t, spec, tol, images)
    return real * gaussian_factor(z.imag - z0.imag, t, spec.dim)
