"""Time-sliced holomorphic propagators.

One slice of duration ``eps = T/n`` has kernel ``S(z, wbar) = exp(-i eps h(z, wbar)) K(z, wbar)``
with ``h`` the normal symbol of the Hamiltonian; the sliced propagator ``G_n``
composes ``n`` slices under the holomorphic measure. For the renormalized
oscillator ``H = z d/dz`` on C (``h = z wbar``, ``t = 1``) the composition
closes in Gaussian form, ``G_n = exp(z_T conj(z_0) (1 - iT/n)^n)``, and tends to
the exact kernel ``exp(z wbar e^{-iT})`` with first-order error in ``1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameters, UnderResolvedQuadrature
from .hilbert import EuclideanSpace, OperatorKernel, SpaceFormSpace, euclidean_kernel, operator_rule
from .quadrature import GAUSS_LADDER, disk_rule

ENGINES = ("Quadrature", "GaussianClosedForm")


class NormalSymbol:
    """``h(z, wbar)``; ``bilinear`` is ``c`` when ``h = c z wbar`` exactly."""

    def __init__(self, func: Callable, name: str = "", bilinear: complex | None = None):
        self._func = func
        self.name = name
        self.bilinear = bilinear

    def __call__(self, z, wbar):
        return self._func(np.asarray(z, dtype=complex), np.asarray(wbar, dtype=complex))

    def __repr__(self):
        return f"NormalSymbol({self.name})"


def oscillator_symbol(c: complex = 1.0) -> NormalSymbol:
    """``h = c z wbar``, the symbol of ``c z d/dz``."""
    c = complex(c)
    return NormalSymbol(lambda z, wbar: c * z * wbar, f"{c}*z*wbar", c)


def constant_symbol(c: complex) -> NormalSymbol:
    c = complex(c)
    return NormalSymbol(lambda z, wbar: np.full(np.broadcast_shapes(np.shape(z), np.shape(wbar)), c),
                        f"const {c}")


def normal_symbol(K_H: OperatorKernel, K: OperatorKernel, probe=None) -> NormalSymbol:
    """``h = K_H / K`` pointwise.

    Raises :class:`ZeroDivisionError` where ``K`` vanishes. When the ratio is
    ``c z wbar`` on the 1-D probe points (to 1e-12) the symbol is tagged bilinear so
    that the closed-form engine accepts it.
    """
    def func(z, wbar):
        den = K(z, wbar)
        if np.any(den == 0):
            raise ZeroDivisionError("reproducing kernel vanishes at a requested point")
        return K_H(z, wbar) / den

    bilinear = None
    if K.dim == 1:
        if probe is None:
            rng = np.random.default_rng(11)
            probe = (rng.normal(size=6) + 1j * rng.normal(size=6), rng.normal(size=6) + 1j * rng.normal(size=6))
        z, wbar = probe
        try:
            ratio = func(z, wbar) / (z * wbar)
        except ZeroDivisionError:
            ratio = np.array([np.nan])
        if np.all(np.isfinite(ratio)) and np.max(np.abs(ratio - ratio[0])) <= 1e-12 * max(1.0, abs(ratio[0])):
            bilinear = complex(ratio[0])
    return NormalSymbol(func, f"{K_H.name}/{K.name}", bilinear)


def oscillator_hamiltonian_kernel(t: float = 1.0) -> OperatorKernel:
    """``K_H = (z wbar / t) exp(z wbar / t)``, the kernel of ``z d/dz`` on C."""
    def func(z, wbar):
        s = z * wbar / t
        return s * np.exp(s)
    return OperatorKernel(func, 1, "z wbar exp(z wbar)")


def exact_oscillator_kernel(z, wbar, T: float, t: float = 1.0) -> np.ndarray:
    """``exp(z wbar e^{-iT} / t)``: the spectral sum of ``e^{-imT} (z wbar)^m / m!``."""
    return np.exp(np.asarray(z, dtype=complex) * np.asarray(wbar, dtype=complex) * np.exp(-1j * T) / t)


@dataclass(frozen=True)
class SlicedPropagatorRequest:
    z_T: complex
    z_0: complex
    T: float
    n_slices: int
    engine: str = "GaussianClosedForm"

    def __post_init__(self):
        if int(self.n_slices) != self.n_slices or self.n_slices < 1:
            raise InvalidParameters(f"n_slices must be a positive integer, got {self.n_slices}")
        if self.engine not in ENGINES:
            raise InvalidParameters(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not math.isfinite(self.T):
            raise InvalidParameters("T must be finite")
        object.__setattr__(self, "n_slices", int(self.n_slices))
        object.__setattr__(self, "z_T", self.z_T)
        object.__setattr__(self, "z_0", self.z_0)


def _compose_power(beta: complex, n: int, t: float) -> complex:
    """Exponent of ``n`` composed kernels ``exp(beta z wbar)``.

    Composition obeys ``exp(a z vbar) o exp(b v wbar) = exp(t a b z wbar)``, so
    ``n`` slices give ``t^(n-1) beta^n``; it is formed by repeated squaring
    (composing the half-propagator with itself) to keep rounding at ``O(log n)``.
    """
    g = t * beta
    result = 1.0 + 0j
    base = g
    k = n
    while k:
        if k & 1:
            result *= base
        base *= base
        k >>= 1
    return result / t


def _closed_form(req: SlicedPropagatorRequest, h: NormalSymbol, t: float) -> complex:
    if h.bilinear is None:
        raise InvalidParameters("the Gaussian closed-form engine needs a bilinear symbol h = c z wbar")
    eps = req.T / req.n_slices
    beta = 1.0 / t - 1j * eps * h.bilinear
    return complex(np.exp(_compose_power(beta, req.n_slices, t) * complex(req.z_T) * np.conj(complex(req.z_0))))


def euclidean_disk_rule(z_T, z_0, t: float = 1.0, tol: float = 1e-12, n_radial: int = 64,
                        n_angular: int = 64):
    """Disk rule carrying the weight ``(pi t)^-1 exp(-|v|^2 / t)``.

    Radius ``sqrt(t) * (max(4, 2|z_T|, 2|z_0|) + sqrt(2 ln(1/tol)))`` (endpoints in
    units of ``sqrt(t)``), beyond which the Gaussian tail is below ``tol``.
    """
    scale = math.sqrt(t)
    R = scale * (max(4.0, 2 * abs(z_T) / scale, 2 * abs(z_0) / scale) + math.sqrt(2 * math.log(1.0 / tol)))
    rule = disk_rule(R, n_radial, n_angular)
    v = rule.nodes[:, 0] + 1j * rule.nodes[:, 1]
    w = rule.weights * np.exp(-np.abs(v) ** 2 / t) / (math.pi * t)
    return v, w


def _chain(slice_matrix: Callable, v: np.ndarray, w: np.ndarray, z_T, z_0, n: int) -> complex:
    """``int ... int S(z_T, v_{n-1}) S(v_{n-1}, v_{n-2}) ... S(v_1, z_0)`` with weights ``w``."""
    zT = np.atleast_1d(np.asarray(z_T, dtype=complex))
    z0bar = np.conj(np.atleast_1d(np.asarray(z_0, dtype=complex)))
    if n == 1:
        return complex(slice_matrix(zT, z0bar)[0, 0])
    f = slice_matrix(v, z0bar)[:, 0]
    if n > 2:
        M = slice_matrix(v, np.conj(v)) * w[None, :]
        for _ in range(n - 2):
            f = M @ f
    return complex(((slice_matrix(zT, np.conj(v)) * w[None, :]) @ f)[0])


def propagate_sliced(req: SlicedPropagatorRequest, h: NormalSymbol, t: float = 1.0, space=None,
                     tol: float = 1e-12, n_radial: int = 64, n_angular: int = 64,
                     sentinel_rtol: float = 1e-9) -> complex:
    """Time-sliced propagator ``G_n(z_T, conj z_0; T)``.

    ``space=None`` (or a 1-D :class:`EuclideanSpace`) is the Segal-Bargmann plane with
    kernel ``exp(z wbar / t)``. A 1-D :class:`SpaceFormSpace` runs the same chain with
    the space form's kernel and product rule on ``Q_C``; this path is experimental.

    The quadrature engine certifies its rule first: composing the reproducing
    kernel with itself at the endpoints must reproduce it to ``sentinel_rtol``,
    otherwise :class:`UnderResolvedQuadrature` is raised.
    """
    if isinstance(space, SpaceFormSpace):
        if req.engine != "Quadrature":
            raise InvalidParameters("space-form propagation only has the quadrature engine")
        return _spaceform_chain(req, h, space, sentinel_rtol)
    if space is not None:
        if not isinstance(space, EuclideanSpace) or space.n != 1 or np.any(space.x0 != 0):
            raise InvalidParameters("Euclidean propagation is implemented on C with x0 = 0")
        t = space.t
    if req.T == 0:
        return complex(np.exp(complex(req.z_T) * np.conj(complex(req.z_0)) / t))
    if req.engine == "GaussianClosedForm":
        return _closed_form(req, h, t)

    K = euclidean_kernel(t)
    eps = req.T / req.n_slices

    def slice_matrix(zs, wbars):
        Z, W = zs[:, None], wbars[None, :]
        return np.exp(Z * W / t - 1j * eps * h(Z, W))

    v, w = euclidean_disk_rule(req.z_T, req.z_0, t, tol, n_radial, n_angular)
    _sentinel(K, v, w, req.z_T, req.z_0, sentinel_rtol)
    return _chain(slice_matrix, v, w, req.z_T, req.z_0, req.n_slices)


def _sentinel(K: OperatorKernel, v, w, z_T, z_0, rtol):
    zT = np.atleast_1d(np.asarray(z_T, dtype=complex))
    z0bar = np.conj(np.atleast_1d(np.asarray(z_0, dtype=complex)))
    approx = (K.matrix(zT, np.conj(v)) * w[None, :]) @ K.matrix(v, z0bar)
    exact = K.matrix(zT, z0bar)
    err = abs(approx[0, 0] - exact[0, 0]) / abs(exact[0, 0])
    if not err <= rtol:
        raise UnderResolvedQuadrature(f"rule fails the reproducing sentinel: rel err {err:.2e} > {rtol:g}")


def _spaceform_chain(req: SlicedPropagatorRequest, h: NormalSymbol, space: SpaceFormSpace, rtol) -> complex:
    if space.dim != 1:
        raise InvalidParameters("space-form propagation is implemented for one-dimensional forms")
    K = space.kernel()
    if req.T == 0:
        return complex(K(complex(req.z_T), np.conj(complex(req.z_0))))
    extent = max(abs(np.imag(req.z_T)), abs(np.imag(req.z_0)), 0.5)
    rule = operator_rule(space, extent)
    eps = req.T / req.n_slices

    def slice_matrix(zs, wbars):
        return np.exp(-1j * eps * h(zs[:, None], wbars[None, :])) * K.matrix(zs, wbars)

    # the a-priori Gauss-Hermite order can be short; climb until the sentinel holds
    nx, ny = rule.cell[2], rule.cell[3]
    for N in [ny] + [m for m in GAUSS_LADDER if m > ny]:
        rule = space.holomorphic_rule(nx=nx, ny=N)
        v = rule.complex_points()[:, 0]
        w = rule.weights
        try:
            _sentinel(K, v, w, req.z_T, req.z_0, rtol)
            break
        except UnderResolvedQuadrature:
            if N == GAUSS_LADDER[-1]:
                raise
    return _chain(slice_matrix, v, w, req.z_T, req.z_0, req.n_slices)


@dataclass(frozen=True)
class SweepRow:
    n: int
    G: complex
    abs_error: float
    ratio: float | None
    order_estimate: float | None


def convergence_sweep(z_T, z_0, T: float, n_list, engine: str = "GaussianClosedForm",
                      h: NormalSymbol | None = None, t: float = 1.0, **kwargs) -> list:
    """Errors of ``G_n`` against the exact oscillator kernel for ascending ``n``.

    ``ratio`` is ``e_n / e_next`` and ``order_estimate`` is
    ``log(e_n / e_next) / log(next / n)`` (``log2`` of the ratio when ``n`` doubles);
    both are ``None`` on the last row or when an error vanishes.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidParameters("n_list must be strictly ascending")
    h = oscillator_symbol() if h is None else h
    exact = complex(exact_oscillator_kernel(z_T, np.conj(z_0), T, t))
    vals = [propagate_sliced(SlicedPropagatorRequest(z_T, z_0, T, n, engine), h, t, **kwargs) for n in n_list]
    errs = [abs(g - exact) for g in vals]
    rows = []
    for i, (n, g, e) in enumerate(zip(n_list, vals, errs)):
        ratio = order = None
        if i + 1 < len(n_list) and e > 0 and errs[i + 1] > 0:
            ratio = e / errs[i + 1]
            order = math.log(ratio) / math.log(n_list[i + 1] / n)
        rows.append(SweepRow(n, g, e, ratio, order))
    return rows
