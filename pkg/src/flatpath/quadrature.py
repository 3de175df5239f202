"""Quadrature on the cell Q, on the Gaussian imaginary directions and on Q_C = Q x R^n.

Rules store real node coordinates ``(P, d)`` and weights ``(P,)``. A product of a
cell rule and a Gaussian rule of equal dimension is a rule on the complexified
cell; :meth:`QuadratureRule.complex_points` returns its nodes as ``x + i y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite
from numpy.polynomial.legendre import leggauss

from .errors import InvalidParameters, UnderResolvedQuadrature
from .lattice import LatticeBasis

DEFAULT_CELL_NODES = 32
DEFAULT_GAUSS_NODES = 24
GAUSS_LADDER = (24, 32, 48, 64, 96, 128, 160, 200, 256, 320, 400, 512, 640, 800, 1024)


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    cell: object = None
    factors: tuple = ()

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def integrate(self, values) -> complex:
        """``sum_j w_j v_j`` in ascending node order."""
        return np.sum(self.weights * np.asarray(values), axis=-1)

    def __call__(self, func):
        return self.integrate(func(self.nodes))

    def complex_points(self) -> np.ndarray:
        """Nodes as complex points ``x + i y`` (requires an even real dimension)."""
        d = self.dim
        if d % 2:
            raise InvalidParameters("complex points need an even number of real coordinates")
        h = d // 2
        return self.nodes[:, :h] + 1j * self.nodes[:, h:]

    def reweighted(self, factor) -> "QuadratureRule":
        return QuadratureRule(self.kind, self.nodes, self.weights * np.asarray(factor), self.cell, self.factors)


def periodic_trapezoid(cell: LatticeBasis, N: int = DEFAULT_CELL_NODES, centered: bool = True) -> QuadratureRule:
    """``N^n`` equispaced nodes of the cell, equal weights ``|det B| / N^n``.

    Exact for ``exp(i K.x)`` with integer coordinates below ``N`` in magnitude.
    ``centered`` shifts the grid to fractional coordinates ``j/N - 1/2``.
    """
    if N < 1:
        raise InvalidParameters("need at least one node per dimension")
    if not isinstance(cell, LatticeBasis):
        cell = LatticeBasis(cell)
    n = cell.dim
    frac = np.arange(N) / N - (0.5 if centered else 0.0)
    grids = np.meshgrid(*([frac] * n), indexing="ij")
    fr = np.stack([g.ravel() for g in grids], axis=-1)
    vol = abs(float(np.linalg.det(cell.matrix)))
    weights = np.full(fr.shape[0], vol / N ** n)
    return QuadratureRule("PeriodicTrapezoid", fr @ cell.matrix.T, weights, cell)


def quotient_trapezoid(spec, N: int = DEFAULT_CELL_NODES, centered: bool = True) -> QuadratureRule:
    """Translation-cell trapezoid with weights divided by the holonomy order.

    Integrates Gamma-invariant functions over the quotient manifold.
    """
    rule = periodic_trapezoid(spec.translation_basis, N, centered)
    return QuadratureRule(rule.kind, rule.nodes, rule.weights / spec.holonomy_order, spec)


def gauss_hermite_1d(t: float, N: int):
    """Nodes/weights for ``int g(y) (pi t)^(-1/2) exp(-y^2/t) dy`` (variance t/2)."""
    u, w = roots_hermite(N)
    # far nodes whose weights underflow contribute nothing and would pair 0 with inf
    keep = w > 0
    return math.sqrt(t) * u[keep], w[keep] / math.sqrt(math.pi)


def gaussian_weighted(t: float, n: int = 1, N: int = DEFAULT_GAUSS_NODES) -> QuadratureRule:
    """Tensor Gauss-Hermite rule against ``(pi t)^(-n/2) exp(-|y|^2/t)``.

    Exact for polynomials of degree ``<= 2N - 1`` in each coordinate; the weights
    sum to one.
    """
    if N < 1:
        raise InvalidParameters("need at least one node")
    if not t > 0:
        raise InvalidParameters("t must be positive")
    y, w = gauss_hermite_1d(t, N)
    grids = np.meshgrid(*([y] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return QuadratureRule("GaussianWeighted", nodes, weights, ("gaussian", t, n))


def product_rule(q1: QuadratureRule, q2: QuadratureRule) -> QuadratureRule:
    """Tensor product: nodes ``(x_i, y_j)`` with weights ``w_i v_j`` (``q2`` varies fastest)."""
    P1, P2 = q1.size, q2.size
    nodes = np.concatenate([np.repeat(q1.nodes, P2, axis=0), np.tile(q2.nodes, (P1, 1))], axis=1)
    weights = np.repeat(q1.weights, P2) * np.tile(q2.weights, P1)
    return QuadratureRule("Product", nodes, weights, (q1.cell, q2.cell), (q1, q2))


def gaussian_exactness_error(t: float, N: int, k: float) -> float:
    """Relative error of the N-point rule on ``int exp(k y)`` (exact: ``exp(k^2 t / 4)``)."""
    y, w = gauss_hermite_1d(t, N)
    exact_log = k * k * t / 4
    approx = np.sum(np.exp(np.log(w) + k * y - exact_log))
    return abs(approx - 1.0)


def gauss_nodes_for(kmax: float, t: float, rtol: float = 1e-12, minimum: int = DEFAULT_GAUSS_NODES) -> int:
    """Smallest ladder order whose Gaussian rule integrates ``exp(k y)``, ``|k| <= kmax``.

    Raises :class:`UnderResolvedQuadrature` when even the largest order fails.
    """
    for N in GAUSS_LADDER:
        if N < minimum:
            continue
        if gaussian_exactness_error(t, N, kmax) <= rtol:
            return N
    raise UnderResolvedQuadrature(f"no Gauss-Hermite order up to {GAUSS_LADDER[-1]} integrates "
                                  f"exp({kmax:g} y) against the t={t:g} Gaussian to {rtol:g}")


def check_gaussian_rule(rule_1d_order: int, t: float, kmax: float, rtol: float = 1e-12):
    err = gaussian_exactness_error(t, rule_1d_order, kmax)
    if err > rtol:
        raise UnderResolvedQuadrature(
            f"{rule_1d_order}-point Gauss-Hermite rule misses exp({kmax:g} y) by {err:.2e} (rtol {rtol:g})")


def cell_nodes_for(mode_bound: float, minimum: int = DEFAULT_CELL_NODES) -> int:
    """Even node count exceeding twice an integer mode bound."""
    N = max(minimum, 2 * int(math.ceil(mode_bound)) + 2)
    return N + (N % 2)


def disk_rule(radius: float, n_radial: int = 48, n_angular: int = 64) -> QuadratureRule:
    """Polar rule on the disk ``|v| <= radius`` in C: Gauss-Legendre in r, trapezoid in angle.

    Nodes are returned as 2-D real coordinates ``(Re v, Im v)``; weights include
    the Jacobian ``r``.
    """
    x, w = leggauss(n_radial)
    r = 0.5 * radius * (x + 1.0)
    wr = 0.5 * radius * w * r
    ang = 2 * math.pi * np.arange(n_angular) / n_angular
    R, A = np.meshgrid(r, ang, indexing="ij")
    W = np.repeat(wr, n_angular) * (2 * math.pi / n_angular)
    nodes = np.stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()], axis=-1)
    return QuadratureRule("Disk", nodes, W, ("disk", radius))
