"""Lifted metric, compatible triple and holomorphic frames on T*Q in a chart.

Phase-space vectors are ``2n`` arrays ``(dq, dp)`` with ``p`` covector
components. Conventions:

* ``Omega = [[0, I], [-I, 0]]``, ``omega(V, W) = V^T Omega W``;
* ``G = L^T diag(sigma, sigma^-1) L`` with ``L = [[I, 0], [-C, I]]`` and
  ``C_ij = p_k Gamma^k_ij``, so ``G(V, V) = |dq|^2 + |dp - C dq|^2`` in the metric;
* ``J = Omega^-1 G`` (flat case: ``(dq, dp) -> (-dp, dq)``);
* ``R^m_kij = d_i Gamma^m_jk - d_j Gamma^m_ik + Gamma^m_il Gamma^l_jk - Gamma^m_jl Gamma^l_ik``.

The frame ``d/dz^i = (1/2)(d_q^i + p_k Gamma^k_ij d_p_j - i sigma_ij d_p_j)``
spans the ``+i`` eigenspace of ``J``. Its brackets are

    [d/dz^i, d/dz^j] = (1/4) p_m R^m_kij d/dp_k,

which vanish for every ``p`` exactly when the metric is flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, FiniteDifferenceBreakdown, SingularBasis

DEFAULT_H = 1e-5
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class MetricChart:
    """Riemannian metric ``sigma(q)`` on a coordinate patch.

    ``dsigma(q)[k, i, j]`` is ``d sigma_ij / d q^k``; when absent it is taken by
    central differences with step ``h_fd``.
    """

    dim: int
    sigma: Callable
    dsigma: Callable | None = None
    h_fd: float = DEFAULT_H
    name: str = ""

    def metric(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,):
            raise DimensionMismatch(f"expected a point with {self.dim} coordinates")
        s = np.asarray(self.sigma(q), dtype=float)
        if not np.allclose(s, s.T, rtol=0, atol=1e-13 * max(1.0, np.abs(s).max())):
            raise ValueError("metric is not symmetric")
        c = np.linalg.cond(s)
        if not np.isfinite(c) or c > MAX_CONDITION:
            raise SingularBasis(f"metric is near-singular at q={q.tolist()} (condition {c:.3g})")
        return s

    def inverse(self, q) -> np.ndarray:
        return np.linalg.inv(self.metric(q))

    def derivative(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.dsigma is not None:
            return np.asarray(self.dsigma(q), dtype=float)
        h = self.h_fd
        out = np.empty((self.dim, self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            out[k] = (np.asarray(self.sigma(q + e)) - np.asarray(self.sigma(q - e))) / (2 * h)
        return out

    def is_positive_definite(self, q) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.metric(q)) > 0))


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatch("q and p must be vectors of the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


# ---------------------------------------------------------------------------
# test metrics


def flat_metric(n: int = 2) -> MetricChart:
    return MetricChart(n, lambda q: np.eye(n), lambda q: np.zeros((n, n, n)), name="flat")


def constant_metric(matrix) -> MetricChart:
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    return MetricChart(n, lambda q: A, lambda q: np.zeros((n, n, n)), name="flat-constant")


def _shear_map(q):
    """``phi(q) = (q1 + 0.3 sin q2, q2 + 0.2 q1^2)``, its Jacobian and Hessians."""
    q1, q2 = q
    D = np.array([[1.0, 0.3 * math.cos(q2)], [0.4 * q1, 1.0]])
    # H[k] = d D / d q^k
    H = np.zeros((2, 2, 2))
    H[0, 1, 0] = 0.4
    H[1, 0, 1] = -0.3 * math.sin(q2)
    return D, H


def flat_sheared_metric() -> MetricChart:
    """Pullback of the Euclidean metric through a nonlinear diffeomorphism of a patch."""
    def sigma(q):
        D, _ = _shear_map(q)
        return D.T @ D

    def dsigma(q):
        D, H = _shear_map(q)
        return np.array([H[k].T @ D + D.T @ H[k] for k in range(2)])
    return MetricChart(2, sigma, dsigma, name="flat-sheared")


def sphere_metric() -> MetricChart:
    """Round unit 2-sphere in ``(theta, phi)``: ``diag(1, sin^2 theta)``."""
    def sigma(q):
        return np.diag([1.0, math.sin(q[0]) ** 2])

    def dsigma(q):
        d = np.zeros((2, 2, 2))
        d[0, 1, 1] = 2 * math.sin(q[0]) * math.cos(q[0])
        return d
    return MetricChart(2, sigma, dsigma, name="sphere")


def conformal_metric(lam: float = 0.4, n: int = 2) -> MetricChart:
    """``exp(2 lam) I`` with constant ``lam``."""
    f = math.exp(2 * lam)
    return MetricChart(n, lambda q: f * np.eye(n), lambda q: np.zeros((n, n, n)), name="conformal")


TEST_METRICS = {
    "flat": flat_metric,
    "flat-sheared": flat_sheared_metric,
    "sphere": sphere_metric,
    "conformal": conformal_metric,
}
FLAT_METRICS = ("flat", "flat-sheared", "conformal")


def metric_by_name(name: str) -> MetricChart:
    try:
        return TEST_METRICS[name]()
    except KeyError:
        raise ValueError(f"unknown test metric {name!r}; choose from {sorted(TEST_METRICS)}") from None


# ---------------------------------------------------------------------------
# curvature


def christoffel(chart: MetricChart, q) -> np.ndarray:
    """``Gamma[k, i, j] = Gamma^k_ij`` of the Levi-Civita connection."""
    inv = chart.inverse(q)
    d = chart.derivative(q)                       # d[l, i, j] = d_l sigma_ij
    lower = 0.5 * (np.einsum("ijl->lij", d) + np.einsum("jil->lij", d) - d)
    # lower[l, i, j] = (d_i s_jl + d_j s_il - d_l s_ij)/2
    return np.einsum("kl,lij->kij", inv, lower)


def christoffel_derivative(chart: MetricChart, q, h: float | None = None, richardson: bool = False) -> np.ndarray:
    """``dGamma[a, k, i, j] = d_a Gamma^k_ij`` by central differences."""
    q = np.asarray(q, dtype=float)
    h = chart.h_fd if h is None else h

    def central(step):
        out = np.empty((chart.dim,) * 4)
        for a in range(chart.dim):
            e = np.zeros(chart.dim)
            e[a] = step
            out[a] = (christoffel(chart, q + e) - christoffel(chart, q - e)) / (2 * step)
        return out

    if richardson:
        return (4 * central(h / 2) - central(h)) / 3
    return central(h)


def riemann(chart: MetricChart, q, h: float | None = None, richardson: bool = False) -> np.ndarray:
    """``R[m, k, i, j] = R^m_kij`` in the module's index convention."""
    G = christoffel(chart, q)
    dG = christoffel_derivative(chart, q, h, richardson)
    return (np.einsum("imjk->mkij", dG) - np.einsum("jmik->mkij", dG)
            + np.einsum("mil,ljk->mkij", G, G) - np.einsum("mjl,lik->mkij", G, G))


# ---------------------------------------------------------------------------
# phase-space structures


def omega_matrix(n: int) -> np.ndarray:
    I, Z = np.eye(n), np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def connection_matrix(chart: MetricChart, m: PhasePoint) -> np.ndarray:
    """``C_ij = p_k Gamma^k_ij``."""
    return np.einsum("k,kij->ij", m.p, christoffel(chart, m.q))


def lifted_metric_matrix(chart: MetricChart, m: PhasePoint) -> np.ndarray:
    n = chart.dim
    s = chart.metric(m.q)
    L = np.block([[np.eye(n), np.zeros((n, n))], [-connection_matrix(chart, m), np.eye(n)]])
    D = np.block([[s, np.zeros((n, n))], [np.zeros((n, n)), np.linalg.inv(s)]])
    return L.T @ D @ L


def lifted_metric(chart: MetricChart, m: PhasePoint, V, W) -> float:
    """``sigma(dq_V, dq_W) + sigma^-1(Dp_V, Dp_W)`` with ``Dp = dp - C dq``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    n = chart.dim
    s = chart.metric(m.q)
    C = connection_matrix(chart, m)
    Dv = V[n:] - C @ V[:n]
    Dw = W[n:] - C @ W[:n]
    return float(V[:n] @ s @ W[:n] + Dv @ np.linalg.solve(s, Dw))


@dataclass(frozen=True)
class CompatibleTriple:
    G_mat: np.ndarray
    omega_mat: np.ndarray
    J_mat: np.ndarray

    def G(self, V, W) -> float:
        return float(np.asarray(V) @ self.G_mat @ np.asarray(W))

    def omega(self, V, W) -> float:
        return float(np.asarray(V) @ self.omega_mat @ np.asarray(W))

    def defects(self, rng: np.random.Generator | None = None, samples: int = 10) -> dict:
        """Residuals of ``J^2 = -I``, ``G = omega(., J .)`` and the symmetry conditions."""
        rng = np.random.default_rng(0) if rng is None else rng
        d = self.J_mat.shape[0]
        J2 = float(np.max(np.abs(self.J_mat @ self.J_mat + np.eye(d))))
        comp = 0.0
        for _ in range(samples):
            V, W = rng.normal(size=d), rng.normal(size=d)
            comp = max(comp, abs(self.G(V, W) - self.omega(V, self.J_mat @ W)))
        return {
            "J_squared": J2,
            "compatibility": comp,
            "omega_antisymmetry": float(np.max(np.abs(self.omega_mat + self.omega_mat.T))),
            "G_symmetry": float(np.max(np.abs(self.G_mat - self.G_mat.T))),
            "G_min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (self.G_mat + self.G_mat.T)).min()),
        }


def compatible_triple(chart: MetricChart, m: PhasePoint) -> CompatibleTriple:
    n = chart.dim
    G = lifted_metric_matrix(chart, m)
    Om = omega_matrix(n)
    J = np.linalg.solve(Om, G)
    return CompatibleTriple(G, Om, J)


def _frame_fields(chart: MetricChart, q, p) -> np.ndarray:
    """Rows are ``d/dz^i`` in the coordinate frame ``(d_q, d_p)``."""
    n = chart.dim
    C = np.einsum("k,kij->ij", p, christoffel(chart, q))
    s = chart.metric(q)
    return 0.5 * np.hstack([np.eye(n), C - 1j * s]).astype(complex)


def holomorphic_frame(chart: MetricChart, m: PhasePoint) -> np.ndarray:
    """``(n, 2n)`` array whose row ``i`` is ``d/dz^i``."""
    return _frame_fields(chart, m.q, m.p)


def projections(chart: MetricChart, m: PhasePoint):
    """``(Pi_plus, Pi_minus) = ((1 - iJ)/2, (1 + iJ)/2)``."""
    J = compatible_triple(chart, m).J_mat
    I = np.eye(J.shape[0])
    return 0.5 * (I - 1j * J), 0.5 * (I + 1j * J)


def z_components(chart: MetricChart, m: PhasePoint, V) -> np.ndarray:
    """``zdot^i = dq^i + i sigma^im (dp_m - p_k Gamma^k_ml dq^l)``, so ``Pi_plus V = zdot^i d/dz^i``."""
    V = np.asarray(V, dtype=float)
    n = chart.dim
    C = connection_matrix(chart, m)
    return V[:n] + 1j * np.linalg.solve(chart.metric(m.q), V[n:] - C @ V[:n])


# ---------------------------------------------------------------------------
# bracket obstruction


@dataclass(frozen=True)
class BracketObstruction:
    """Coefficients ``c[l, i, j]`` of ``[d/dz^i, d/dz^j]`` on ``d/dz^l - d/dzbar^l``.

    ``measured`` comes from finite-difference commutation of the frame fields;
    ``predicted`` is ``(i/4) R^m_kij p_m sigma^lk``; ``literal`` omits the
    factor 1/4. ``q_residual`` is the largest ``d_q`` component of any measured
    bracket (zero in exact arithmetic) and ``noise_floor`` estimates the
    finite-difference error of ``measured``.
    """

    measured: np.ndarray
    predicted: np.ndarray
    literal: np.ndarray
    q_residual: float
    noise_floor: float

    @staticmethod
    def _rel(a, b) -> float:
        scale = float(np.max(np.abs(b)))
        return float(np.max(np.abs(a - b))) / scale if scale > 0 else float(np.max(np.abs(a)))

    @property
    def magnitude(self) -> float:
        return float(np.max(np.abs(self.measured)))

    def relative_error(self, against: str = "predicted") -> float:
        return self._rel(self.measured, getattr(self, against))

    def ratio(self, against: str = "literal") -> complex:
        """Least-squares scalar ``r`` with ``measured ~ r * reference``."""
        ref = getattr(self, against).ravel()
        den = np.vdot(ref, ref)
        return complex(np.vdot(ref, self.measured.ravel()) / den) if den != 0 else complex("nan")


def _bracket_vectors(chart: MetricChart, q, p, h: float) -> np.ndarray:
    """``B[i, j]`` = coordinate components of ``[X_i, X_j]`` (central differences)."""
    n = chart.dim
    x = np.concatenate([q, p])
    X = _frame_fields(chart, q, p)                     # (n, 2n)
    dX = np.empty((2 * n, n, 2 * n), dtype=complex)    # dX[b] = d_b X
    for b in range(2 * n):
        e = np.zeros(2 * n)
        e[b] = h
        xp, xm = x + e, x - e
        dX[b] = (_frame_fields(chart, xp[:n], xp[n:]) - _frame_fields(chart, xm[:n], xm[n:])) / (2 * h)
    # [X_i, X_j]^a = X_i^b d_b X_j^a - X_j^b d_b X_i^a
    T = np.einsum("ib,bja->ija", X, dX)
    return T - np.transpose(T, (1, 0, 2))


def bracket_obstruction(chart: MetricChart, m: PhasePoint, h: float | None = None, richardson: bool = False,
                        require_signal: bool = False) -> BracketObstruction:
    """Measured and predicted brackets of the holomorphic frame at ``m``.

    With ``require_signal`` a measurement smaller than its noise floor raises
    :class:`FiniteDifferenceBreakdown`.
    """
    n = chart.dim
    h = chart.h_fd if h is None else h
    q, p = m.q, m.p

    def measure(step):
        if richardson:
            return (4 * _bracket_vectors(chart, q, p, step / 2) - _bracket_vectors(chart, q, p, step)) / 3
        return _bracket_vectors(chart, q, p, step)

    B = measure(h)
    B2 = measure(2 * h)
    s_inv = chart.inverse(q)
    # p-part B_k = c_l (-i sigma_lk)  =>  c_l = i sigma^lk B_k
    coeff = 1j * np.einsum("lk,ijk->lij", s_inv, B[:, :, n:])
    coeff2 = 1j * np.einsum("lk,ijk->lij", s_inv, B2[:, :, n:])
    q_res = float(np.max(np.abs(B[:, :, :n])))

    R = riemann(chart, q, h, richardson)
    literal = 1j * np.einsum("mkij,m,lk->lij", R, p, s_inv)
    predicted = 0.25 * literal

    scale = float(np.max(np.abs(_frame_fields(chart, q, p)))) ** 2
    floor = float(np.max(np.abs(coeff - coeff2))) + 10 * np.finfo(float).eps * scale / h
    obs = BracketObstruction(coeff, predicted, literal, q_res, floor)
    if require_signal and obs.magnitude <= floor:
        raise FiniteDifferenceBreakdown(
            f"bracket magnitude {obs.magnitude:.3e} does not exceed noise floor {floor:.3e}")
    return obs
