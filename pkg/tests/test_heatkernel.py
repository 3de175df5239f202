import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatpath import heatkernel as hk
from flatpath.errors import InvalidParameters, TruncationCapExceeded
from flatpath.lattice import ReciprocalLattice
from flatpath.quadrature import quotient_trapezoid
from flatpath.spaceform import apply, make_space_form, sample_points

S1 = make_space_form("circle")


def wrapped_gaussian(d, t, terms=60):
    m = np.arange(-terms, terms + 1)
    return np.sum((2 * math.pi * t) ** -0.5 * np.exp(-(d - 2 * math.pi * m) ** 2 / (2 * t)))


def test_euclidean_examples():
    assert hk.rho_euclidean(0.3, 0.3, 1.0) == pytest.approx((2 * math.pi) ** -0.5, rel=1e-15)
    val = hk.rho_euclidean(np.array([1.0, 0.0]), np.zeros(2), 1.0)
    assert val == pytest.approx(math.exp(-0.5) / (2 * math.pi), rel=1e-15)


def test_euclidean_integrates_to_one():
    from numpy.polynomial.hermite import hermgauss
    u, w = hermgauss(40)
    t = 0.7
    x = math.sqrt(2 * t) * u
    approx = np.sum(w * np.exp(u ** 2) * hk.rho_euclidean(x, 0.0, t)) * math.sqrt(2 * t)
    assert abs(approx - 1) < 1e-10


def test_invalid_time():
    for t in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(InvalidParameters):
            hk.rho_s1(0.0, 0.0, t)


def test_rho_s1_coincidence_large_t():
    assert hk.rho_s1(0.4, 0.4, 60.0) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_rho_s1_wrapped_gaussian_example():
    assert hk.rho_s1(math.pi, 0.0, 0.5) == pytest.approx(wrapped_gaussian(math.pi, 0.5), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_rho_s1_poisson_summation(t, a, b):
    assert hk.rho_s1(a, b, t) == pytest.approx(wrapped_gaussian(a - b, t), rel=1e-10)


def test_torus1_matches_rho_s1():
    x = np.linspace(-3, 3, 17)
    spec = make_space_form("torus", dim=1)
    np.testing.assert_allclose(hk.rho_spaceform(x, 0.2, 0.8, spec), hk.rho_s1(x, 0.2, 0.8), rtol=0, atol=1e-12)


def test_large_t_limit_is_inverse_volume():
    for fam in ("torus", "g2", "g6"):
        spec = make_space_form(fam, dim=2) if fam == "torus" else make_space_form(fam)
        x = sample_points(spec.translation_basis, 5, 1)
        x0 = sample_points(spec.translation_basis, 1, 2)[0]
        vals = hk.rho_spaceform(x, x0, 200.0, spec)
        np.testing.assert_allclose(vals, 1 / spec.volume, rtol=1e-12)


@pytest.mark.parametrize("fam,kw", [("circle", {}), ("torus", {"dim": 2}), ("g2", {}), ("g4", {}), ("g6", {})])
@pytest.mark.parametrize("t", [0.2, 1.0, 5.0])
def test_normalization(fam, kw, t):
    spec = make_space_form(fam, **kw)
    x0 = sample_points(spec.translation_basis, 1, 3)[0]
    x0 = x0[0] if spec.dim == 1 else x0
    N = 64 if spec.dim < 3 else 24
    rule = quotient_trapezoid(spec, N)
    nodes = rule.nodes[:, 0] if spec.dim == 1 else rule.nodes
    assert abs(rule.integrate(hk.rho_spaceform(nodes, x0, t, spec)) - 1) < 1e-10


def test_s1_integrates_to_one():
    rule = quotient_trapezoid(S1, 64)
    assert abs(rule.integrate(hk.rho_s1(rule.nodes[:, 0], 1.0, 0.4)) - 1) < 1e-12


def heat_residual(spec, x, x0, t, ht=1e-3, hx=1e-2):
    """``d_t rho - Laplacian(rho)/2`` by fourth-order central differences."""
    def rho(y, s=t):
        return hk.rho_spaceform(y, x0, s, spec)
    dt = (8 * (rho(x, t + ht) - rho(x, t - ht)) - (rho(x, t + 2 * ht) - rho(x, t - 2 * ht))) / (12 * ht)
    lap = -30 * spec.dim * rho(x)
    for e in np.eye(spec.dim):
        lap = lap + 16 * (rho(x + hx * e) + rho(x - hx * e)) - (rho(x + 2 * hx * e) + rho(x - 2 * hx * e))
    lap /= 12 * hx * hx
    return dt - 0.5 * lap


def test_heat_equation_residual_torus2():
    spec = make_space_form("torus", dim=2)
    x0 = np.array([0.3, -1.0])
    x = np.vstack([x0, x0 + 0.05, sample_points(spec.translation_basis, 6, 4)])
    for t in (0.2, 0.7, 2.0):
        peak = float(hk.rho_spaceform(x0, x0, t, spec))
        assert np.max(np.abs(heat_residual(spec, x, x0, t))) < 1e-6 * peak


@pytest.mark.parametrize("fam,kw", [("circle", {}), ("torus", {"dim": 2}), ("g3", {})])
def test_semigroup(fam, kw):
    spec = make_space_form(fam, **kw)
    n = spec.dim
    s, t = 0.4, 0.7
    x0 = sample_points(spec.translation_basis, 1, 5)[0]
    x = sample_points(spec.translation_basis, 4, 6)
    rule = quotient_trapezoid(spec, 64 if n < 3 else 28)
    strip = (lambda a: a[..., 0]) if n == 1 else (lambda a: a)
    y = strip(rule.nodes)
    left = hk.rho_spaceform(y, strip(x0), s, spec)
    for xi in x:
        mid = hk.rho_spaceform(strip(xi) * np.ones_like(y) if n == 1 else np.broadcast_to(xi, y.shape), y, t, spec)
        val = rule.integrate(left * mid)
        assert val == pytest.approx(float(hk.rho_spaceform(strip(xi), strip(x0), s + t, spec)), rel=1e-8)


@pytest.mark.parametrize("fam", ["g1", "g2", "g3", "g4", "g5", "g6"])
def test_group_invariance(fam):
    spec = make_space_form(fam)
    x = sample_points(spec.translation_basis, 16, 7)
    x0 = sample_points(spec.translation_basis, 1, 8)[0]
    ref = hk.rho_spaceform(x, x0, 0.5, spec)
    for g in spec.generators:
        np.testing.assert_allclose(hk.rho_spaceform(apply(g, x), x0, 0.5, spec), ref, rtol=1e-10, atol=0)
        np.testing.assert_allclose(hk.rho_spaceform(x, apply(g, x0), 0.5, spec), ref, rtol=1e-10, atol=0)


def test_analytic_restricts_to_real():
    spec = make_space_form("g2")
    x = sample_points(spec.translation_basis, 5, 1)
    x0 = sample_points(spec.translation_basis, 1, 2)[0]
    np.testing.assert_allclose(hk.rho_analytic(x0.astype(complex), x, 0.6, spec),
                               hk.rho_spaceform(x, x0, 0.6, spec), atol=1e-12)


def test_analytic_s1_termwise():
    theta, theta0, y, t = 0.7, -0.4, 0.9, 0.8
    k = np.arange(-60, 61)
    expected = np.sum(np.exp(1j * k * (theta - theta0) + k * y - k * k * t / 2)) / (2 * math.pi)
    got = hk.rho_analytic(theta0 + 1j * y, theta, t, S1)
    assert abs(got - expected) < 1e-12 * abs(expected)


def test_analytic_conjugation_symmetry():
    z = np.array([0.3 + 0.8j, -1.0 - 1.2j])
    x = np.array([0.1, 2.0])
    np.testing.assert_allclose(hk.rho_analytic(np.conj(z), x, 1.0, S1), np.conj(hk.rho_analytic(z, x, 1.0, S1)),
                               rtol=1e-14)


def test_analytic_matrix_agrees():
    spec = make_space_form("g5")
    rng = np.random.default_rng(0)
    z = rng.normal(size=(3, 3)) + 0.4j * rng.normal(size=(3, 3))
    x = rng.normal(size=(4, 3))
    M = hk.rho_analytic_matrix(z, x, 0.9, spec)
    direct = hk.rho_analytic(z[:, None, :], x[None, :, :], 0.9, spec)
    np.testing.assert_allclose(M, direct, atol=1e-13)


def test_nu_examples():
    assert hk.nu_euclidean(0.5 + 0.2j, 0.5 + 0.2j, 1.0) == pytest.approx(1 / (2 * math.pi))
    z, z0 = 0.4 + 0.3j, -0.2 + 0.1j
    val = hk.nu_complexified(z, z0, 0.9, S1)
    expected = hk.rho_s1(0.4, -0.2, 0.9) * hk.gaussian_factor(0.2, 0.9, 1)
    assert val == pytest.approx(expected, rel=1e-13)


def test_nu_integrates_to_one():
    t = 0.8
    cell = quotient_trapezoid(S1, 64)
    y = np.linspace(-12, 12, 961)
    wy = np.full(y.size, y[1] - y[0])
    wy[[0, -1]] *= 0.5
    z = cell.nodes[:, 0][:, None] + 1j * y[None, :]
    vals = hk.nu_complexified(z, 0.3 + 0.2j, t, S1)
    assert abs(np.sum(cell.weights[:, None] * wy[None, :] * vals) - 1) < 1e-8


def test_truncation_radius_tail():
    recip = ReciprocalLattice(np.eye(1))
    trunc = hk.truncation_radius(1.0, 1e-12, recip)
    assert not trunc.capped
    k = np.arange(1, 200)
    tail = 2 * np.sum(np.exp(-k[k > trunc.radius] ** 2 / 2))
    assert tail < 1e-12
    assert hk.truncation_radius(2.0, 1e-12, recip).radius < trunc.radius


def test_truncation_radius_trivial_tol():
    recip = ReciprocalLattice(np.eye(1))
    assert hk.truncation_radius(5.0, 1.0, recip, volume=2 * math.pi).radius == 0.0


def test_truncation_cap():
    recip = ReciprocalLattice(np.eye(3) * 0.01)
    assert hk.truncation_radius(1e-6, 1e-14, recip, max_points=1000).capped
    with pytest.raises(TruncationCapExceeded):
        hk.rho_spaceform(np.zeros(3), np.zeros(3), 1e-9, make_space_form("torus", lengths=[600, 600, 600]))


def test_deterministic_bits():
    spec = make_space_form("g6")
    x = sample_points(spec.translation_basis, 8, 1)
    a = hk.rho_spaceform(x, np.zeros(3), 0.3, spec)
    b = hk.rho_spaceform(x, np.zeros(3), 0.3, spec)
    assert a.tobytes() == b.tobytes()
