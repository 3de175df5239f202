import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatpath import hilbert as H
from flatpath.errors import InvalidParameters, UnderResolvedQuadrature
from flatpath.fourier import FourierFunction
from flatpath.spaceform import make_space_form

S1 = make_space_form("circle")
T2 = make_space_form("torus", dim=2)


def s1_space(t=1.0, theta0=0.0):
    return H.SpaceFormSpace(S1, t, np.array([theta0]))


def exp_s1(k, c=1.0):
    return FourierFunction.exponential(S1.reciprocal, k, c)


def random_poly(recip, degree, seed):
    return FourierFunction.random(recip, degree, np.random.default_rng(seed))


# --- inner products ---------------------------------------------------------


def test_inner_q_examples():
    sp = s1_space()
    one = FourierFunction.constant(S1.reciprocal)
    assert H.inner_Q(one, one, sp) == pytest.approx(1.0, abs=1e-15)
    assert H.inner_Q(exp_s1(1), exp_s1(1), sp) == pytest.approx(1.0, abs=1e-15)
    assert H.inner_Q(one, exp_s1(1), sp) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert H.inner_Q(one, exp_s1(1), sp, method="quadrature") == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_inner_q_closed_vs_quadrature_and_symmetry():
    for seed, (spec, x0) in enumerate([(S1, [0.7]), (T2, [0.4, -1.1]), (make_space_form("g2"), [0.1, 0.0, 0.2])]):
        sp = H.SpaceFormSpace(spec, 0.6, np.array(x0))
        deg = 4 if spec.dim < 3 else 1
        f, g = random_poly(spec.reciprocal, deg, seed), random_poly(spec.reciprocal, deg, seed + 10)
        if spec.holonomy_order > 1:
            modes = H.invariant_modes(sp, 10.0)
            f, g = modes[1] + modes[2] * 0.5j, modes[0] + modes[3]
        a = H.inner_Q(f, g, sp)
        assert abs(a - H.inner_Q(f, g, sp, method="quadrature")) < 1e-9
        assert abs(a - np.conj(H.inner_Q(g, f, sp))) < 1e-14
        assert H.inner_Q(f, f, sp).real > 0


def test_inner_qc_examples():
    sp = s1_space()
    one = FourierFunction.constant(S1.reciprocal)
    assert H.inner_QC(one, one, sp) == pytest.approx(1.0, abs=1e-15)
    assert H.inner_QC(exp_s1(1), exp_s1(1), sp) == pytest.approx(math.e, rel=1e-15)
    assert H.inner_QC(exp_s1(1), exp_s1(1), sp, method="quadrature") == pytest.approx(math.e, rel=1e-12)


def test_inner_qc_closed_vs_quadrature():
    for seed, (spec, x0) in enumerate([(S1, [-2.0]), (T2, [1.0, 0.5])]):
        sp = H.SpaceFormSpace(spec, 0.9, np.array(x0))
        psi = H.sb_transform(random_poly(spec.reciprocal, 5, seed), 0.9)
        phi = H.sb_transform(random_poly(spec.reciprocal, 5, seed + 1), 0.9)
        a = H.inner_QC(psi, phi, sp)
        b = H.inner_QC(psi, phi, sp, method="quadrature")
        assert abs(a - b) <= 1e-8 * abs(a)
        assert H.inner_QC(psi, psi, sp).real > 0


def test_inner_qc_under_resolved():
    sp = s1_space()
    with pytest.raises(UnderResolvedQuadrature):
        H.inner_QC(exp_s1(30), exp_s1(30), sp, method="quadrature", ny=24)


def test_invalid_time_and_base():
    with pytest.raises(InvalidParameters):
        H.SpaceFormSpace(S1, 0.0)
    with pytest.raises(InvalidParameters):
        H.SpaceFormSpace(S1, 1.0, np.array([4.0]))
    with pytest.raises(InvalidParameters):
        H.sb_transform(exp_s1(1), -1.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 2.0), st.floats(-math.pi, math.pi * 0.999), st.integers(0, 10 ** 6))
def test_isometry_s1(t, theta0, seed):
    sp = s1_space(t, theta0)
    f, g = random_poly(S1.reciprocal, 8, seed), random_poly(S1.reciprocal, 8, seed + 1)
    lhs = H.inner_QC(H.sb_transform(f, t), H.sb_transform(g, t), sp)
    rhs = H.inner_Q(f, g, sp)
    scale = math.sqrt(H.inner_Q(f, f, sp).real * H.inner_Q(g, g, sp).real)
    assert abs(lhs - rhs) < 1e-8 * scale


def test_norm_preservation_example():
    sp = s1_space(0.8, 0.3)
    f = FourierFunction.from_dict(S1.reciprocal, {(1,): 2.0, (-3,): 1.0})
    psi = H.sb_transform(f, 0.8)
    assert H.inner_QC(psi, psi, sp).real == pytest.approx(H.inner_Q(f, f, sp).real, rel=1e-12)


# --- weighted <-> standard, transform ---------------------------------------


def test_weighted_standard_round_trip():
    sp = s1_space(0.7, 0.2)
    x = np.linspace(-3, 3, 41)
    root = np.sqrt(sp.rho(x))
    np.testing.assert_allclose(H.weighted_from_standard(root, x, sp), 1.0, rtol=1e-14)
    fs = np.cos(x) + 0.3j * np.sin(2 * x)
    back = H.standard_from_weighted(H.weighted_from_standard(fs, x, sp), x, sp)
    np.testing.assert_allclose(back, fs, rtol=1e-12)


def test_constant_norms_agree():
    sp = s1_space(0.5, 1.0)
    rule = sp.cell_rule(256)
    x = rule.nodes[:, 0]
    fs = np.full(x.size, 1 / math.sqrt(2 * math.pi))
    f = H.weighted_from_standard(fs, x, sp)
    assert rule.integrate(np.abs(f) ** 2 * sp.rho(x)) == pytest.approx(rule.integrate(np.abs(fs) ** 2), abs=1e-10)


def test_sb_transform_examples():
    t = 0.7
    z = np.array([0.3 + 0.5j, -1.0 - 0.7j, 2.0 + 1.2j])
    for m in (-3, 0, 2):
        psi = H.sb_transform(exp_s1(m), t)
        np.testing.assert_allclose(psi(z), np.exp(1j * m * z - m * m * t / 2), rtol=1e-15)
    assert H.sb_transform(FourierFunction.constant(S1.reciprocal), t)(z) == pytest.approx(np.ones(3))


@pytest.mark.parametrize("spec,x0", [(S1, [0.3]), (T2, [0.0, 1.0])])
def test_sb_transform_quadrature(spec, x0):
    sp = H.SpaceFormSpace(spec, 0.8, np.array(x0))
    f = random_poly(spec.reciprocal, 4, 5)
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, spec.dim)) + 1j * rng.uniform(-1, 1, (6, spec.dim))
    z = z[:, 0] if spec.dim == 1 else z
    closed = H.sb_transform(f, 0.8)(z)
    quad = H.sb_transform_quadrature(f, sp, z)
    assert np.max(np.abs(closed - quad)) < 1e-9 * max(1.0, np.max(np.abs(closed)))


# --- kernels ------------------------------------------------------------------


def test_euclidean_kernel_examples():
    sp = H.EuclideanSpace(1.0)
    assert H.reproducing_kernel(sp, 0.4 + 2j, 0.0) == 1.0
    assert H.reproducing_kernel(sp, 1.0, 1.0) == pytest.approx(math.e, rel=1e-15)
    assert H.reproducing_kernel(H.EuclideanSpace(2.0), 1.0 + 1j, 3.0) == pytest.approx(np.exp((3 + 3j) / 2))


def test_s1_basis_elements_orthonormal():
    sp = s1_space(1.0, 0.4)
    phis = [H.s1_basis_element(sp, n) for n in range(-3, 4)]
    G = np.array([[H.inner_QC(a, b, sp) for b in phis] for a in phis])
    np.testing.assert_allclose(G, np.eye(7), atol=1e-10)


def test_s1_kernel_hermitian():
    sp = s1_space(1.0)
    K = H.reproducing_kernel(sp)
    rng = np.random.default_rng(2)
    z = rng.uniform(-3, 3, 10) + 1j * rng.uniform(-1.5, 1.5, 10)
    w = rng.uniform(-3, 3, 10) + 1j * rng.uniform(-1.5, 1.5, 10)
    assert K.hermitian_defect(z, w) < 1e-10 * np.max(np.abs(K(z, np.conj(w))))


def test_s1_integral_and_basis_kernels_agree():
    sp = s1_space(2.0, 0.0)
    Ki = H.reproducing_kernel(sp, method="integral")
    Kb = H.reproducing_kernel(sp, method="basis")
    z = np.array([0.2 + 0.3j, -1.0 + 1.0j])
    w = np.array([1.5 - 0.4j, 0.1 + 0.2j])
    np.testing.assert_allclose(Kb(z, np.conj(w)), Ki(z, np.conj(w)), rtol=1e-8)


def test_s1_reproducing_property_example():
    sp = s1_space(1.0)
    K = H.reproducing_kernel(sp)
    rng = np.random.default_rng(3)
    z = rng.uniform(-math.pi, math.pi, 5) + 1j * rng.uniform(-1.5, 1.5, 5)
    phi = H.sb_transform(exp_s1(1), 1.0)
    got = H.apply_operator(K, phi, sp, z)
    assert np.max(np.abs(got / phi(z) - 1)) < 1e-7


def test_euclidean_reproducing_and_number_operator():
    from flatpath.propagator import oscillator_hamiltonian_kernel
    sp = H.EuclideanSpace(1.0)
    z = np.array([0.5 + 0.5j, -1.0 + 0.2j, 1.2 - 1.1j])
    sq = lambda w: w ** 2
    np.testing.assert_allclose(H.apply_operator(H.reproducing_kernel(sp), sq, sp, z), z ** 2, rtol=1e-12)
    np.testing.assert_allclose(H.apply_operator(oscillator_hamiltonian_kernel(), sq, sp, z), 2 * z ** 2, rtol=1e-10)
    assert np.all(H.apply_operator(H.OperatorKernel.zero(), sq, sp, z) == 0)


def test_compose_reproducing_is_idempotent():
    sp = H.EuclideanSpace(1.0)
    K = H.reproducing_kernel(sp)
    KK = H.compose_kernels(K, K, sp)
    z, w = np.array([0.3 + 0.2j, -0.5j]), np.array([1.0 - 0.1j, 0.4])
    np.testing.assert_allclose(KK(z, np.conj(w)), K(z, np.conj(w)), rtol=1e-10)


def test_compose_gaussian_exponents():
    sp = H.EuclideanSpace(1.0)
    a, b = 0.6 + 0.2j, 0.5 - 0.3j
    Ka, Kb = H.euclidean_kernel(1.0, scale=a), H.euclidean_kernel(1.0, scale=b)
    Kab = H.compose_kernels(Ka, Kb, sp)
    z, wbar = np.array([0.7 + 0.1j, -0.2 + 0.9j]), np.array([0.3 - 0.5j, 1.1 + 0.0j])
    np.testing.assert_allclose(Kab(z, wbar), np.exp(a * b * z * wbar), rtol=1e-10)


def test_compose_associative():
    sp = H.EuclideanSpace(1.0)
    Ks = [H.euclidean_kernel(1.0, scale=s) for s in (0.5 + 0.1j, 0.7 - 0.2j, 0.4 + 0.3j)]
    left = H.compose_kernels(H.compose_kernels(Ks[0], Ks[1], sp), Ks[2], sp)
    right = H.compose_kernels(Ks[0], H.compose_kernels(Ks[1], Ks[2], sp), sp)
    z, wbar = np.array([0.2 + 0.3j, -0.6 + 0.1j]), np.array([0.5 - 0.2j, 0.1 + 0.8j])
    np.testing.assert_allclose(left(z, wbar), right(z, wbar), rtol=1e-8)


def test_zero_kernel_shapes():
    K0 = H.OperatorKernel.zero(2)
    assert K0(np.ones((4, 2)), np.ones((4, 2))).shape == (4,)
    assert K0.matrix(np.ones((3, 2)), np.ones((5, 2))).shape == (3, 5)


def test_torus2_basis_projection_reproduces():
    # rank-one sums against closed-form inner products; the quadrature route is
    # exercised on the circle
    sp = H.SpaceFormSpace(T2, 2.0, np.array([0.3, -0.2]))
    z = np.array([[0.5 + 0.3j, -1.0 - 0.4j], [2.0 - 0.2j, 0.1 + 0.6j]])
    basis = H.orthonormal_basis(sp, 20.0, "modes", probe=z, stop_rtol=H.BASIS_STOP_RTOL)
    assert basis.converged
    phi = H.sb_transform(FourierFunction.exponential(T2.reciprocal, (1, -1)), 2.0)
    v = np.all(basis.indices == (1, -1), axis=1).astype(complex)
    coeffs = np.conj(basis.U).T @ (H._gram_matrix(sp, basis.indices) @ v)
    # spot check against the closed-form inner product
    assert abs(coeffs[3] - H.inner_QC(basis.functions()[3], phi, sp)) < 1e-12
    got = basis.values(z) @ coeffs
    assert np.max(np.abs(got / phi(z) - 1)) < 1e-7


def test_torus2_basis_kernel_hermitian_and_positive():
    sp = H.SpaceFormSpace(T2, 2.0)
    K = H.reproducing_kernel(sp)
    rng = np.random.default_rng(4)
    z = rng.uniform(-3, 3, (5, 2)) + 1j * rng.uniform(-1.5, 1.5, (5, 2))
    w = rng.uniform(-3, 3, (5, 2)) + 1j * rng.uniform(-1.5, 1.5, (5, 2))
    assert K.hermitian_defect(z, w) < 1e-10 * np.max(np.abs(K(z, np.conj(w))))
    diag = K(z, np.conj(z))
    assert np.all(diag.real > 0) and np.max(np.abs(diag.imag) / diag.real) < 1e-12
