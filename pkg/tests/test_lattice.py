import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flatpath.errors import SingularBasis
from flatpath.lattice import LatticeBasis, ReciprocalLattice, cell_volume, count_upper_bound, enumerate_shell, reciprocal

TWO_PI = 2 * math.pi


def brute_force(recip, radius, box):
    out = set()
    for m in itertools.product(range(-box, box + 1), repeat=recip.dim):
        if np.linalg.norm(recip.vectors(np.array(m))) <= radius + 1e-12:
            out.add(m)
    return out


def test_reciprocal_of_identity_is_2pi():
    r = reciprocal(LatticeBasis(np.eye(3)))
    np.testing.assert_allclose(r.matrix, TWO_PI * np.eye(3), atol=1e-15)


def test_reciprocal_of_diagonal():
    r = reciprocal(LatticeBasis.diagonal([2.0, 5.0]))
    np.testing.assert_allclose(r.matrix, np.diag([TWO_PI / 2, TWO_PI / 5]), rtol=1e-15)


def test_reciprocal_duality_random():
    rng = np.random.default_rng(3)
    for _ in range(20):
        B = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        Br = reciprocal(LatticeBasis(B)).matrix
        assert np.linalg.norm(Br.T @ B - TWO_PI * np.eye(3)) < 1e-12


def test_singular_basis_rejected():
    with pytest.raises(SingularBasis):
        LatticeBasis(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularBasis):
        LatticeBasis(np.array([[1.0, 1.0], [0.0, 1e-14]]))


def test_shell_unit_square():
    shell = enumerate_shell(ReciprocalLattice(TWO_PI * np.eye(2)), TWO_PI * 1.01)
    assert shell.as_set() == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_shell_radius_zero():
    shell = enumerate_shell(ReciprocalLattice(np.array([[1.0, 0.3], [0.0, 2.0]])), 0.0)
    assert shell.as_set() == {(0, 0)}


def test_shell_unit_cube_19_points():
    shell = enumerate_shell(ReciprocalLattice(TWO_PI * np.eye(3)), TWO_PI * math.sqrt(2) * 1.01)
    assert len(shell) == 19


def test_shell_ordering_is_by_norm():
    shell = enumerate_shell(reciprocal(LatticeBasis(np.array([[1.0, 0.4], [0.0, 0.8]]))), 30.0)
    assert np.all(np.diff(shell.norm2) >= -1e-9)
    assert shell.indices[0].tolist() == [0, 0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-0.6, 0.6), min_size=4, max_size=4), st.floats(0.0, 25.0))
def test_shell_matches_brute_force(shear, radius):
    B = np.eye(2) + np.array(shear).reshape(2, 2) * 0.5
    recip = reciprocal(LatticeBasis(B))
    shell = enumerate_shell(recip, radius)
    box = int(math.ceil(radius / np.linalg.svd(recip.matrix, compute_uv=False)[-1])) + 1
    assert shell.as_set() == brute_force(recip, radius, box)
    assert len(shell) == len(shell.as_set())
    assert len(shell) <= count_upper_bound(recip, radius)


def test_cell_volume_examples():
    assert cell_volume(LatticeBasis(np.eye(3))) == pytest.approx(1.0)
    assert cell_volume(LatticeBasis.diagonal([2.0, 3.0])) == pytest.approx(6.0)
    assert cell_volume(LatticeBasis.from_rows([[1, 1], [0, 1]])) == pytest.approx(1.0)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        enumerate_shell(ReciprocalLattice(np.eye(1)), -1.0)


def test_indices_round_trip():
    recip = reciprocal(LatticeBasis.from_rows([[1.0, 0.5], [0.0, 1.2]]))
    m = np.array([[3, -2], [0, 5]])
    np.testing.assert_array_equal(recip.indices_of(recip.vectors(m)), m)
    with pytest.raises(ValueError):
        recip.indices_of(np.array([0.1, 0.0]))
