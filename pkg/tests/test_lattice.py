import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homog_lab.exceptions import IncompleteFunctionError, InvalidParameterError
from homog_lab.lattice import (CoefficientField, LatticeFunction, LatticeRegion, NeighborSet,
                               SiteIndex, ball_volume, cell_geometry, coefficient_at,
                               count_in_dilation, jump_datum, lattice_indices, lattice_points,
                               rotation_to)

unit_vectors = st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


# -- neighbor sets and coefficient fields ------------------------------------

def test_neighbor_set_validation():
    with pytest.raises(InvalidParameterError):
        NeighborSet([[1, 0], [1, 0], [0, 1]])
    with pytest.raises(InvalidParameterError):
        NeighborSet([[0, 0], [1, 0], [0, 1]])
    with pytest.raises(InvalidParameterError):
        NeighborSet([[1, 0], [1, 1]])  # e2 missing
    nb = NeighborSet([[1, 0], [0, 1], [2, -1]])
    assert nb.range == 2


def test_field_rejects_bad_values():
    nb = NeighborSet.nearest(2)
    with pytest.raises(InvalidParameterError):
        CoefficientField(nb, [[[1.0, -0.1]]])
    with pytest.raises(InvalidParameterError):
        CoefficientField(nb, [[[1.0, np.nan]]])
    with pytest.raises(InvalidParameterError):
        CoefficientField(nb, [[[1.0, 0.0]]])  # basis coefficient must be positive
    with pytest.raises(InvalidParameterError):
        CoefficientField(nb, [[[1.0, 2.0]]], c_max=1.5)
    nd = NeighborSet.with_diagonals()
    with pytest.raises(InvalidParameterError):
        CoefficientField(nd, [[[1.0, 1.0, 0.2, 0.0]]], nondegenerate=True)
    f = CoefficientField(nd, [[[1.0, 1.0, 0.0, 2.0]]], nondegenerate=True)
    assert f.c_min == 1.0 and f.c_max == 2.0


def test_coefficient_at_constant_and_period_two():
    f = CoefficientField.uniform(2, 1.0)
    assert coefficient_at(f, (0.3, -7.1), 1, 0.1) == 1.0
    f1 = CoefficientField(NeighborSet.nearest(1), [[1.0], [3.0]])
    assert coefficient_at(f1, 1.5, 0, 0.5) == 3.0
    assert coefficient_at(f1, 1.0, 0, 0.5) == 1.0


def test_alternating_diagonal_table():
    odd = CoefficientField.alternating_diagonal(True)
    even = CoefficientField.alternating_diagonal(False)
    for k, xi in enumerate(odd.neighbors.vectors):
        basis = np.count_nonzero(xi) == 1
        assert coefficient_at(odd, (0, 0), k, 1.0) == 1.0
        assert coefficient_at(even, (3, 5), k, 1.0) == (1.0 if basis else 0.0)


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(-20, 20), st.integers(-20, 20), st.integers(-3, 3),
       st.integers(-3, 3), st.sampled_from([0.5, 0.25, 1.0]))
def test_coefficient_periodicity(T, i1, i2, z1, z2, eps):
    f = CoefficientField.random(np.random.default_rng(T), 2, T)
    i = np.array([i1, i2]) * eps
    j = i + eps * T * np.array([z1, z2])
    for k in range(len(f.neighbors)):
        assert coefficient_at(f, i, k, eps) == coefficient_at(f, j, k, eps)


# -- rotations and regions ---------------------------------------------------

def test_rotation_examples():
    assert np.array_equal(rotation_to([0.0, 1.0]), np.eye(2))
    R = rotation_to(np.array([1.0, 1.0]) / np.sqrt(2))
    s = 1 / np.sqrt(2)
    assert np.allclose(R, [[s, s], [-s, s]], atol=1e-14)
    R = rotation_to([0.0, 0.0, -1.0])
    assert np.allclose(R @ [0, 0, 1], [0, 0, -1])
    assert abs(np.linalg.det(R) - 1) < 1e-12


@settings(max_examples=200)
@given(unit_vectors)
def test_rotation_is_proper_and_maps_ed(nu):
    R = rotation_to(nu)
    d = nu.shape[0]
    assert np.max(np.abs(R.T @ R - np.eye(d))) <= 1e-12
    assert abs(np.linalg.det(R) - 1) <= 1e-12
    assert np.allclose(R[:, -1], nu, atol=1e-12)


def test_lattice_points_examples():
    pts = lattice_points(LatticeRegion.cube(1.0, dim=2), 0.5)
    assert pts.tolist() == [[0.0, 0.0]]
    pts = lattice_points(LatticeRegion.cube(1.0, dim=1), 0.25)
    assert pts.ravel().tolist() == [-0.25, 0.0, 0.25]


def test_rotated_cube_matches_bounding_box_scan():
    nu = np.array([1.0, 1.0]) / np.sqrt(2)
    region = LatticeRegion.cube(4.0, nu=nu)
    R = rotation_to(nu)
    scan = [p for p in itertools.product(range(-4, 5), repeat=2)
            if np.max(np.abs(R.T @ np.array(p, float))) < 2 - 1e-12]
    got = lattice_indices(region, 1.0)
    assert sorted(map(tuple, got.tolist())) == sorted(scan)
    assert got.tolist() == sorted(got.tolist())


@settings(max_examples=40)
@given(st.integers(-5, 5), st.integers(-5, 5), unit_vectors.filter(lambda v: v.shape[0] == 2))
def test_lattice_points_translation_invariance(a, b, nu):
    eps = 0.5
    shift = eps * np.array([a, b])
    base = lattice_points(LatticeRegion.cube(2.3, center=[0.1, 0.2], nu=nu), eps)
    moved = lattice_points(LatticeRegion.cube(2.3, center=np.array([0.1, 0.2]) + shift, nu=nu),
                           eps)
    assert np.allclose(base + shift, moved)


def test_jump_datum():
    assert jump_datum([0, 0], [0, 1], -1, 1, [3, 0]) == 1
    assert jump_datum([0, 0], [0, 1], -1, 1, [0, -0.5]) == -1
    rng = np.random.default_rng(0)
    sites = rng.normal(size=(10_000, 2))
    nu = np.array([0.6, 0.8])
    x0 = np.array([0.1, -0.2])
    got = jump_datum(x0, nu, 2.0, 5.0, sites)
    expect = np.array([5.0 if (s - x0) @ nu >= 0 else 2.0 for s in sites])
    assert np.array_equal(got, expect)


# -- counting -----------------------------------------------------------------

def test_count_in_dilation_single_point():
    open_ = count_in_dilation([[0.0, 0.0]], 1.0, 1.0)
    closed = count_in_dilation([[0.0, 0.0]], 1.0, 1.0, closed=True)
    assert open_.count == 1
    assert closed.count == 5
    # 4^d |E_rho| / |B_1| with |E_rho| close to pi (quadrature over-estimate)
    assert closed.bound == pytest.approx(16.0, rel=0.1)
    assert closed.bound_satisfied and open_.bound_satisfied


def test_count_in_dilation_empty():
    res = count_in_dilation(np.zeros((0, 2)), 1.0, 0.5)
    assert res.count == 0 and res.bound == 0 and res.bound_satisfied


def test_ball_volume():
    assert ball_volume(2) == pytest.approx(np.pi)
    assert ball_volume(3) == pytest.approx(4 * np.pi / 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10), st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.integers(0, 2**31))
def test_count_bound_property(n, rho, eps, seed):
    pts = np.random.default_rng(seed).uniform(-2, 2, size=(n, 2))
    assert count_in_dilation(pts, rho, eps).bound_satisfied
    assert count_in_dilation(pts, rho, eps, closed=True).bound_satisfied


# -- lattice functions ---------------------------------------------------------

def test_lattice_function_sorting_and_lookup():
    u = LatticeFunction(0.5, [[1, 0], [0, 0], [0, 1]], [3.0, 1.0, 2.0])
    assert u.idx.tolist() == [[0, 0], [0, 1], [1, 0]]
    assert u.values.tolist() == [1.0, 2.0, 3.0]
    assert u.lookup([[1, 0]]).tolist() == [3.0]
    with pytest.raises(IncompleteFunctionError) as err:
        u.lookup([[5, 5]])
    assert err.value.site == (2.5, 2.5)


def test_lattice_function_rejects_duplicates_and_nan():
    with pytest.raises(InvalidParameterError):
        LatticeFunction(1.0, [[0], [0]], [1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        LatticeFunction(1.0, [[0], [1]], [1.0, np.inf])


def test_site_index():
    idx = np.array([[0, 0], [0, 3], [2, -1]])
    si = SiteIndex(idx)
    assert si.find([[2, -1], [1, 1], [0, 3]]).tolist() == [2, -1, 1]


def test_cell_geometry_axis():
    geom = cell_geometry(NeighborSet.nearest(2), 4)
    cube = geom.idx[:geom.n_cube]
    assert cube.min(axis=0).tolist() == [-1, -1] and cube.max(axis=0).tolist() == [2, 2]
    assert geom.n_cube == 16 and geom.n_free == 4 and geom.width == 1.0
    # every bond touching a free site is owned by a cube site
    heads = np.concatenate([h for _, h in geom.bonds])
    assert np.all(heads >= 0)
