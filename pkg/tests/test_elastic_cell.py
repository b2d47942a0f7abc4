import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homog_lab import elastic_cell
from homog_lab.elastic_cell import (assemble_cell_system, bulk_density, closed_form_density,
                                    membrane_cell_density, solve_cell)
from homog_lab.energies import elastic_energy, weak_membrane_energy
from homog_lab.exceptions import InvalidParameterError, RefusalError, SolverError
from homog_lab.lattice import (CoefficientField, LatticeFunction, LatticeRegion, NeighborSet,
                               cell_geometry)

NN = CoefficientField.uniform(2, 1.0)
ND = NeighborSet.with_diagonals()


def checkerboard_diagonals():
    """Diagonal bonds active from even sites only (period 2)."""
    vals = np.ones((2, 2, 4))
    vals[0, 1, 2:] = vals[1, 0, 2:] = 0.0
    return CoefficientField(ND, vals)


def test_zero_slope():
    sys_ = assemble_cell_system(NN, 4, [0.0, 0.0])
    assert np.all(sys_.rhs == 0)
    res = solve_cell(sys_)
    assert res.value == 0.0
    assert np.all(res.minimizer.values == 0.0)


def test_affine_solves_full_graph():
    sys_ = assemble_cell_system(CoefficientField.uniform(2, 1.0, ND), 6, [0.7, -1.3])
    x = sys_.values[sys_.free_pos]
    assert np.max(np.abs(sys_.matrix @ x - sys_.rhs)) < 1e-12


def test_single_free_site_averages_neighbours():
    field = CoefficientField.uniform(1, 1.0)
    sys_ = assemble_cell_system(field, 3, [2.0], x0=[0.3])
    assert sys_.n_free == 1
    res = solve_cell(sys_)
    centre = sys_.geometry.idx[sys_.free_pos[0]]
    left, right = res.minimizer.lookup([centre - 1, centre + 1])
    assert res.minimizer.lookup([centre])[0] == pytest.approx((left + right) / 2, abs=1e-14)


def test_matrix_symmetric_with_positive_diagonal():
    field = CoefficientField.random(np.random.default_rng(0), 2, 2, ND, zero_prob=0.4)
    sys_ = assemble_cell_system(field, 7, [1.0, 2.0])
    m = sys_.matrix.toarray()
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) > 0)


def test_closed_form():
    assert closed_form_density(NeighborSet.nearest(2), [0.0, 0.0]) == 0.0
    assert closed_form_density(NeighborSet.nearest(2), [2.0, 1.0]) == 5.0
    assert closed_form_density(ND, [1.0, 0.0]) == 3.0


def test_bulk_density_closed_form_anchor():
    est = bulk_density(NN, [2.0, 1.0], [4, 8, 16])
    for _, v in est.samples:
        assert v == pytest.approx(5.0, abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_bulk_density_fully_positive_fields(seed):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, int(rng.integers(1, 4)), ND)
    zeta = rng.normal(size=2)
    est = bulk_density(field, zeta, [4, 7])
    assert est.estimate == pytest.approx(closed_form_density(ND, zeta), abs=1e-8)


def test_checkerboard_between_nn_and_full():
    zeta = [1.0, 0.5]
    nn = closed_form_density(NeighborSet.nearest(2), zeta)
    full = closed_form_density(ND, zeta)
    est = bulk_density(checkerboard_diagonals(), zeta, [4, 8, 12]).estimate
    assert nn < est < full


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_homogeneity_minimality_and_residual(seed):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, 2, ND, zero_prob=0.5)
    zeta = rng.normal(size=2)
    T = int(rng.integers(3, 9))
    sys_ = assemble_cell_system(field, T, zeta)
    res = solve_cell(sys_)
    assert res.diagnostics["energy"] <= res.diagnostics["affine_energy"] + 1e-12
    x = res.minimizer.lookup(sys_.geometry.idx[sys_.free_pos])
    grad = sys_.matrix @ x - sys_.rhs
    assert np.linalg.norm(grad) <= 1e-9 * max(1.0, np.linalg.norm(sys_.rhs))
    twice = solve_cell(assemble_cell_system(field, T, 2 * zeta)).value
    assert twice == pytest.approx(4 * res.value, rel=1e-9, abs=1e-12)
    trace = res.diagnostics["energy_trace"]
    assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))


def test_solution_energy_matches_elastic_energy():
    field = checkerboard_diagonals()
    T = 6
    res = solve_cell(assemble_cell_system(field, T, [0.3, 1.1]))
    u = res.minimizer
    owners = LatticeRegion.from_sites(u.sites[np.all(np.abs(u.sites - 0.5) < T / 2, axis=1)])
    assert elastic_energy(u, field, A=owners) == pytest.approx(res.value * T ** 2, rel=1e-12)


def test_solver_errors():
    sys_ = assemble_cell_system(checkerboard_diagonals(), 10, [1.0, 0.0])
    with pytest.raises(InvalidParameterError):
        solve_cell(sys_, tol=0.0)
    with pytest.raises(SolverError) as err:
        elastic_cell._pcg(sys_.matrix, sys_.rhs, np.zeros(sys_.n_free), 1e-14, 2)
    assert err.value.diagnostics["iterations"] == 2
    with pytest.raises(InvalidParameterError):
        assemble_cell_system(NN, 1, [1.0, 0.0])


# -- weak-membrane cell -----------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([3, 4]))
def test_membrane_cell_equals_elastic_for_small_slopes(seed, T):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, 2, NeighborSet.nearest(2), 0.5, 2.0,
                                    nondegenerate=True)
    zeta = rng.normal(size=2)
    scale = np.max(np.abs(field.neighbors.vectors @ zeta))
    zeta *= np.sqrt(field.c_min / 4) / scale * rng.uniform(0.1, 1.0)
    h = solve_cell(assemble_cell_system(field, T, zeta)).value
    f = membrane_cell_density(field, zeta, T)
    assert f.value == pytest.approx(h, abs=1e-10)
    assert f.diagnostics["broken"] == 0


def test_membrane_cell_can_break_below_c_min():
    # slope 0.95 along e1 with c = 1: each strain is below the threshold, yet
    # breaking the two bonds next to the free site pays
    zeta = [0.95, 0.0]
    h = solve_cell(assemble_cell_system(NN, 3, zeta)).value
    f = membrane_cell_density(NN, zeta, 3)
    assert f.value < h - 1e-3
    assert f.diagnostics["broken"] > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_membrane_cell_at_most_elastic(seed):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, 2)
    zeta = rng.normal(size=2) * rng.uniform(0.1, 4.0)
    for T in (2, 3, 4):
        h = solve_cell(assemble_cell_system(field, T, zeta)).value
        f = membrane_cell_density(field, zeta, T)
        assert f.value <= h + 1e-12
        # the returned minimizer attains the value
        u = f.minimizer
        cube = u.sites[np.all(np.abs(u.sites - (0.5 if T % 2 == 0 else 0.0)) < T / 2, axis=1)]
        F = weak_membrane_energy(u, field, A=LatticeRegion.from_sites(cube)).total
        assert F == pytest.approx(f.value * T ** 2, rel=1e-9, abs=1e-12)


def test_membrane_cell_large_slope_breaks():
    h = solve_cell(assemble_cell_system(NN, 4, [5.0, 0.0])).value
    f = membrane_cell_density(NN, [5.0, 0.0], 4).value
    assert f < h
    assert membrane_cell_density(NN, [0.0, 0.0], 4).value == 0.0


def test_membrane_cell_matches_exhaustive_enumeration():
    rng = np.random.default_rng(5)
    field = CoefficientField.random(rng, 2, 2)
    zeta = np.array([0.9, -0.7])
    T = 3
    geom = cell_geometry(field.neighbors, T)
    vals = geom.idx @ zeta
    free = int(np.flatnonzero(geom.free)[0])
    touching, rest = [], 0.0
    for k, (tails, heads) in enumerate(geom.bonds):
        for t, h, c in zip(tails, heads, field.coeff(geom.idx[tails], k)):
            if free in (t, h):
                touching.append((h if t == free else t, c))
            else:
                rest += min((vals[h] - vals[t]) ** 2, c)
    # one free site with four bonds: enumerate all 16 line fields
    best = np.inf
    for mask in range(1 << len(touching)):
        broken = [c for j, (_, c) in enumerate(touching) if (mask >> j) & 1]
        nbr = [vals[o] for j, (o, _) in enumerate(touching) if not (mask >> j) & 1]
        x = np.mean(nbr) if nbr else 0.0
        best = min(best, rest + sum(broken) + sum((v - x) ** 2 for v in nbr))
    assert membrane_cell_density(field, zeta, T).value == pytest.approx(best / T ** 2, rel=1e-12)


def test_membrane_cell_refusal_and_heuristic():
    with pytest.raises(RefusalError) as err:
        membrane_cell_density(CoefficientField.uniform(2, 1.0, ND), [1.0, 0.0], 4)
    assert err.value.count > 18
    res = membrane_cell_density(NN, [3.0, 0.5], 6, mode="heuristic")
    assert res.diagnostics["approximate"]
    h = solve_cell(assemble_cell_system(NN, 6, [3.0, 0.5])).value
    assert res.value <= h + 1e-12
    with pytest.raises(InvalidParameterError):
        membrane_cell_density(NN, [1.0, 0.0], 4, mode="bogus")


def test_membrane_invariant_under_constant_shift():
    rng = np.random.default_rng(2)
    field = CoefficientField.random(rng, 2, 2)
    u = LatticeFunction.from_callable(LatticeRegion.cube(5.0, dim=2), 1.0,
                                      lambda x: rng.normal(size=len(x)))
    shifted = u.with_values(u.values + 7.5)
    assert weak_membrane_energy(shifted, field).total == pytest.approx(
        weak_membrane_energy(u, field).total, rel=1e-12)
