from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homog_lab.energies import spin_energy
from homog_lab.exceptions import InvalidParameterError, RefusalError
from homog_lab.lattice import (CoefficientField, LatticeFunction, LatticeRegion, NeighborSet,
                               cell_geometry)
from homog_lab.spin_cell import (WulffTable, brute_force_ground_state, build_cut_network,
                                 cell_surface_energy, convexity_check, min_cut_ground_state,
                                 surface_density, sweep_directions, wulff_sample)

NN = CoefficientField.uniform(2, 1.0)
S2 = 1 / np.sqrt(2)


def random_direction(rng, d=2):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_network_rejects_small_T():
    with pytest.raises(InvalidParameterError):
        build_cut_network(NN, 1, [0.0, 1.0])


def test_flat_interface_cut_weight():
    net = build_cut_network(NN, 4, [0.0, 1.0])
    flat = np.where(net.geometry.idx[net.node_site[:net.n_free], 1] >= 0.5, 1.0, -1.0)
    assert net.offset + net.cut_weight(flat) == 4.0
    assert np.all(net.caps >= 0)


def test_infinite_capacity_representation():
    field = CoefficientField.random(np.random.default_rng(0), 2, 2)
    net = build_cut_network(field, 5, [0.6, 0.8])
    n_bonds = len(net.bond_caps)
    assert net.inf_capacity > field.c_max * n_bonds
    assert np.all(net.caps[net.caps > field.c_max] == net.inf_capacity)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_cut_weight_equals_spin_energy(seed):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, int(rng.integers(1, 3)), NeighborSet.with_diagonals(),
                                    zero_prob=0.3)
    T = int(rng.integers(2, 7))
    nu = random_direction(rng)
    net = build_cut_network(field, T, nu)
    spins = rng.choice([-1.0, 1.0], size=net.n_free)
    geom = net.geometry
    full = LatticeFunction(1.0, geom.idx, net.full_spins(spins))
    owners = LatticeRegion.from_sites(geom.idx[:geom.n_cube].astype(float))
    ref = spin_energy(full, field, A=owners)
    assert net.offset + net.cut_weight(spins) == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert net.energy(spins) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_chain_capacities():
    # 1D chain: frozen +1 | free | free | frozen -1, capacities 1, 3, 2
    field = CoefficientField(NeighborSet.nearest(1), [[1.0], [3.0], [2.0], [5.0]])
    gs = brute_force_ground_state(field, 4, [1.0], x0=[1.0])
    assert gs.energy == 1.0
    net = build_cut_network(field, 4, [1.0], x0=[1.0])
    assert min_cut_ground_state(net).energy == 1.0


def test_one_sign_datum_gives_zero():
    # re-attach every frozen site to the source: the whole boundary is +1
    net = build_cut_network(NN, 6, [0.6, 0.8])
    to_sink = net.heads == net.sink
    tails, heads = net.tails.copy(), net.heads.copy()
    tails[to_sink], heads[to_sink] = net.source, net.tails[to_sink]
    back = np.flatnonzero(to_sink) + 1  # reverse arcs of the redirected pairs
    tails[back], heads[back] = heads[back - 1], net.source
    frozen = net.n_free + np.arange(len(net.node_spin) - net.n_free)
    plus = replace(net, tails=tails, heads=heads, offset=0.0, datum=np.ones_like(net.datum),
                   node_spin=np.concatenate([np.zeros(net.n_free), np.ones(frozen.size)]))
    gs = min_cut_ground_state(plus)
    assert gs.energy == 0.0
    free_sites = net.geometry.idx[net.node_site[:net.n_free]]
    assert np.all(gs.minimizer.lookup(free_sites) == 1.0)


def test_brute_force_T2():
    gs = brute_force_ground_state(NN, 2, [0.0, 1.0])
    assert gs.energy == 2.0


def test_brute_force_refusal():
    with pytest.raises(RefusalError) as err:
        brute_force_ground_state(NN, 8, [0.0, 1.0])
    assert err.value.count == cell_geometry(NN.neighbors, 8).n_free


def test_zero_diagonal_matches_diagonal_free_field():
    nd = NeighborSet.with_diagonals()
    zero_diag = CoefficientField(nd, [[[1.0, 1.0, 0.0, 0.0]]])
    for T in (3, 4):
        for nu in ([0.0, 1.0], [S2, S2]):
            a = brute_force_ground_state(zero_diag, T, nu).energy
            b = brute_force_ground_state(NN, T, nu).energy
            assert a == b


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_min_cut_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    nb = NeighborSet.with_diagonals() if rng.random() < 0.5 else NeighborSet.nearest(2)
    field = CoefficientField.random(rng, 2, int(rng.integers(1, 4)), nb, zero_prob=0.3)
    nu = random_direction(rng)
    T = int(rng.integers(2, 6))
    try:
        brute = brute_force_ground_state(field, T, nu, max_free=12)
    except RefusalError:
        return
    gs = min_cut_ground_state(build_cut_network(field, T, nu))
    assert gs.energy == pytest.approx(brute.energy, abs=1e-9)
    diag = gs.diagnostics
    assert diag["flow"] == pytest.approx(diag["cut_weight"], abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_scaling_and_flip_symmetry(seed, s):
    rng = np.random.default_rng(seed)
    field = CoefficientField.random(rng, 2, 2, NeighborSet.with_diagonals(), zero_prob=0.3)
    nu = random_direction(rng)
    T = int(rng.integers(2, 8))
    base = cell_surface_energy(field, T, nu).value
    assert cell_surface_energy(field.scaled(s), T, nu).value == pytest.approx(s * base, rel=1e-12)
    assert cell_surface_energy(field, T, -nu).value == pytest.approx(base, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_adding_bonds_never_lowers_ground_state(seed):
    rng = np.random.default_rng(seed)
    nb = NeighborSet.with_diagonals()
    values = rng.uniform(0.5, 2.0, size=(2, 2, 4))
    values[..., 2:] *= rng.random((2, 2, 2)) < 0.5
    field = CoefficientField(nb, values)
    more = values.copy()
    more[..., 2:] += rng.uniform(0.0, 1.0, size=(2, 2, 2))
    nu = random_direction(rng)
    T = int(rng.integers(2, 8))
    lo = cell_surface_energy(field, T, nu).value
    hi = cell_surface_energy(CoefficientField(nb, more), T, nu).value
    assert hi >= lo - 1e-12
    nn_only = cell_surface_energy(CoefficientField(NeighborSet.nearest(2), values[..., :2]), T, nu)
    assert lo >= nn_only.value - 1e-12


def test_axis_density_is_one():
    est = surface_density(NN, [0.0, 1.0], [2, 3, 4, 8, 16])
    assert all(v == 1.0 for _, v in est.samples)
    assert est.estimate == 1.0


def test_diagonal_density_approaches_l1_norm():
    est = surface_density(NN, [S2, S2], [8, 16, 32])
    assert est.estimate == pytest.approx(np.sqrt(2), rel=0.05)
    # samples oscillate in T, so the extrapolation is reported, not trusted
    (t1, v1), (t2, v2) = est.samples[-2:]
    assert est.extrapolated == pytest.approx((t2 * v2 - t1 * v1) / (t2 - t1))


def test_layered_field_selects_cheap_layer():
    # e2 bonds cost 1 from even rows and 3 from odd rows
    field = CoefficientField(NeighborSet.nearest(2), [[[1.0, 1.0], [1.0, 3.0]]] * 2)
    assert field.coeff([[0, 1]], 1)[0] == 3.0
    est = surface_density(field, [0.0, 1.0], [2, 4, 6, 8])
    assert all(v == 1.0 for _, v in est.samples)


def test_sizes_validation():
    with pytest.raises(InvalidParameterError):
        surface_density(NN, [0.0, 1.0], [8, 4])
    with pytest.raises(InvalidParameterError):
        surface_density(NN, [0.0, 1.0], [])


def test_wulff_axis_values_and_symmetry():
    table = wulff_sample(NN, 4, 8)
    assert np.array_equal(table.phi, np.ones(4))
    table = wulff_sample(CoefficientField.random(np.random.default_rng(3), 2, 2), 8, 6)
    half = len(table.phi) // 2
    assert np.allclose(table.phi[:half], table.phi[half:], rtol=1e-12)


def test_diagonal_reinforced_ordering():
    # phi(nu) tends to |nu_1| + |nu_2| + |nu_1 + nu_2| + |nu_1 - nu_2|:
    # 3 along e1 and 2 sqrt(2) along the diagonal, so the axis is the costlier direction
    field = CoefficientField.alternating_diagonal(True)
    axis = cell_surface_energy(field, 32, [1.0, 0.0]).value
    diag = cell_surface_energy(field, 32, [S2, S2]).value
    assert axis == 3.0
    assert diag == pytest.approx(2 * np.sqrt(2), rel=0.03)
    assert diag < axis


def test_sweep_directions():
    d2 = sweep_directions(8, 2)
    assert np.allclose(d2[2], [0.0, 1.0]) and d2[2][0] == 0.0
    d3 = sweep_directions(50, 3)
    assert np.allclose(np.linalg.norm(d3, axis=1), 1.0)
    assert abs(d3.mean(axis=0)).max() < 0.05


def test_convexity_check_on_known_shapes():
    dirs = sweep_directions(32, 2)
    l1 = np.abs(dirs).sum(axis=1)
    ok, ratio = convexity_check(WulffTable(dirs, l1, 0))
    assert ok and ratio == pytest.approx(1.0)
    dented = l1.copy()
    dented[4] *= 1.2
    ok, ratio = convexity_check(WulffTable(dirs, dented, 0))
    assert not ok and ratio < 0.98
