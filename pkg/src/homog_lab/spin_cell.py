"""Surface energy density of the spin cell problem, solved as a minimum s-t cut.

A cell is the cube ``Q_T^nu(x0)`` on ``Z^d``. Spins are prescribed by the
jump datum (``+1`` where ``(i - x0) . nu >= 0``) on the exterior and on the
boundary layer of the cube whose width is the interaction range; the bonds
owned by cube sites are counted, each disagreeing bond costing ``c_{i,xi}``.
All couplings are nonnegative, so the ground state is a minimum cut.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import ConvexHull

from .energies import check_spins
from .exceptions import InvalidParameterError, RefusalError
from .lattice import (CellGeometry, CoefficientField, LatticeFunction, _as_unit, cell_center,
                      cell_geometry)
from .maxflow import max_flow
from .results import CellProblemResult, DensityEstimate, check_sizes, richardson


class SpinConfiguration(LatticeFunction):
    """Lattice function with values in ``{-1, +1}``."""

    def __init__(self, eps, idx, values, region=None):
        super().__init__(eps, idx, check_spins(values), region)


def _cell_bonds(field: CoefficientField, geom: CellGeometry):
    """All counted bonds with positive coefficient as ``(a, b, c)`` site-position arrays."""
    a, b, c = [], [], []
    for k, (tails, heads) in enumerate(geom.bonds):
        coeff = field.coeff(geom.idx[tails], k)
        keep = coeff > 0
        a.append(tails[keep])
        b.append(heads[keep])
        c.append(coeff[keep])
    return np.concatenate(a), np.concatenate(b), np.concatenate(c)


def _datum(geom: CellGeometry, x0, nu) -> np.ndarray:
    return np.where((geom.idx - x0) @ nu >= 0, 1.0, -1.0)


@dataclass
class FlowNetwork:
    """Cut network of one spin cell problem.

    Nodes ``0 .. n_free-1`` are free sites, the following ones frozen sites
    adjacent to a free site, then ``source`` (spin +1) and ``sink`` (spin -1).
    Frozen sites hang off the terminals by arcs of capacity
    ``inf_capacity``. For any admissible spin field, ``offset + cut weight``
    is its cell energy, ``offset`` being the cost of bonds between two
    frozen sites.
    """

    n_nodes: int
    source: int
    sink: int
    tails: np.ndarray
    heads: np.ndarray
    caps: np.ndarray
    n_free: int
    node_site: np.ndarray        # geometry position of each non-terminal node
    node_spin: np.ndarray        # prescribed spin, 0 for free nodes
    bond_nodes: np.ndarray       # (m, 2) node pairs of bonds with a free endpoint
    bond_caps: np.ndarray
    offset: float
    inf_capacity: float
    geometry: CellGeometry
    datum: np.ndarray
    x0: np.ndarray
    nu: np.ndarray
    fixed_cut_edges: int = 0

    def full_spins(self, free_spins) -> np.ndarray:
        """Spin per geometry site for the given free-node spins."""
        spins = self.datum.copy()
        spins[self.node_site[:self.n_free]] = check_spins(free_spins)
        return spins

    def cut_weight(self, free_spins) -> float:
        """Capacity of arcs leaving the ``+1`` side for this assignment."""
        free_spins = check_spins(free_spins)
        side = np.concatenate([free_spins > 0, self.node_spin[self.n_free:] > 0, [True, False]])
        crossing = side[self.tails] & ~side[self.heads]
        return float(np.sum(self.caps[crossing]))

    def energy(self, free_spins) -> float:
        """Cell energy by re-summing disagreeing bonds."""
        spins = np.concatenate([check_spins(free_spins), self.node_spin[self.n_free:]])
        a, b = self.bond_nodes.T
        return self.offset + float(np.sum(self.bond_caps[spins[a] != spins[b]]))


def build_cut_network(field: CoefficientField, T: int, nu, x0=None) -> FlowNetwork:
    """Encode the spin cell problem on ``Q_T^nu(x0)`` as an s-t cut network."""
    if T < 2:
        raise InvalidParameterError("cell size T must be at least 2")
    d = field.dim
    nu = _as_unit(nu, d)
    x0 = cell_center(T, d) if x0 is None else np.asarray(x0, dtype=float)
    geom = cell_geometry(field.neighbors, T, nu, x0)
    datum = _datum(geom, x0, nu)
    a, b, c = _cell_bonds(field, geom)

    free = geom.free
    fixed_fixed = ~free[a] & ~free[b]
    disagree = datum[a] != datum[b]
    offset = float(np.sum(c[fixed_fixed & disagree]))
    fixed_cut_edges = int(np.count_nonzero(fixed_fixed & disagree))

    a, b, c = a[~fixed_fixed], b[~fixed_fixed], c[~fixed_fixed]
    free_pos = np.flatnonzero(free)
    frozen_pos = np.unique(np.concatenate([a[~free[a]], b[~free[b]]]))
    node_site = np.concatenate([free_pos, frozen_pos]).astype(np.int64)
    node_of = np.full(geom.idx.shape[0], -1, dtype=np.int64)
    node_of[node_site] = np.arange(node_site.shape[0])
    n_free = free_pos.shape[0]
    source, sink = node_site.shape[0], node_site.shape[0] + 1
    node_spin = np.concatenate([np.zeros(n_free), datum[frozen_pos]])

    inf_cap = field.c_max * (len(c) + 1) + 1.0
    na, nb = node_of[a], node_of[b]
    tails = [np.stack([na, nb], axis=1).ravel()]
    heads = [np.stack([nb, na], axis=1).ravel()]
    caps = [np.repeat(c, 2)]
    plus = n_free + np.flatnonzero(node_spin[n_free:] > 0)
    minus = n_free + np.flatnonzero(node_spin[n_free:] < 0)
    tails += [np.stack([np.full(plus.size, source), plus], axis=1).ravel(),
              np.stack([minus, np.full(minus.size, sink)], axis=1).ravel()]
    heads += [np.stack([plus, np.full(plus.size, source)], axis=1).ravel(),
              np.stack([np.full(minus.size, sink), minus], axis=1).ravel()]
    caps += [np.tile([inf_cap, 0.0], plus.size), np.tile([inf_cap, 0.0], minus.size)]
    return FlowNetwork(
        n_nodes=node_site.shape[0] + 2, source=source, sink=sink,
        tails=np.concatenate(tails).astype(np.int64), heads=np.concatenate(heads).astype(np.int64),
        caps=np.concatenate(caps), n_free=n_free, node_site=node_site, node_spin=node_spin,
        bond_nodes=np.stack([na, nb], axis=1), bond_caps=c, offset=offset,
        inf_capacity=inf_cap, geometry=geom, datum=datum, x0=x0, nu=nu,
        fixed_cut_edges=fixed_cut_edges)


@dataclass
class GroundState:
    energy: float
    minimizer: SpinConfiguration
    diagnostics: dict = dc_field(default_factory=dict)

    def __iter__(self):
        return iter((self.energy, self.minimizer))


def min_cut_ground_state(network: FlowNetwork) -> GroundState:
    """Exact ground state of the cell energy via max-flow/min-cut."""
    if np.any(network.caps < 0) or not np.all(np.isfinite(network.caps)):
        raise InvalidParameterError("network capacities must be finite and nonnegative")
    t0 = time.perf_counter()
    res = max_flow(network.n_nodes, network.tails, network.heads, network.caps,
                   network.source, network.sink)
    elapsed = time.perf_counter() - t0
    free_spins = np.where(res.source_side[:network.n_free], 1.0, -1.0)
    cut = network.cut_weight(free_spins)
    energy = network.offset + res.flow
    spins = network.full_spins(free_spins)
    geom = network.geometry
    a, b = network.bond_nodes.T
    node_spins = np.concatenate([free_spins, network.node_spin[network.n_free:]])
    cut_edges = int(np.count_nonzero(node_spins[a] != node_spins[b])) + network.fixed_cut_edges
    diag = dict(flow=res.flow, cut_weight=cut, offset=network.offset, phases=res.phases,
                augmentations=res.augmentations, cut_edges=cut_edges,
                n_free=network.n_free, solve_ms=1e3 * elapsed)
    return GroundState(energy, SpinConfiguration(1.0, geom.idx, spins, geom.region), diag)


def brute_force_ground_state(field: CoefficientField, T: int, nu, x0=None,
                             max_free: int = 20) -> GroundState:
    """Exhaustive minimum over all spins of the free sites (test oracle)."""
    d = field.dim
    nu = _as_unit(nu, d)
    x0 = cell_center(T, d) if x0 is None else np.asarray(x0, dtype=float)
    geom = cell_geometry(field.neighbors, T, nu, x0)
    n_free = geom.n_free
    if n_free > max_free:
        raise RefusalError(f"brute force refused: {n_free} free sites exceed the limit {max_free}",
                           count=n_free)
    datum = _datum(geom, x0, nu)
    bonds = []
    for k, xi in enumerate(field.neighbors.vectors):
        for pos in range(geom.n_cube):
            c = float(field.coeff(geom.idx[pos], k)[0])
            if c > 0:
                bonds.append((pos, int(geom.bonds[k][1][pos]), c))
    free_pos = np.flatnonzero(geom.free)
    best_e, best_bits = np.inf, 0
    chunk = 1 << min(n_free, 16)
    for start in range(0, 1 << n_free, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n_free), dtype=np.int64)
        spins = np.tile(datum, (codes.size, 1))
        bits = (codes[:, None] >> np.arange(n_free)) & 1
        spins[:, free_pos] = np.where(bits == 1, 1.0, -1.0)
        energy = np.zeros(codes.size)
        for pa, pb, c in bonds:
            energy += c * (spins[:, pa] != spins[:, pb])
        j = int(np.argmin(energy))
        if energy[j] < best_e:
            best_e, best_bits = float(energy[j]), int(codes[j])
    spins = datum.copy()
    spins[free_pos] = np.where((best_bits >> np.arange(n_free)) & 1, 1.0, -1.0)
    return GroundState(best_e, SpinConfiguration(1.0, geom.idx, spins, geom.region),
                       {"configurations": 1 << n_free, "n_free": n_free})


def cell_surface_energy(field: CoefficientField, T: int, nu, x0=None) -> CellProblemResult:
    """``phi_T(nu) = min E_1 / T^(d-1)`` for one cell."""
    net = build_cut_network(field, T, nu, x0)
    gs = min_cut_ground_state(net)
    return CellProblemResult(T, gs.energy / T ** (field.dim - 1), gs.minimizer, gs.diagnostics)


def surface_density(field: CoefficientField, nu, sizes, x0=None) -> DensityEstimate:
    """Finite-cell surface densities ``phi_T(nu)`` for increasing ``T``."""
    sizes = check_sizes(sizes)
    results = [cell_surface_energy(field, T, nu, x0) for T in sizes]
    samples = [(r.T, r.value) for r in results]
    return DensityEstimate(samples, samples[-1][1], richardson(samples), results)


# --------------------------------------------------------------------------
# direction sweeps


def sweep_directions(n_dirs: int, dim: int = 2) -> np.ndarray:
    """Angles ``2 pi j / n`` in 2D, Fibonacci-sphere points in 3D."""
    if n_dirs < 1:
        raise InvalidParameterError("n_dirs must be positive")
    if dim == 2:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    elif dim == 3:
        k = np.arange(n_dirs) + 0.5
        z = 1 - 2 * k / n_dirs
        r = np.sqrt(1 - z * z)
        theta = np.pi * (1 + 5 ** 0.5) * k
        dirs = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    elif dim == 1:
        dirs = np.array([[1.0], [-1.0]])[: max(1, min(n_dirs, 2))]
    else:
        raise InvalidParameterError("direction sweeps are available for d <= 3")
    # snap round-off so axis directions are exact unit vectors
    dirs = np.where(np.abs(dirs) < 1e-15, 0.0, dirs)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@dataclass
class WulffTable:
    directions: np.ndarray
    phi: np.ndarray
    T: int

    @property
    def boundary_points(self) -> np.ndarray:
        """Points ``nu / phi(nu)`` on the boundary of ``{x : |x| phi(x/|x|) <= 1}``."""
        return self.directions / self.phi[:, None]


def wulff_sample(field: CoefficientField, n_dirs: int, T: int, x0=None) -> WulffTable:
    """Tabulate ``phi_T`` on uniformly spaced directions."""
    dirs = sweep_directions(n_dirs, field.dim)
    phi = np.array([cell_surface_energy(field, T, nu, x0).value for nu in dirs])
    return WulffTable(dirs, phi, T)


def convexity_check(table: WulffTable, tol: float = 0.02) -> tuple[bool, float]:
    """Convex-hull containment test for the sampled unit ball ``{psi <= 1}``.

    Each sampled boundary point must reach at least ``1 - tol`` of the radial
    extent of the convex hull of all samples. Returns ``(passed, worst ratio)``.
    """
    pts = table.boundary_points
    hull = ConvexHull(pts)
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    worst = np.inf
    for p, nu in zip(pts, table.directions):
        proj = normals @ nu
        ok = proj > 1e-14
        t_hull = np.min(-offsets[ok] / proj[ok])
        worst = min(worst, np.linalg.norm(p) / t_hull)
    return bool(worst >= 1 - tol), float(worst)
