"""Bulk energy density from the quadratic cell problem with affine boundary data.

On the axis cube ``Q_T(x0)`` of ``Z^d`` the values ``v_i = zeta . i`` are
prescribed on the exterior and on the boundary layer of width equal to the
interaction range; the remaining sites are free. The cell energy is the
elastic energy ``sum [c > 0] (v(i+xi) - v(i))^2`` over bonds owned by cube
sites, so bond weights are indicators and not the coefficients themselves.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidParameterError, RefusalError, SolverError
from .lattice import CellGeometry, CoefficientField, LatticeFunction, NeighborSet, cell_center, \
    cell_geometry
from .membrane import GncSchedule, _BondProblem
from .results import CellProblemResult, DensityEstimate, check_sizes, richardson

CLOSED_FORM_TOL = 1e-8


@dataclass
class QuadraticCellSystem:
    """Normal equations ``A x = b`` of the quadratic cell problem.

    ``values`` holds the prescribed affine data on every geometry site (free
    entries are the affine competitor); ``a``/``b`` are the positions of the
    active bonds; ``free_pos`` lists the unknowns in matrix order.
    """

    T: int
    zeta: np.ndarray
    geometry: CellGeometry
    values: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    free_pos: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def n_free(self) -> int:
        return self.free_pos.shape[0]

    def full_values(self, x) -> np.ndarray:
        v = self.values.copy()
        v[self.free_pos] = x
        return v

    def energy(self, x=None) -> float:
        """``H_1`` of the cell for free values ``x`` (affine competitor if omitted)."""
        v = self.values if x is None else self.full_values(x)
        diff = v[self.b] - v[self.a]
        return math.fsum((diff * diff).tolist())

    def to_function(self, x) -> LatticeFunction:
        return LatticeFunction(1.0, self.geometry.idx, self.full_values(x), self.geometry.region)


def _active_bonds(field: CoefficientField, geom: CellGeometry):
    a, b, c = [], [], []
    for k, (tails, heads) in enumerate(geom.bonds):
        coeff = field.coeff(geom.idx[tails], k)
        on = coeff > 0
        a.append(tails[on])
        b.append(heads[on])
        c.append(coeff[on])
    return np.concatenate(a), np.concatenate(b), np.concatenate(c)


def assemble_cell_system(field: CoefficientField, T: int, zeta, x0=None) -> QuadraticCellSystem:
    """Assemble the first-order optimality system of the cell problem."""
    if T < 2:
        raise InvalidParameterError("cell size T must be at least 2")
    d = field.dim
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    if zeta.shape[0] != d:
        raise InvalidParameterError(f"zeta must have {d} components")
    if not np.all(np.isfinite(zeta)):
        raise InvalidParameterError("zeta must be finite")
    x0 = cell_center(T, d) if x0 is None else np.asarray(x0, dtype=float)
    geom = cell_geometry(field.neighbors, T, None, x0)
    values = geom.idx @ zeta
    a, b, c = _active_bonds(field, geom)
    free_pos = np.flatnonzero(geom.free)
    nf = free_pos.size
    slot = np.full(geom.idx.shape[0], -1, dtype=np.int64)
    slot[free_pos] = np.arange(nf)
    diag = np.zeros(nf)
    rhs = np.zeros(nf)
    rows, cols = [], []
    for s_i, s_j, other in ((slot[a], slot[b], b), (slot[b], slot[a], a)):
        mine = s_i >= 0
        np.add.at(diag, s_i[mine], 1.0)
        both = mine & (s_j >= 0)
        rows.append(s_i[both])
        cols.append(s_j[both])
        fixed = mine & (s_j < 0)
        np.add.at(rhs, s_i[fixed], values[other[fixed]])
    rows = np.concatenate(rows + [np.arange(nf)])
    cols = np.concatenate(cols + [np.arange(nf)])
    vals = np.concatenate([-np.ones(rows.size - nf), diag])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nf, nf))
    return QuadraticCellSystem(T, zeta, geom, values, a, b, c, free_pos, mat, rhs)


def _pcg(mat, rhs, x, tol: float, maxiter: int):
    """Jacobi-preconditioned conjugate gradients started at ``x``.

    Returns ``(x, iterations, relative residual, energy trace)``; the trace is
    the quadratic ``x.A x / 2 - b.x``, which CG decreases monotonically.
    """
    dinv = 1.0 / mat.diagonal()
    bnorm = float(np.linalg.norm(rhs))
    r = rhs - mat @ x
    quad = lambda y: 0.5 * float(y @ (mat @ y)) - float(rhs @ y)  # noqa: E731
    trace = [quad(x)]
    if bnorm == 0.0:
        bnorm = 1.0
    res = float(np.linalg.norm(r)) / bnorm
    if res <= tol:
        return x, 0, res, trace
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        ap = mat @ p
        pap = float(p @ ap)
        if pap <= 0:
            break
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        trace.append(quad(x))
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            return x, it, res, trace
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"conjugate gradients did not reach tol {tol:g} in {maxiter} iterations",
                      {"iterations": maxiter, "residual": res, "energy_trace": trace})


def solve_cell(system: QuadraticCellSystem, tol: float = 1e-10) -> CellProblemResult:
    """Minimize the cell energy; ``value = H_1(v*) / T^d``.

    CG starts from the affine competitor, so the computed minimum never
    exceeds the affine energy.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    t0 = time.perf_counter()
    x = system.values[system.free_pos].astype(float)
    iters, res, trace = 0, 0.0, []
    if system.n_free:
        maxiter = int(50 * math.sqrt(system.n_free)) + 1000
        x, iters, res, trace = _pcg(system.matrix, system.rhs, x, tol, maxiter)
    energy = system.energy(x)
    affine = system.energy()
    T, d = system.T, system.geometry.idx.shape[1]
    diag = dict(iterations=iters, residual=res, energy_trace=trace, energy=energy,
                affine_energy=affine, n_free=system.n_free,
                solve_ms=1e3 * (time.perf_counter() - t0))
    return CellProblemResult(T, energy / T ** d, system.to_function(x), diag)


def closed_form_density(neighbors: NeighborSet, zeta) -> float:
    """``sum over xi in V of (xi . zeta)^2``."""
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    if zeta.shape[0] != neighbors.dim:
        raise InvalidParameterError(f"zeta must have {neighbors.dim} components")
    return math.fsum(((neighbors.vectors @ zeta) ** 2).tolist())


def bulk_density(field: CoefficientField, zeta, sizes, x0=None, tol: float = 1e-10) -> DensityEstimate:
    """Normalized elastic cell minima for increasing ``T``.

    For a fully positive field every estimate must match the closed form to
    ``1e-8`` (relative to ``max(1, f)``); a mismatch raises ``SolverError``.
    """
    sizes = check_sizes(sizes)
    results = [solve_cell(assemble_cell_system(field, T, zeta, x0), tol) for T in sizes]
    samples = [(r.T, r.value) for r in results]
    if field.is_fully_positive():
        exact = closed_form_density(field.neighbors, zeta)
        for T, val in samples:
            if abs(val - exact) > CLOSED_FORM_TOL * max(1.0, exact):
                raise SolverError(f"T={T}: cell value {val!r} misses the closed form {exact!r}",
                                  {"T": T, "value": val, "closed_form": exact})
    return DensityEstimate(samples, samples[-1][1], richardson(samples), results)


# --------------------------------------------------------------------------
# weak-membrane cell


def _branch_and_bound(values, free_pos, a, b, c, max_nodes: int = 2_000_000):
    """Exact minimum of ``sum min((v_b - v_a)^2, c)`` over the free values.

    Line variables live on the bonds touching a free site. A node fixes some
    of them; its lower bound is the cost of the broken ones plus the minimum
    of the quadratic over the ones fixed intact (undecided bonds cost >= 0).
    Returns ``(energy, free values, broken mask over touching bonds, nodes)``.
    """
    n = values.shape[0]
    slot = np.full(n, -1, dtype=np.int64)
    slot[free_pos] = np.arange(free_pos.size)
    touch = (slot[a] >= 0) | (slot[b] >= 0)
    base = values[b[~touch]] - values[a[~touch]]
    const = math.fsum(np.minimum(base * base, c[~touch]).tolist())
    ta, tb, tc = a[touch], b[touch], c[touch]
    m, nf = ta.shape[0], free_pos.size

    # least squares rows: x_b - x_a = (fixed part)
    rows = np.zeros((m, nf))
    shift = np.zeros(m)
    for j in range(m):
        for pos, sign in ((tb[j], 1.0), (ta[j], -1.0)):
            if slot[pos] >= 0:
                rows[j, slot[pos]] += sign
            else:
                shift[j] -= sign * values[pos]

    def quad_min(intact):
        if not np.any(intact):
            return 0.0, values[free_pos].copy()
        A, y = rows[intact], shift[intact]
        x, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = A @ x - y
        return float(r @ r), x

    def completion(x):
        r = rows @ x - shift
        per = np.minimum(r * r, tc)
        return const + math.fsum(per.tolist()), (r * r) > tc

    # incumbent: best of the fully intact solution and its truncation
    _, x0 = quad_min(np.ones(m, dtype=bool))
    best, broken0 = completion(x0)
    best_x, best_broken = x0, broken0
    # bonds with the largest affine strain first
    order = np.argsort(-(shift - rows @ values[free_pos]) ** 2 / np.maximum(tc, 1e-300),
                       kind="stable")
    nodes = 0
    counter = 0
    heap = [(const, counter, 0, np.zeros(m, dtype=bool), np.zeros(m, dtype=bool))]
    while heap:
        bound, _, depth, intact, broken = heapq.heappop(heap)
        if bound >= best - 1e-14 * max(1.0, best):
            continue
        nodes += 1
        if nodes > max_nodes:
            raise RefusalError(f"branch and bound exceeded {max_nodes} nodes", count=nodes)
        q, x = quad_min(intact)
        val, _ = completion(x)
        if val < best:
            best, best_x = val, x
            best_broken = broken.copy()
            best_broken[~(intact | broken)] = ((rows @ x - shift) ** 2 > tc)[~(intact | broken)]
        if depth == m:
            continue
        j = order[depth]
        for choice in (False, True):
            ni, nb = intact.copy(), broken.copy()
            (nb if choice else ni)[j] = True
            qn, _ = quad_min(ni)
            lb = const + math.fsum(tc[nb].tolist()) + qn
            if lb < best - 1e-14 * max(1.0, best):
                counter += 1
                heapq.heappush(heap, (lb, counter, depth + 1, ni, nb))
    full = values.copy()
    full[free_pos] = best_x
    return best, full, best_broken, nodes, m


def membrane_cell_density(field: CoefficientField, zeta, T: int, mode: str = "exact",
                          max_bonds: int = 18, x0=None) -> CellProblemResult:
    """``T^-d`` times the weak-membrane cell minimum (``eps = 1``) with affine data.

    ``exact`` runs branch and bound over the line variables of the bonds with
    positive coefficient touching a free site and refuses above
    ``max_bonds`` of them. ``heuristic`` runs the alternating minimization
    with graduated thresholds and flags its result as approximate.
    """
    if T < 2:
        raise InvalidParameterError("cell size T must be at least 2")
    d = field.dim
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    if zeta.shape[0] != d:
        raise InvalidParameterError(f"zeta must have {d} components")
    x0 = cell_center(T, d) if x0 is None else np.asarray(x0, dtype=float)
    geom = cell_geometry(field.neighbors, T, None, x0)
    values = geom.idx @ zeta
    a, b, c = _active_bonds(field, geom)
    free_pos = np.flatnonzero(geom.free)
    if mode == "exact":
        n_lines = int(np.count_nonzero(geom.free[a] | geom.free[b]))
        if n_lines > max_bonds:
            raise RefusalError(f"exact membrane cell refused: {n_lines} line variables exceed "
                               f"the budget {max_bonds}", count=n_lines)
        energy, full, broken, nodes, m = _branch_and_bound(values, free_pos, a, b, c)
        diag = dict(mode="exact", line_variables=m, nodes=nodes, broken=int(broken.sum()),
                    approximate=False)
    elif mode == "heuristic":
        prob = _BondProblem(a, b, c, 1.0, d, values, free=geom.free)
        full, lines, trace, converged = prob.run(GncSchedule(), max_outer=200)
        energy = prob.energy(full)
        diag = dict(mode="heuristic", broken=int(lines.sum()), energy_trace=trace,
                    converged=converged, approximate=True)
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    fn = LatticeFunction(1.0, geom.idx, full, geom.region)
    return CellProblemResult(T, energy / T ** d, fn, diag)
