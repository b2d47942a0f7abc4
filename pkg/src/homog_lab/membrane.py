"""Weak-membrane minimization and the constructive tools used around it.

The truncated potential is written in min form,
``min(z^2, c/eps) = min over l in {0, 1} of (1 - l) z^2 + l c/eps``,
so that for a fixed line field the energy is a convex quadratic in ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .energies import fidelity_energy, owned_bonds, weak_membrane_energy
from .exceptions import IncompatibleFunctionError, InvalidParameterError
from .lattice import CoefficientField, LatticeFunction, LatticeRegion

LINE_TOL = 0.0  # ties (z^2 == c/eps) keep the spring unbroken


@dataclass(frozen=True)
class GncSchedule:
    """Threshold multipliers ``s_1 > s_2 > ... > 1``.

    Stage ``s`` minimizes the membrane energy with thresholds ``s c / eps``;
    the last stage is the true potential.
    """

    levels: tuple = (64.0, 16.0, 4.0, 2.0, 1.0)

    def __post_init__(self):
        levels = tuple(float(s) for s in self.levels)
        if not levels or levels[-1] != 1.0:
            raise InvalidParameterError("a schedule must end at 1")
        if any(not np.isfinite(s) or s < 1 for s in levels):
            raise InvalidParameterError("schedule levels must be finite and >= 1")
        if any(b >= a for a, b in zip(levels, levels[1:])):
            raise InvalidParameterError("schedule levels must be strictly decreasing")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def direct(cls) -> "GncSchedule":
        """No continuation: only the true potential."""
        return cls((1.0,))

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


@dataclass
class LineField:
    """Broken/unbroken flags on bonds with positive coefficient.

    ``sites`` are integer coordinates of bond owners and ``k`` the neighbor
    index, so the bond is ``(i, i + eps V[k])``.
    """

    sites: np.ndarray
    k: np.ndarray
    broken: np.ndarray

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.broken))

    def broken_set(self) -> frozenset:
        return frozenset((tuple(s.tolist()), int(k))
                         for s, k, b in zip(self.sites, self.k, self.broken) if b)

    def to_dict(self) -> dict:
        return {(tuple(s.tolist()), int(k)): int(b)
                for s, k, b in zip(self.sites, self.k, self.broken)}

    def __len__(self):
        return self.broken.shape[0]


def membrane_energy(u: LatticeFunction, g: LatticeFunction, field: CoefficientField,
                    weight: float) -> float:
    """``F_eps(u) + weight * sum eps^d |u - g|^2`` on the domain of ``u``."""
    return weak_membrane_energy(u, field).total + weight * fidelity_energy(u, g)


class _BondProblem:
    """Truncated-quadratic problem on a fixed set of sites and bonds.

    Energy: ``sum eps^d min(((x_b - x_a)/eps)^2, s c/eps) + lam eps^d sum (x - g)^2``,
    the fidelity running over free sites. Sites outside ``free`` keep their
    initial values.
    """

    def __init__(self, a, b, c, eps: float, d: int, values, free=None, lam: float = 0.0,
                 g=None):
        keep = np.asarray(c) > 0
        self.a, self.b, self.c = np.asarray(a)[keep], np.asarray(b)[keep], np.asarray(c)[keep]
        self.eps, self.d = float(eps), int(d)
        self.x = np.asarray(values, dtype=float).copy()
        n = self.x.shape[0]
        self.free = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
        self.lam = float(lam)
        self.g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
        if self.lam < 0:
            raise InvalidParameterError("fidelity weight must be nonnegative")
        self.free_pos = np.flatnonzero(self.free)
        self.slot = np.full(n, -1, dtype=np.int64)
        self.slot[self.free_pos] = np.arange(self.free_pos.size)

    def sq(self, x) -> np.ndarray:
        z = (x[self.b] - x[self.a]) / self.eps
        return z * z

    def lines(self, x, s: float = 1.0) -> np.ndarray:
        return self.sq(x) > s * self.c / self.eps + LINE_TOL

    def energy(self, x, s: float = 1.0, lines=None) -> float:
        sq = self.sq(x)
        thr = s * self.c / self.eps
        per = np.minimum(sq, thr) if lines is None else np.where(lines, thr, sq)
        r = (x - self.g)[self.free_pos]
        terms = np.concatenate([self.eps ** self.d * per, self.lam * self.eps ** self.d * r * r])
        return math.fsum(terms.tolist())

    def solve(self, lines, x_prev) -> np.ndarray:
        """Minimize the quadratic energy for a fixed line field."""
        nf = self.free_pos.size
        if nf == 0:
            return x_prev.copy()
        on = ~lines
        a, b = self.a[on], self.b[on]
        sa, sb = self.slot[a], self.slot[b]
        fid = self.lam * self.eps ** 2
        # a tiny proximal term keeps components without fidelity or frozen
        # neighbours at their previous values (it never raises the energy)
        prox = 0.0 if fid > 0 else 1e-12
        diag = np.full(nf, fid + prox)
        rhs = (fid * self.g[self.free_pos] + prox * x_prev[self.free_pos])
        rows, cols, vals = [], [], []
        for s_i, s_j, other in ((sa, sb, b), (sb, sa, a)):
            mine = s_i >= 0
            np.add.at(diag, s_i[mine], 1.0)
            both = mine & (s_j >= 0)
            rows.append(s_i[both])
            cols.append(s_j[both])
            vals.append(-np.ones(np.count_nonzero(both)))
            fixed = mine & (s_j < 0)
            np.add.at(rhs, s_i[fixed], x_prev[other[fixed]])
        rows = np.concatenate(rows + [np.arange(nf)])
        cols = np.concatenate(cols + [np.arange(nf)])
        vals = np.concatenate(vals + [diag])
        mat = sp.csc_matrix((vals, (rows, cols)), shape=(nf, nf))
        x = x_prev.copy()
        x[self.free_pos] = spsolve(mat, rhs) if nf > 1 else rhs / diag
        return x

    def run(self, schedule: GncSchedule, max_outer: int, rel_tol: float = 1e-12):
        x = self.x.copy()
        trace = []
        converged = False
        lines = None
        for s in schedule:
            lines = self.lines(x, s)
            trace.append(self.energy(x, s, lines))
            converged = False
            for _ in range(max_outer):
                before = trace[-1]
                x = self.solve(lines, x)
                trace.append(self.energy(x, s, lines))
                new_lines = self.lines(x, s)
                trace.append(self.energy(x, s, new_lines))
                changed = bool(np.any(new_lines != lines))
                lines = new_lines
                if not changed or before - trace[-1] <= rel_tol * max(abs(before), 1e-300):
                    converged = True
                    break
        self.x = x
        return x, lines, trace, converged


@dataclass
class MembraneResult:
    u: LatticeFunction
    lines: LineField
    energy_trace: list
    energy: float
    converged: bool = True
    diagnostics: dict = dc_field(default_factory=dict)

    def __iter__(self):
        return iter((self.u, self.lines, self.energy_trace))


def _line_field(u: LatticeFunction, field: CoefficientField, bonds, broken) -> LineField:
    pos = bonds.coeff > 0
    return LineField(u.idx[bonds.tails[pos]], bonds.k[pos], np.asarray(broken, dtype=bool))


def alternating_minimize(g: LatticeFunction, field: CoefficientField, fidelity_weight: float,
                         schedule: GncSchedule | None = None, max_outer: int = 100,
                         init: LatticeFunction | None = None) -> MembraneResult:
    """Minimize ``F_eps(u) + weight * sum eps^d |u - g|^2`` by block coordinate descent.

    Alternates exact quadratic solves for ``u`` with the line update
    ``l = 1 iff (D u)^2 > s c/eps``, for each threshold multiplier ``s`` of the
    schedule. The trace records the stage objective after every half-step and
    is non-increasing, also across stage changes since lowering ``s`` can only
    lower the objective.
    """
    if not fidelity_weight > 0 or not np.isfinite(fidelity_weight):
        raise InvalidParameterError("fidelity weight must be positive and finite")
    if max_outer < 1:
        raise InvalidParameterError("max_outer must be positive")
    schedule = schedule or GncSchedule()
    start = g if init is None else init
    if not start.same_lattice(g):
        raise IncompatibleFunctionError("init must live on the sites of g")
    bonds = owned_bonds(g, field)
    prob = _BondProblem(bonds.tails, bonds.heads, bonds.coeff, g.eps, g.dim, start.values,
                        lam=fidelity_weight, g=g.values)
    x, lines, trace, converged = prob.run(schedule, max_outer)
    u = g.with_values(x)
    energy = membrane_energy(u, g, field, fidelity_weight)
    return MembraneResult(u, _line_field(u, field, bonds, lines), trace, energy, converged,
                          {"stages": len(schedule)})


def exact_minimize_1d(g: LatticeFunction, field: CoefficientField,
                      fidelity_weight: float) -> MembraneResult:
    """Global minimizer on a path by dynamic programming over segments.

    Within a segment every spring is intact and the fidelity-regularized
    quadratic is minimized in closed form; segment ends cost ``c`` each.
    Segment minima for all starts are propagated together, ``O(n^2)``.
    """
    if g.dim != 1:
        raise InvalidParameterError("exact minimization needs d = 1")
    if field.neighbors.vectors.tolist() != [[1]]:
        raise InvalidParameterError("exact minimization needs nearest-neighbour bonds only")
    if not fidelity_weight > 0:
        raise InvalidParameterError("fidelity weight must be positive")
    n = len(g)
    if n > 10_000:
        raise InvalidParameterError("path too long for the exact solver (max 10000 sites)")
    idx = g.idx[:, 0]
    if n > 1 and np.any(np.diff(idx) != 1):
        raise InvalidParameterError("sites must form a contiguous path")
    eps = g.eps
    gv = g.values
    a = fidelity_weight * eps
    kk = 1.0 / eps
    # break cost of bond (j, j+1), eps^(d-1) = 1
    brk = field.coeff(g.idx[:-1], 0) if n > 1 else np.zeros(0)

    # segment cost as a function of its last value: P (x - M)^2 + R, one entry per start;
    # spring extension keeps M, R and maps P -> P k / (P + k)
    best = np.zeros(n + 1)
    arg = np.zeros(n + 1, dtype=np.int64)
    P = np.zeros(0)
    M = np.zeros(0)
    R = np.zeros(0)
    for j in range(n):
        if j:
            P = P * kk / (P + kk)
        P = np.append(P, 0.0)
        M = np.append(M, gv[j])
        R = np.append(R, 0.0)
        R = R + P * a / (P + a) * (M - gv[j]) ** 2
        M = (P * M + a * gv[j]) / (P + a)
        P = P + a
        cost = best[: j + 1] + R
        cost[1:] += brk[: j]
        i = int(np.argmin(cost))
        best[j + 1], arg[j + 1] = cost[i], i

    # rebuild segments and solve each tridiagonal system
    u = np.empty(n)
    end = n
    while end > 0:
        start = arg[end]
        m = end - start
        ab = np.zeros((3, m))
        ab[1] = a
        if m > 1:
            ab[1, :-1] += kk
            ab[1, 1:] += kk
            ab[0, 1:] = -kk
            ab[2, :-1] = -kk
        u[start:end] = solve_banded((1, 1), ab, a * gv[start:end])
        end = start
    uf = g.with_values(u)
    bonds = owned_bonds(uf, field)
    prob = _BondProblem(bonds.tails, bonds.heads, bonds.coeff, eps, 1, u)
    lines = prob.lines(u)
    recomputed = membrane_energy(uf, g, field, fidelity_weight)
    return MembraneResult(uf, _line_field(uf, field, bonds, lines), [float(best[n])],
                          float(best[n]), True, {"recomputed_energy": recomputed})


# --------------------------------------------------------------------------
# coarea thresholding


@dataclass
class ThresholdResult:
    w: LatticeFunction
    t: float
    I_count: int
    in_I: np.ndarray          # per owned bond, membership in I_{t,eps}
    levels: np.ndarray
    counts: np.ndarray

    def __iter__(self):
        return iter((self.w, self.t, self.I_count))


def coarea_threshold(u: LatticeFunction, z1: float, z2: float, field: CoefficientField,
                     region: LatticeRegion | None = None, n_levels: int = 64) -> ThresholdResult:
    """Two-valued threshold of ``u`` at the level with fewest bad bonds.

    ``I_t`` holds bonds with positive coefficient whose end values straddle
    ``t`` (``min <= t <= max``) while ``|u(i+eps xi) - u(i)| <= sqrt(c eps)``.
    Levels are scanned uniformly in ``[z1 + (z2-z1)/4, z2 - (z2-z1)/4]``;
    ties go to the lowest level. ``w = z2`` where ``u > t``, else ``z1``.
    """
    if not z1 < z2:
        raise InvalidParameterError("need z1 < z2")
    if n_levels < 1:
        raise InvalidParameterError("n_levels must be positive")
    if region is not None:
        u = u.restrict(region)
    bonds = owned_bonds(u, field)
    ua, ub = u.values[bonds.tails], u.values[bonds.heads]
    lo, hi = np.minimum(ua, ub), np.maximum(ua, ub)
    soft = (bonds.coeff > 0) & (np.abs(ub - ua) <= np.sqrt(bonds.coeff * u.eps))
    gap = (z2 - z1) / 4
    levels = (np.linspace(z1 + gap, z2 - gap, n_levels) if n_levels > 1
              else np.array([(z1 + z2) / 2]))
    member = soft[None, :] & (lo[None, :] <= levels[:, None]) & (levels[:, None] <= hi[None, :])
    counts = member.sum(axis=1)
    j = int(np.argmin(counts))
    t = float(levels[j])
    w = u.with_values(np.where(u.values > t, z2, z1))
    return ThresholdResult(w, t, int(counts[j]), member[j], levels, counts)


# --------------------------------------------------------------------------
# maximal function and Lipschitz truncation


def _neighbor_offsets(d: int) -> np.ndarray:
    eye = np.eye(d, dtype=np.int64)
    return np.vstack([eye, -eye])


def discrete_gradient(u: LatticeFunction) -> LatticeFunction:
    """``|grad_eps u|(x) = sum over the 2d nearest sites z of |u(x) - u(z)| / eps``."""
    out = np.zeros(len(u))
    for off in _neighbor_offsets(u.dim):
        pos = u.index.find(u.idx + off)
        ok = pos >= 0
        out[ok] += np.abs(u.values[ok] - u.values[pos[ok]]) / u.eps
    return u.with_values(out)


def _box_sums(table: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sums of ``table`` over inclusive boxes ``[lo, hi]`` via prefix sums."""
    d = table.ndim
    pre = table
    for ax in range(d):
        pre = np.cumsum(pre, axis=ax)
    pre = np.pad(pre, [(1, 0)] * d)
    total = np.zeros(lo.shape[0])
    for corner in range(1 << d):
        pick = [(corner >> ax) & 1 for ax in range(d)]
        coords = tuple(np.where(pick[ax], hi[:, ax] + 1, lo[:, ax]) for ax in range(d))
        sign = (-1) ** (d - sum(pick))
        total += sign * pre[coords]
    return total


def maximal_function(u: LatticeFunction, region: LatticeRegion | None = None) -> LatticeFunction:
    """Discrete maximal function: sup over centred cubes of the average of ``u``.

    The cube ``Q_eta(x)`` contains the sites at max-norm distance ``< eta/2``
    from ``x``, so its contents run through the balls of radius ``r eps``,
    ``r = 0, 1, ...``; all of them are scanned. Averages are taken over the
    sites of the domain of ``u`` inside the cube.
    """
    if region is not None:
        u = u.restrict(region)
    if len(u) == 0:
        return u
    base = u.idx.min(axis=0)
    shape = tuple((u.idx.max(axis=0) - base + 1).tolist())
    loc = u.idx - base
    vals = np.zeros(shape)
    mask = np.zeros(shape)
    vals[tuple(loc.T)] = u.values
    mask[tuple(loc.T)] = 1.0
    upper = np.array(shape) - 1
    best = u.values.copy()
    for r in range(1, max(shape)):
        lo = np.maximum(loc - r, 0)
        hi = np.minimum(loc + r, upper)
        avg = _box_sums(vals, lo, hi) / _box_sums(mask, lo, hi)
        best = np.maximum(best, avg)
    return u.with_values(best)


@dataclass
class TruncationResult:
    v: LatticeFunction
    E_sites: np.ndarray       # integer sites of E^lambda_eps within the inner cube
    L: float
    gradient: LatticeFunction
    maximal: LatticeFunction
    empty: bool = False
    agrees_on_E: bool = True

    def __iter__(self):
        return iter((self.v, self.E_sites, self.L))


LIP_CONSTANT = 4.0


def lipschitz_truncation(u: LatticeFunction, lam: float, rho: float, rho0: float,
                         center=None, nu=None) -> TruncationResult:
    """McShane extension of ``u`` from the good set ``E = {M(|grad u|) <= lam}``.

    ``E`` is intersected with the inner cube ``Q_rho``; the extension is
    ``v(x) = min_y (u(y) + L |x - y|)`` over ``y in E`` with
    ``L = 4 lam + 2 |u|_inf / (rho0 - rho)``, evaluated on all sites of ``u``.
    """
    if not (0 < rho < rho0):
        raise InvalidParameterError("need 0 < rho < rho0")
    if not lam > 0:
        raise InvalidParameterError("lambda must be positive")
    grad = discrete_gradient(u)
    maxf = maximal_function(grad)
    inner = LatticeRegion.cube(rho, center=center, nu=nu, dim=u.dim)
    good = (maxf.values <= lam) & inner.contains(u.sites)
    L = LIP_CONSTANT * lam + 2 * float(np.max(np.abs(u.values), initial=0.0)) / (rho0 - rho)
    if not np.any(good):
        return TruncationResult(u.with_values(np.zeros(len(u))), u.idx[:0], L, grad, maxf,
                                empty=True)
    ys, uy = u.sites[good], u.values[good]
    v = np.empty(len(u))
    for start in range(0, len(u), 512):
        x = u.sites[start:start + 512]
        dist = np.linalg.norm(x[:, None, :] - ys[None, :, :], axis=2)
        v[start:start + 512] = np.min(uy[None, :] + L * dist, axis=1)
    agrees = bool(np.array_equal(v[good], uy))
    return TruncationResult(u.with_values(v), u.idx[good], L, grad, maxf, False, agrees)


def pairwise_lipschitz(f: LatticeFunction) -> float:
    """``max |f(x) - f(y)| / |x - y|`` over all site pairs."""
    x, val = f.sites, f.values
    best = 0.0
    for start in range(0, len(f), 256):
        dist = np.linalg.norm(x[start:start + 256, None, :] - x[None, :, :], axis=2)
        diff = np.abs(val[start:start + 256, None] - val[None, :])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(dist > 0, diff / np.where(dist > 0, dist, 1.0), 0.0)
        best = max(best, float(ratio.max(initial=0.0)))
    return best
