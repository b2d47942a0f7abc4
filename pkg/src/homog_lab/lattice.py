"""Lattice geometry, regions, coefficient fields and lattice functions.

Sites of the scaled lattice ``eps * Z^d`` are handled through their integer
coordinates ``i / eps``; physical coordinates are only formed on demand.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import IncompleteFunctionError, InvalidParameterError

# strict-membership tolerance for cube boundaries: points within this of the
# boundary count as outside
BOUNDARY_TOL = 1e-12
LATTICE_TOL = 1e-9


def _as_unit(nu, dim=None) -> np.ndarray:
    nu = np.asarray(nu, dtype=float).ravel()
    if dim is not None and nu.shape[0] != dim:
        raise InvalidParameterError(f"direction has dimension {nu.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(nu)) or abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise InvalidParameterError(f"direction {nu.tolist()} is not a unit vector")
    return nu


def normalize(v) -> np.ndarray:
    """Return ``v / |v|`` as a float array."""
    v = np.asarray(v, dtype=float).ravel()
    n = np.linalg.norm(v)
    if n == 0 or not np.isfinite(n):
        raise InvalidParameterError("cannot normalize a zero or non-finite vector")
    return v / n


def rotation_to(nu) -> np.ndarray:
    """Rotation ``R`` with ``R @ e_d == nu``.

    Identity for ``nu == e_d``; otherwise the Householder reflection taking
    ``e_d`` to ``nu`` composed with the reflection of the first coordinate, so
    that ``det R = +1``. In ``d = 1`` only ``nu = +-1`` exists and ``R = [[nu]]``.
    """
    nu = _as_unit(nu)
    nu = nu / np.linalg.norm(nu)
    d = nu.shape[0]
    if d == 1:
        return np.array([[nu[0]]])
    w = -nu.copy()
    tail = float(nu[:-1] @ nu[:-1])
    # 1 - nu_d without cancellation when nu is close to e_d
    w[-1] = tail / (1.0 + nu[-1]) if nu[-1] > 0 else 1.0 - nu[-1]
    ww = w @ w
    if tail == 0.0 and nu[-1] > 0:
        return np.eye(d)
    house = np.eye(d) - 2.0 * np.outer(w, w) / ww
    flip = np.ones(d)
    flip[0] = -1.0
    return house * flip  # column scaling == house @ diag(flip)


# --------------------------------------------------------------------------
# neighbour sets and coefficient fields


class NeighborSet:
    """Ordered finite set ``V`` of interaction vectors in ``Z^d``.

    Must contain the standard basis. ``range`` is the largest max-norm of a
    vector in the set.
    """

    def __init__(self, vectors: Iterable[Sequence[int]], dim: int | None = None):
        vecs = np.array([list(v) for v in vectors], dtype=np.int64)
        if vecs.ndim != 2 or vecs.shape[0] == 0:
            raise InvalidParameterError("neighbor set needs at least one vector")
        if dim is not None and vecs.shape[1] != dim:
            raise InvalidParameterError(f"vectors have dimension {vecs.shape[1]}, expected {dim}")
        d = vecs.shape[1]
        if d < 1:
            raise InvalidParameterError("dimension must be positive")
        if np.any(np.all(vecs == 0, axis=1)):
            raise InvalidParameterError("neighbor vectors must be nonzero")
        if len({tuple(v) for v in vecs}) != len(vecs):
            raise InvalidParameterError("neighbor vectors must be distinct")
        basis = []
        for k in range(d):
            e = np.zeros(d, dtype=np.int64)
            e[k] = 1
            hits = np.flatnonzero(np.all(vecs == e, axis=1))
            if hits.size == 0:
                raise InvalidParameterError(f"neighbor set is missing basis vector e_{k + 1}")
            basis.append(int(hits[0]))
        self.vectors = vecs
        self.vectors.setflags(write=False)
        self.dim = d
        self.basis_indices = tuple(basis)
        self.range = int(np.abs(vecs).max())

    @classmethod
    def nearest(cls, dim: int) -> "NeighborSet":
        return cls(np.eye(dim, dtype=np.int64))

    @classmethod
    def with_diagonals(cls) -> "NeighborSet":
        """``{e1, e2, e1+e2, e1-e2}`` in two dimensions."""
        return cls([(1, 0), (0, 1), (1, 1), (1, -1)])

    def __len__(self):
        return self.vectors.shape[0]

    def __iter__(self):
        return iter(self.vectors)

    def __eq__(self, other):
        return isinstance(other, NeighborSet) and np.array_equal(self.vectors, other.vectors)

    def __repr__(self):
        return f"NeighborSet({self.vectors.tolist()})"


class CoefficientField:
    """Periodic table of bond coefficients ``c_{i,xi}``.

    ``values`` has shape ``(T,) * d + (len(V),)``; the coefficient of the bond
    from integer site ``i`` along ``V[k]`` is ``values[i mod T][k]``.
    Construction checks nonnegativity, positivity of the basis coefficients
    (``>= c_min > 0``), the upper bound ``c_max`` and, when ``nondegenerate``
    is set, that every value lies in ``[c_min, c_max]`` or is zero.
    """

    def __init__(self, neighbors: NeighborSet, values, c_min: float | None = None,
                 c_max: float | None = None, nondegenerate: bool = False):
        if not isinstance(neighbors, NeighborSet):
            neighbors = NeighborSet(neighbors)
        vals = np.array(values, dtype=float)
        d, m = neighbors.dim, len(neighbors)
        if vals.ndim != d + 1 or vals.shape[-1] != m:
            raise InvalidParameterError(
                f"values must have shape (T,)*{d} + ({m},), got {vals.shape}")
        period = vals.shape[0]
        if period < 1 or any(s != period for s in vals.shape[:-1]):
            raise InvalidParameterError(f"values must be a cubic table, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("coefficients must be finite")
        if np.any(vals < 0):
            raise InvalidParameterError("coefficients must be nonnegative")
        basis_min = float(vals[..., list(neighbors.basis_indices)].min())
        if basis_min <= 0:
            raise InvalidParameterError("basis coefficients must be strictly positive")
        if c_min is None:
            c_min = basis_min
        elif not (0 < c_min <= basis_min):
            raise InvalidParameterError(f"c_min={c_min} is not a valid lower bound (basis minimum {basis_min})")
        vmax = float(vals.max())
        if c_max is None:
            c_max = vmax
        elif c_max < vmax:
            raise InvalidParameterError(f"c_max={c_max} is below the largest coefficient {vmax}")
        if nondegenerate:
            bad = (vals != 0) & ((vals < c_min) | (vals > c_max))
            if np.any(bad):
                raise InvalidParameterError("nondegenerate field has values outside [c_min, c_max] and != 0")
        self.neighbors = neighbors
        self.values = vals
        self.values.setflags(write=False)
        self.period = period
        self.c_min = float(c_min)
        self.c_max = float(c_max)
        self.nondegenerate = bool(nondegenerate)

    @property
    def dim(self) -> int:
        return self.neighbors.dim

    def coeff(self, idx, k: int) -> np.ndarray:
        """Coefficients of the bonds ``(i, i + V[k])`` for integer sites ``idx``."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.dim)
        res = np.mod(idx, self.period)
        return self.values[tuple(res.T) + (k,)]

    def is_fully_positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def scaled(self, s: float) -> "CoefficientField":
        return CoefficientField(self.neighbors, self.values * s, nondegenerate=self.nondegenerate and s > 0)

    def with_values(self, values) -> "CoefficientField":
        return CoefficientField(self.neighbors, values)

    def __eq__(self, other):
        return (isinstance(other, CoefficientField)
                and self.neighbors == other.neighbors
                and np.array_equal(self.values, other.values)
                and self.c_min == other.c_min and self.c_max == other.c_max
                and self.nondegenerate == other.nondegenerate)

    def __repr__(self):
        return (f"CoefficientField(dim={self.dim}, period={self.period}, "
                f"vectors={self.neighbors.vectors.tolist()})")

    # -- common fields -------------------------------------------------------

    @classmethod
    def uniform(cls, dim: int, value: float = 1.0, neighbors: NeighborSet | None = None,
                **kwargs) -> "CoefficientField":
        nb = neighbors or NeighborSet.nearest(dim)
        return cls(nb, np.full((1,) * dim + (len(nb),), float(value)), **kwargs)

    @classmethod
    def from_function(cls, neighbors: NeighborSet, period: int,
                      fn: Callable[[tuple, np.ndarray], float], **kwargs) -> "CoefficientField":
        """Tabulate ``fn(residue, xi)`` over one period."""
        d = neighbors.dim
        vals = np.zeros((period,) * d + (len(neighbors),))
        for res in itertools.product(range(period), repeat=d):
            for k, xi in enumerate(neighbors.vectors):
                vals[res + (k,)] = fn(res, xi)
        return cls(neighbors, vals, **kwargs)

    @classmethod
    def alternating_diagonal(cls, odd: bool) -> "CoefficientField":
        """Period-1 field on ``V = {e1, e2, e1+e2, e1-e2}`` from an alternating sequence.

        Basis bonds carry 1; diagonal bonds carry 1 on odd members of the
        sequence and 0 on even ones.
        """
        diag = 1.0 if odd else 0.0
        return cls(NeighborSet.with_diagonals(), [[[1.0, 1.0, diag, diag]]])

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, period: int,
               neighbors: NeighborSet | None = None, low: float = 0.5, high: float = 2.0,
               zero_prob: float = 0.0, nondegenerate: bool = False) -> "CoefficientField":
        """Random periodic field; non-basis entries are zeroed with ``zero_prob``."""
        nb = neighbors or NeighborSet.nearest(dim)
        vals = rng.uniform(low, high, size=(period,) * dim + (len(nb),))
        if zero_prob > 0:
            mask = rng.random(vals.shape) < zero_prob
            mask[..., list(nb.basis_indices)] = False
            vals[mask] = 0.0
        kw = dict(c_min=low, c_max=high) if nondegenerate else {}
        return cls(nb, vals, nondegenerate=nondegenerate, **kw)


def coefficient_at(field: CoefficientField, i, xi: int, eps: float) -> float:
    """``c^eps_{i,xi} = c_{(i/eps) mod T, xi}`` for a physical lattice site ``i``."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")
    idx = to_indices(np.asarray(i, dtype=float).reshape(1, -1), eps)
    if not 0 <= xi < len(field.neighbors):
        raise InvalidParameterError(f"neighbor index {xi} out of range")
    return float(field.coeff(idx, xi)[0])


def to_indices(points, eps: float) -> np.ndarray:
    """Integer coordinates of physical lattice points; raises off-lattice."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")
    q = np.asarray(points, dtype=float) / eps
    r = np.rint(q)
    if q.size and np.max(np.abs(q - r)) > LATTICE_TOL:
        bad = np.asarray(points)[np.argmax(np.max(np.abs(q - r), axis=-1))]
        raise InvalidParameterError(f"point {np.ravel(bad).tolist()} is not on the lattice eps*Z^d")
    return r.astype(np.int64)


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True, eq=False)
class LatticeRegion:
    """Bounded region used to select lattice sites.

    ``kind`` is one of ``"cube"`` (open cube ``x0 + side * R_nu Q``, axis
    aligned when ``nu == e_d``), ``"clipped_cube"`` (cube intersected with
    the closed half-space ``(x - x0) . normal >= 0``) or ``"sites"`` (an
    explicit point set).
    """

    kind: str
    dim: int
    center: np.ndarray | None = None
    side: float = 0.0
    nu: np.ndarray | None = None
    rotation: np.ndarray | None = None
    normal: np.ndarray | None = None
    points: np.ndarray | None = dc_field(default=None, repr=False)

    @classmethod
    def cube(cls, side: float, center=None, nu=None, dim: int | None = None) -> "LatticeRegion":
        if center is None and nu is None and dim is None:
            raise InvalidParameterError("cube needs a center, a direction or a dimension")
        if center is not None:
            center = np.asarray(center, dtype=float).ravel()
            dim = center.shape[0]
        elif nu is not None:
            dim = np.asarray(nu).size
        center = np.zeros(dim) if center is None else center
        if not side > 0:
            raise InvalidParameterError("cube side must be positive")
        if nu is None:
            nu = np.zeros(dim)
            nu[-1] = 1.0
        nu = _as_unit(nu, dim)
        return cls("cube", dim, center, float(side), nu, rotation_to(nu))

    @classmethod
    def clipped_cube(cls, side: float, normal, center=None, nu=None) -> "LatticeRegion":
        normal = _as_unit(normal)
        base = cls.cube(side, center=center if center is not None else np.zeros(normal.size), nu=nu)
        return cls("clipped_cube", base.dim, base.center, base.side, base.nu, base.rotation, normal)

    @classmethod
    def from_sites(cls, points) -> "LatticeRegion":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls("sites", pts.shape[1], points=pts)

    def local_coords(self, x) -> np.ndarray:
        """``R_nu^T (x - x0)`` row-wise."""
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.center) @ self.rotation

    def inner_distance(self, x) -> np.ndarray:
        """Distance to the complement, ``side/2 - |R^T(x - x0)|_inf`` (negative outside)."""
        return self.side / 2.0 - np.max(np.abs(self.local_coords(x)), axis=1)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "sites":
            if self.points.size == 0 or x.size == 0:
                return np.zeros(x.shape[0], dtype=bool)
            dist, _ = cKDTree(self.points).query(x, k=1)
            return dist <= LATTICE_TOL
        inside = self.inner_distance(x) > BOUNDARY_TOL
        if self.kind == "clipped_cube":
            inside &= (x - self.center) @ self.normal >= 0
        return inside

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "sites":
            if self.points.size == 0:
                return np.zeros(self.dim), -np.ones(self.dim)
            return self.points.min(axis=0), self.points.max(axis=0)
        half = self.side / 2.0 * np.abs(self.rotation).sum(axis=1)
        return self.center - half, self.center + half


def lattice_indices(region: LatticeRegion, eps: float) -> np.ndarray:
    """Integer coordinates of ``eps Z^d`` inside ``region``, lexicographically sorted."""
    if not eps > 0:
        raise InvalidParameterError("eps must be positive")
    if region.kind == "sites":
        if region.points.size == 0:
            return np.zeros((0, region.dim), dtype=np.int64)
        q = region.points / eps
        on = np.max(np.abs(q - np.rint(q)), axis=1) <= LATTICE_TOL
        idx = np.unique(np.rint(q[on]).astype(np.int64), axis=0)
        return idx.reshape(-1, region.dim)
    lo, hi = region.bounds()
    lo_i = np.floor(lo / eps).astype(np.int64) - 1
    hi_i = np.ceil(hi / eps).astype(np.int64) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(lo_i, hi_i)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.dim)
    keep = region.contains(grid * eps)
    return grid[keep]  # meshgrid 'ij' order is already lexicographic


def lattice_points(region: LatticeRegion, eps: float) -> np.ndarray:
    """Physical sites ``eps Z^d ∩ region`` in lexicographic order."""
    return lattice_indices(region, eps) * float(eps)


def jump_datum(x0, nu, z1: float, z2: float, site) -> float | np.ndarray:
    """Two-valued datum: ``z2`` where ``(site - x0) . nu >= 0``, else ``z1``.

    ``site`` may be a single point or an array of points (one per row).
    """
    nu = _as_unit(nu)
    site = np.asarray(site, dtype=float)
    dots = (np.atleast_2d(site) - np.asarray(x0, dtype=float)) @ nu
    out = np.where(dots >= 0, float(z2), float(z1))
    return float(out[0]) if site.ndim == 1 else out


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class DilationCount:
    count: int
    bound: float
    volume: float
    bound_satisfied: bool


def count_in_dilation(points, rho: float, eps: float, closed: bool = False,
                      dim: int | None = None) -> DilationCount:
    """Count lattice points in the ``rho``-dilation of a finite set.

    Compares ``#(E_rho ∩ eps Z^d)`` with ``C_d |E_rho| / min(eps, rho)^d``
    where ``C_d = 4^d / |B_1|``. The volume is a midpoint-rule quadrature at
    resolution ``min(eps, rho) / 8``. ``closed`` switches to closed balls.
    """
    if not (rho > 0 and eps > 0):
        raise InvalidParameterError("rho and eps must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return DilationCount(0, 0.0, 0.0, True)
    pts = np.atleast_2d(pts)
    d = pts.shape[1] if dim is None else dim
    tree = cKDTree(pts)

    def inside(x):
        dist, _ = tree.query(x, k=1)
        return dist <= rho + 1e-12 if closed else dist < rho - 1e-12

    lo = pts.min(axis=0) - rho
    hi = pts.max(axis=0) + rho
    axes = [np.arange(np.floor(a / eps), np.ceil(b / eps) + 1) * eps for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    count = int(np.count_nonzero(inside(grid)))

    h = min(eps, rho) / 8.0
    n_cells = np.ceil((hi - lo) / h).astype(int)
    volume = 0.0
    # slab-by-slab along the first axis keeps memory bounded
    rest = [lo[k] + (np.arange(n_cells[k]) + 0.5) * h for k in range(1, d)]
    rest_grid = (np.stack(np.meshgrid(*rest, indexing="ij"), axis=-1).reshape(-1, d - 1)
                 if d > 1 else np.zeros((1, 0)))
    for j in range(n_cells[0]):
        x0 = lo[0] + (j + 0.5) * h
        slab = np.hstack([np.full((rest_grid.shape[0], 1), x0), rest_grid])
        volume += np.count_nonzero(inside(slab)) * h ** d
    c_d = 4.0 ** d / ball_volume(d)
    bound = c_d * volume / min(eps, rho) ** d
    return DilationCount(count, bound, volume, count <= bound)


# --------------------------------------------------------------------------
# site lookup and lattice functions


class SiteIndex:
    """Vectorised lookup of integer sites in a sorted site array."""

    def __init__(self, idx: np.ndarray):
        idx = np.asarray(idx, dtype=np.int64)
        self.idx = idx
        self.dim = idx.shape[1]
        if idx.shape[0] == 0:
            self.lo = np.zeros(self.dim, dtype=np.int64)
            self.shape = (1,) * self.dim
            self.keys = np.zeros(0, dtype=np.int64)
            self.order = np.zeros(0, dtype=np.int64)
            return
        self.lo = idx.min(axis=0)
        self.shape = tuple((idx.max(axis=0) - self.lo + 1).tolist())
        keys = np.ravel_multi_index(tuple((idx - self.lo).T), self.shape)
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]

    def find(self, q) -> np.ndarray:
        """Positions of ``q`` rows in the site array, ``-1`` where absent."""
        q = np.asarray(q, dtype=np.int64).reshape(-1, self.dim)
        out = np.full(q.shape[0], -1, dtype=np.int64)
        if self.keys.size == 0 or q.shape[0] == 0:
            return out
        rel = q - self.lo
        ok = np.all((rel >= 0) & (rel < np.array(self.shape)), axis=1)
        if not np.any(ok):
            return out
        k = np.ravel_multi_index(tuple(rel[ok].T), self.shape)
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, self.keys.size - 1)
        hit = self.keys[pos] == k
        res = np.where(hit, self.order[pos], -1)
        out[np.flatnonzero(ok)] = res
        return out


def _lexsort_rows(idx: np.ndarray) -> np.ndarray:
    if idx.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort(idx.T[::-1])


class LatticeFunction:
    """Real values on sites of ``eps Z^d``.

    Stored as integer site coordinates ``idx`` (sorted lexicographically) and
    a matching ``values`` array. ``region`` records where the sites came from
    when known.
    """

    def __init__(self, eps: float, idx, values, region: LatticeRegion | None = None):
        if not eps > 0:
            raise InvalidParameterError("eps must be positive")
        idx = np.asarray(idx, dtype=np.int64)
        values = np.asarray(values, dtype=float).ravel()
        if idx.ndim != 2:
            idx = idx.reshape(len(values), -1)
        if idx.shape[0] != values.shape[0]:
            raise InvalidParameterError("one value per site required")
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("lattice function values must be finite")
        order = _lexsort_rows(idx)
        idx, values = idx[order], values[order]
        if idx.shape[0] > 1 and np.any(np.all(idx[1:] == idx[:-1], axis=1)):
            raise InvalidParameterError("duplicate sites in lattice function")
        self.eps = float(eps)
        self.idx = idx
        self.values = values
        self.region = region
        self._index = None

    @classmethod
    def from_callable(cls, region: LatticeRegion, eps: float, fn) -> "LatticeFunction":
        """Sample ``fn(points) -> values`` on the sites of ``region``."""
        idx = lattice_indices(region, eps)
        vals = np.asarray(fn(idx * float(eps)), dtype=float).reshape(-1)
        return cls(eps, idx, vals, region)

    @classmethod
    def constant(cls, region: LatticeRegion, eps: float, value: float = 0.0) -> "LatticeFunction":
        idx = lattice_indices(region, eps)
        return cls(eps, idx, np.full(idx.shape[0], float(value)), region)

    @property
    def dim(self) -> int:
        return self.idx.shape[1]

    @property
    def sites(self) -> np.ndarray:
        return self.idx * self.eps

    @property
    def index(self) -> SiteIndex:
        if self._index is None:
            self._index = SiteIndex(self.idx)
        return self._index

    def __len__(self):
        return self.values.shape[0]

    def lookup(self, idx, required: bool = True) -> np.ndarray:
        """Values at integer sites; raises ``IncompleteFunctionError`` when missing."""
        pos = self.index.find(idx)
        if required and np.any(pos < 0):
            bad = np.asarray(idx).reshape(-1, self.dim)[np.flatnonzero(pos < 0)[0]]
            raise IncompleteFunctionError(bad * self.eps)
        out = np.full(pos.shape[0], np.nan)
        out[pos >= 0] = self.values[pos[pos >= 0]]
        return out

    def with_values(self, values) -> "LatticeFunction":
        return LatticeFunction(self.eps, self.idx, values, self.region)

    def same_lattice(self, other: "LatticeFunction") -> bool:
        return (isinstance(other, LatticeFunction) and self.eps == other.eps
                and self.idx.shape == other.idx.shape and np.array_equal(self.idx, other.idx))

    def restrict(self, region: LatticeRegion) -> "LatticeFunction":
        keep = region.contains(self.sites)
        return LatticeFunction(self.eps, self.idx[keep], self.values[keep], region)

    def __eq__(self, other):
        return self.same_lattice(other) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"LatticeFunction(eps={self.eps}, sites={len(self)}, dim={self.dim})"


# --------------------------------------------------------------------------
# cell geometry shared by the cell problems


def cell_center(T: int, dim: int) -> np.ndarray:
    """Center whose open axis cube of side ``T`` holds exactly ``T^d`` sites."""
    return np.full(dim, 0.5 if T % 2 == 0 else 0.0)


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Sites of a cell problem on ``Z^d``.

    ``idx`` lists every site that enters the energy: the cube sites first
    (lexicographic), then exterior endpoints of bonds owned by cube sites.
    ``free`` marks cube sites farther than the interaction range from the
    complement; all other sites carry prescribed values.
    """

    region: LatticeRegion
    idx: np.ndarray
    n_cube: int
    free: np.ndarray
    width: float
    bonds: tuple  # per neighbor k: (tail positions, head positions), tails are cube sites

    @property
    def n_free(self) -> int:
        return int(np.count_nonzero(self.free))


def cell_geometry(neighbors: NeighborSet, T: int, nu=None, x0=None) -> CellGeometry:
    """Cube ``Q_T^nu(x0)`` on ``Z^d`` with its prescribed boundary layer.

    The layer is the set of cube sites within distance ``max_k |R_nu^T V[k]|_inf``
    of the complement, which makes every bond touching a free site a bond
    owned by a cube site.
    """
    d = neighbors.dim
    if x0 is None:
        x0 = cell_center(T, d)
    region = LatticeRegion.cube(T, center=x0, nu=nu)
    cube_idx = lattice_indices(region, 1.0)
    width = float(np.max(np.abs(neighbors.vectors @ region.rotation)))
    free = region.inner_distance(cube_idx) - width > BOUNDARY_TOL
    ext = []
    for xi in neighbors.vectors:
        tgt = cube_idx + xi
        ext.append(tgt[~region.contains(tgt)])
    ext = np.unique(np.vstack(ext), axis=0) if ext else np.zeros((0, d), dtype=np.int64)
    all_idx = np.vstack([cube_idx, ext.reshape(-1, d)])
    index = SiteIndex(all_idx)
    n_cube = cube_idx.shape[0]
    bonds = []
    tails = np.arange(n_cube)
    for xi in neighbors.vectors:
        bonds.append((tails, index.find(cube_idx + xi)))
    free_all = np.concatenate([free, np.zeros(all_idx.shape[0] - n_cube, dtype=bool)])
    return CellGeometry(region, all_idx, n_cube, free_all, width, tuple(bonds))
