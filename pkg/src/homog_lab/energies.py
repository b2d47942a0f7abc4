"""Discrete energies on lattice functions.

Bond convention: the bond ``(i, i + eps*xi)`` is owned by ``i`` and counted
once, for ``i`` in the evaluation region ``A`` and ``i + eps*xi`` in the
ambient region (by default the domain of the function).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .exceptions import (IncompatibleFunctionError, IncompleteFunctionError,
                         InvalidParameterError, InvalidSpinError)
from .lattice import (CoefficientField, LatticeFunction, LatticeRegion, SiteIndex,
                      lattice_indices)


def truncated_potential(z, c, eps: float):
    """``min(z^2, c/eps)``; works elementwise on arrays."""
    if not eps > 0:
        raise InvalidParameterError("eps must be positive")
    z = np.asarray(z, dtype=float)
    out = np.minimum(z * z, np.asarray(c, dtype=float) / eps)
    return float(out) if out.ndim == 0 else out


@dataclass
class BondSet:
    """Owned bonds of a function: tails/heads index ``u.values``; ``k`` is the neighbor index."""

    tails: np.ndarray
    heads: np.ndarray
    k: np.ndarray
    coeff: np.ndarray

    def __len__(self):
        return self.tails.shape[0]


def owned_bonds(u: LatticeFunction, field: CoefficientField, A: LatticeRegion | None = None,
                ambient: LatticeRegion | None = None) -> BondSet:
    """Bonds ``(i, i+eps xi)`` with ``i in Z_eps(A)`` and ``i+eps xi in Z_eps(ambient)``.

    Ordered lexicographically by (tail site, neighbor index).
    """
    if field.dim != u.dim:
        raise InvalidParameterError(f"field dimension {field.dim} != function dimension {u.dim}")
    if A is None:
        tail_pos = np.arange(len(u))
        tail_idx = u.idx
    else:
        tail_idx = lattice_indices(A, u.eps)
        tail_pos = u.index.find(tail_idx)
        if np.any(tail_pos < 0):
            raise IncompleteFunctionError(tail_idx[np.flatnonzero(tail_pos < 0)[0]] * u.eps)
    amb_index = None if ambient is None else SiteIndex(lattice_indices(ambient, u.eps))
    tails, heads, ks, cs = [], [], [], []
    for k, xi in enumerate(field.neighbors.vectors):
        tgt = tail_idx + xi
        pos = u.index.find(tgt)
        if amb_index is None:
            keep = pos >= 0
        else:
            keep = amb_index.find(tgt) >= 0
            missing = keep & (pos < 0)
            if np.any(missing):
                raise IncompleteFunctionError(tgt[np.flatnonzero(missing)[0]] * u.eps)
        tails.append(tail_pos[keep])
        heads.append(pos[keep])
        ks.append(np.full(np.count_nonzero(keep), k, dtype=np.int64))
        cs.append(field.coeff(tail_idx[keep], k))
    tails = np.concatenate(tails) if tails else np.zeros(0, dtype=np.int64)
    heads = np.concatenate(heads) if heads else np.zeros(0, dtype=np.int64)
    ks = np.concatenate(ks) if ks else np.zeros(0, dtype=np.int64)
    cs = np.concatenate(cs) if cs else np.zeros(0)
    order = np.lexsort((ks, tails))  # tails follow u's lexicographic site order
    return BondSet(tails[order], heads[order], ks[order], cs[order])


@dataclass
class EnergyBreakdown:
    total: float
    per_bond: dict | None = None
    broken_bonds: frozenset = dc_field(default_factory=frozenset)

    @property
    def broken_bond_count(self) -> int:
        return len(self.broken_bonds)

    def to_json(self) -> dict:
        return {"total": self.total, "broken_bond_count": self.broken_bond_count}


def _bond_keys(u: LatticeFunction, bonds: BondSet):
    return [(tuple(u.idx[t].tolist()), int(k)) for t, k in zip(bonds.tails, bonds.k)]


def weak_membrane_energy(u: LatticeFunction, field: CoefficientField,
                         A: LatticeRegion | None = None, ambient: LatticeRegion | None = None,
                         keep_bonds: bool = False) -> EnergyBreakdown:
    """``sum eps^d min((D^xi u(i))^2, c_{i,xi}/eps)`` over owned bonds.

    ``broken_bonds`` holds ``(integer site, neighbor index)`` pairs of bonds
    with positive coefficient whose squared difference quotient exceeds the
    threshold. Site keys are integer coordinates ``i / eps``.
    """
    bonds = owned_bonds(u, field, A, ambient)
    eps, d = u.eps, u.dim
    diff = (u.values[bonds.heads] - u.values[bonds.tails]) / eps
    sq = diff * diff
    thr = bonds.coeff / eps
    contrib = eps ** d * np.minimum(sq, thr)
    total = math.fsum(contrib.tolist())
    broken_mask = (bonds.coeff > 0) & (sq > thr)
    keys = _bond_keys(u, bonds) if (keep_bonds or np.any(broken_mask)) else []
    broken = frozenset(key for key, b in zip(keys, broken_mask) if b)
    per_bond = dict(zip(keys, contrib.tolist())) if keep_bonds else None
    return EnergyBreakdown(total, per_bond, broken)


def elastic_energy(u: LatticeFunction, field: CoefficientField, A: LatticeRegion | None = None,
                   ambient: LatticeRegion | None = None) -> float:
    """``sum eps^d [c_{i,xi} > 0] (D^xi u(i))^2`` over owned bonds (no truncation)."""
    bonds = owned_bonds(u, field, A, ambient)
    eps, d = u.eps, u.dim
    diff = (u.values[bonds.heads] - u.values[bonds.tails]) / eps
    contrib = eps ** d * (bonds.coeff > 0) * diff * diff
    return math.fsum(contrib.tolist())


def check_spins(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = (values != 1.0) & (values != -1.0)
    if np.any(bad):
        raise InvalidSpinError(f"spin values must be +1 or -1, found {values[bad][0]}")
    return values


def spin_energy(v: LatticeFunction, field: CoefficientField, A: LatticeRegion | None = None,
                ambient: LatticeRegion | None = None) -> float:
    """``1/4 sum eps^(d-1) c_{i,xi} (v(i+eps xi) - v(i))^2`` over owned bonds."""
    check_spins(v.values)
    bonds = owned_bonds(v, field, A, ambient)
    eps, d = v.eps, v.dim
    jump = v.values[bonds.heads] - v.values[bonds.tails]
    contrib = 0.25 * eps ** (d - 1) * bonds.coeff * jump * jump
    return math.fsum(contrib.tolist())


def fidelity_energy(u: LatticeFunction, g: LatticeFunction) -> float:
    """``sum eps^d |u_i - g_i|^2``."""
    if not u.same_lattice(g):
        raise IncompatibleFunctionError("u and g must share lattice spacing and sites")
    r = u.values - g.values
    return math.fsum((u.eps ** u.dim * r * r).tolist())


# --------------------------------------------------------------------------
# cut-off blending


def cutoff_weights(sites, region: LatticeRegion, K: int, k: int, delta: float) -> np.ndarray:
    """Clamped linear ramp: 1 beyond depth ``(k+1) delta rho / K``, 0 above depth ``k delta rho / K``.

    Depth is the distance to the complement of the cube ``region``; the ramp
    is ``K / (rho delta)``-Lipschitz.
    """
    if region.kind != "cube":
        raise InvalidParameterError("cut-off blending needs a cube region")
    if not (K >= 1 and K <= k <= 2 * K - 1):
        raise InvalidParameterError(f"k must lie in {{K, ..., 2K-1}}, got k={k}, K={K}")
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    step = delta * region.side / K
    depth = region.inner_distance(sites)
    return np.clip((depth - k * step) / step, 0.0, 1.0)


def cutoff_blend(u: LatticeFunction, u0: LatticeFunction, region: LatticeRegion, K: int, k: int,
                 delta: float) -> LatticeFunction:
    """``phi_k u + (1 - phi_k) u0`` with the cut-off of :func:`cutoff_weights`."""
    if not u.same_lattice(u0):
        raise IncompatibleFunctionError("u and u0 must share lattice spacing and sites")
    phi = cutoff_weights(u.sites, region, K, k, delta)
    return u.with_values(phi * u.values + (1.0 - phi) * u0.values)


def blend_energy_bound(u: LatticeFunction, u0: LatticeFunction, field: CoefficientField,
                       region: LatticeRegion, K: int, k: int, delta: float) -> float:
    """Bond-by-bond upper bound for the weak-membrane energy of the blend.

    Bonds with ``phi = 1`` at both ends cost ``W(Du)``, bonds with ``phi = 0``
    cost ``W(Du0)``; on the stripe the blended difference splits into three
    parts and ``min(t, (a+b+c)^2) <= 3 (min(t,a^2) + min(t,b^2) + min(t,c^2))``
    gives ``3 (W(Du) + W(Du0) + (K |xi| / (rho delta))^2 |u - u0|^2(i+eps xi))``.
    """
    bonds = owned_bonds(u, field)
    eps, d = u.eps, u.dim
    phi = cutoff_weights(u.sites, region, K, k, delta)
    thr = bonds.coeff / eps
    du = (u.values[bonds.heads] - u.values[bonds.tails]) / eps
    du0 = (u0.values[bonds.heads] - u0.values[bonds.tails]) / eps
    w_u = np.minimum(du * du, thr)
    w_u0 = np.minimum(du0 * du0, thr)
    xi_len = np.linalg.norm(field.neighbors.vectors[bonds.k], axis=1)
    grad = K * xi_len / (region.side * delta)
    gap = (u.values - u0.values)[bonds.heads]
    mixed = 3.0 * (w_u + w_u0 + (grad * gap) ** 2)
    one = (phi[bonds.tails] == 1.0) & (phi[bonds.heads] == 1.0)
    zero = (phi[bonds.tails] == 0.0) & (phi[bonds.heads] == 0.0)
    per = np.where(one, w_u, np.where(zero, w_u0, mixed))
    return math.fsum((eps ** d * per).tolist())
