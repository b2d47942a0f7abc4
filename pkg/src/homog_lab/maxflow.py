"""Dinic's maximum-flow algorithm on arc-pair residual graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass
class MaxFlowResult:
    flow: float
    source_side: np.ndarray  # bool per node, reachable from the source in the residual graph
    phases: int
    augmentations: int
    residual: np.ndarray     # residual capacity per arc


def max_flow(n_nodes: int, tails, heads, caps, source: int, sink: int,
             rel_tol: float = 1e-12) -> MaxFlowResult:
    """Maximum ``source -> sink`` flow.

    Arcs come in pairs: arc ``2j`` is ``tails[2j] -> heads[2j]`` and arc
    ``2j + 1`` its reverse, each with its own capacity (so an undirected edge
    of weight ``c`` is the pair ``(c, c)``). Adjacency lists follow arc order,
    which makes the run deterministic.
    """
    tails = np.asarray(tails, dtype=np.int64)
    heads_arr = np.asarray(heads, dtype=np.int64)
    cap = np.asarray(caps, dtype=float).copy()
    if tails.shape[0] % 2:
        raise ValueError("arcs must come in pairs")
    if np.any(cap < 0):
        raise ValueError("capacities must be nonnegative")
    if source == sink:
        raise ValueError("source and sink must differ")
    tol = rel_tol * max(1.0, float(cap.max()) if cap.size else 1.0)

    head = heads_arr.tolist()
    res = cap.tolist()
    adj = [[] for _ in range(n_nodes)]
    for e, u in enumerate(tails.tolist()):
        adj[u].append(e)

    flow = 0.0
    phases = 0
    augmentations = 0
    while True:
        level = [-1] * n_nodes
        level[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            lu = level[u] + 1
            for e in adj[u]:
                v = head[e]
                if level[v] < 0 and res[e] > tol:
                    level[v] = lu
                    queue.append(v)
        if level[sink] < 0:
            break
        phases += 1
        it = [0] * n_nodes
        # blocking flow by repeated advance/retreat searches
        while True:
            path = []
            u = source
            while u != sink:
                adj_u = adj[u]
                i = it[u]
                nxt = level[u] + 1
                while i < len(adj_u):
                    e = adj_u[i]
                    if res[e] > tol and level[head[e]] == nxt:
                        break
                    i += 1
                it[u] = i
                if i < len(adj_u):
                    e = adj_u[i]
                    path.append(e)
                    u = head[e]
                    continue
                if u == source:
                    break
                level[u] = -1  # dead end for this phase
                e = path.pop()
                u = head[e ^ 1]
                it[u] += 1
            if u != sink:
                break
            f = min(res[e] for e in path)
            for e in path:
                res[e] -= f
                res[e ^ 1] += f
            flow += f
            augmentations += 1

    seen = np.zeros(n_nodes, dtype=bool)
    seen[source] = True
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for e in adj[u]:
            v = head[e]
            if not seen[v] and res[e] > tol:
                seen[v] = True
                queue.append(v)
    return MaxFlowResult(flow, seen, phases, augmentations, np.array(res))
