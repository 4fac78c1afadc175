"""Shortest roadmap distances and the order-constrained node-selection tour.

The solver returns the same optimum as the MTZ program: an open path that
picks exactly one candidate node per POI, visits ordered POIs in index
order, starts anywhere, and minimizes total roadmap distance. It is an
exact dynamic program over (visited POI subset, current node).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceSizeError, PlannerError
from .sampling import PrmGraph

MAX_GROUPS = 20


def dijkstra(adj, source: int):
    """Single-source shortest paths; returns (dist, pred) over all nodes."""
    n = len(adj)
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def all_pairs_distances(prm: PrmGraph, valid_ids):
    """Distances among ``valid_ids`` (in the given order) and per-source predecessor arrays."""
    ids = list(valid_ids)
    adj = prm.adjacency()
    D = np.zeros((len(ids), len(ids)))
    preds = {}
    for a, src in enumerate(ids):
        dist, pred = dijkstra(adj, src)
        row = dist[ids]
        if not np.all(np.isfinite(row)):
            lost = [ids[k] for k in np.flatnonzero(~np.isfinite(row))]
            raise PlannerError(f"roadmap is disconnected: node {src} cannot reach {lost}")
        D[a] = row
        preds[src] = pred
    # both directions come from different Dijkstra runs; keep them bit-identical
    D = np.minimum(D, D.T)
    return D, preds


def witness_path(preds, a: int, b: int) -> list:
    pred = preds[a]
    path = [b]
    while path[-1] != a:
        p = int(pred[path[-1]])
        if p < 0:
            raise PlannerError(f"no recorded path from {a} to {b}")
        path.append(p)
    return path[::-1]


@dataclass
class VisitationProblem:
    groups: list          # per POI: candidate node ids
    nodes: list           # node ids indexing dist
    dist: np.ndarray
    preds: dict = field(default_factory=dict)

    @classmethod
    def from_prm(cls, prm: PrmGraph, groups) -> "VisitationProblem":
        nodes = sorted({v for g in groups for v in g})
        dist, preds = all_pairs_distances(prm, nodes)
        return cls([list(g) for g in groups], nodes, dist, preds)

    def d(self, u: int, v: int) -> float:
        idx = {n: i for i, n in enumerate(self.nodes)}
        return float(self.dist[idx[u], idx[v]])


@dataclass
class VisitationPlan:
    chosen: list          # per POI index: node id
    order: list           # POI indices in visit sequence
    cost: float
    polyline: list = field(default_factory=list)
    waypoint_pois: list = field(default_factory=list)  # per polyline entry: tuple of POI indices

    def to_json(self, poi_names=None) -> dict:
        doc = {
            "chosen": [{"poi": i, "node": int(v)} for i, v in enumerate(self.chosen)],
            "order": [int(i) for i in self.order],
            "polyline": [int(v) for v in self.polyline],
            "cost": self.cost,
            "waypoints": [{"index": k, "pois": list(p)} for k, p in enumerate(self.waypoint_pois) if p],
        }
        if poi_names is not None:
            doc["poi_names"] = list(poi_names)
        return doc


def _ordered_ok(mask: int, g: int, n_ordered: int) -> bool:
    if g >= n_ordered:
        return True
    need = (1 << g) - 1
    return mask & need == need


def solve_visitation(problem: VisitationProblem, n_ordered: int) -> VisitationPlan:
    """Exact minimum-distance open path choosing one node per POI.

    POIs ``0..n_ordered-1`` must be visited in index order. Ties are broken
    by the lexicographically smallest visit order, then by the smallest
    node id per POI index.
    """
    groups = problem.groups
    G = len(groups)
    if G == 0:
        raise ValueError("no POI groups")
    if G > MAX_GROUPS:
        raise InstanceSizeError(f"{G} POIs exceed the exact solver bound of {MAX_GROUPS}")
    if not 0 <= n_ordered <= G:
        raise ValueError("n_ordered must lie in [0, number of groups]")
    for i, g in enumerate(groups):
        if not g:
            raise ValueError(f"group {i} has no candidate nodes")

    pos = {n: i for i, n in enumerate(problem.nodes)}
    # slots: one per (group, candidate) pair, sorted by node id inside each group
    slot_group, slot_node, members = [], [], []
    for g, cands in enumerate(groups):
        ids = []
        for v in sorted(set(cands)):
            ids.append(len(slot_node))
            slot_group.append(g)
            slot_node.append(v)
        members.append(np.array(ids, dtype=np.int64))
    S = len(slot_node)
    ix = np.array([pos[v] for v in slot_node])
    D = problem.dist[np.ix_(ix, ix)]
    full = (1 << G) - 1
    if (full + 1) * S * 8 > 2 * 1024 ** 3:
        raise InstanceSizeError(f"{G} POIs with {S} candidates exceed the solver memory budget")

    # h[mask][s]: cheapest completion once the POIs in mask are visited and we stand on slot s
    h = {full: np.zeros(S)}
    masks = [m for m in range(full + 1) if _prefix_reachable(m, n_ordered)]
    for mask in sorted(masks, key=lambda m: -bin(m).count("1")):
        if mask == full:
            continue
        best = np.full(S, np.inf)
        for g in range(G):
            if mask >> g & 1 or not _ordered_ok(mask, g, n_ordered):
                continue
            nxt = h.get(mask | 1 << g)
            if nxt is None:
                continue
            cand = members[g]
            best = np.minimum(best, (D[:, cand] + nxt[cand]).min(axis=1))
        h[mask] = best

    start = [g for g in range(G) if _ordered_ok(0, g, n_ordered)]
    opt = min(float(h[1 << g][members[g]].min()) for g in start)
    tol = 1e-9 * max(1.0, abs(opt))

    # lexicographically smallest visit order among optimal solutions
    order, mask, front, prev = [], 0, None, None
    for _ in range(G):
        for g in range(G):
            if mask >> g & 1 or not _ordered_ok(mask, g, n_ordered):
                continue
            cand = members[g]
            reach = np.zeros(len(cand)) if front is None else (front[:, None] + D[np.ix_(prev, cand)]).min(axis=0)
            if (reach + h[mask | 1 << g][cand]).min() <= opt + tol:
                order.append(g)
                mask |= 1 << g
                front, prev = reach, cand
                break
        else:  # pragma: no cover - the optimum always extends
            raise PlannerError("visitation reconstruction lost the optimum")

    # with the order fixed, smallest node id per POI index
    allowed = [members[g].copy() for g in range(G)]
    for g in range(G):
        for s in members[g]:
            trial = list(allowed)
            trial[g] = np.array([s])
            if _fixed_order_cost(D, order, trial) <= opt + tol:
                allowed[g] = trial[g]
                break
    chosen = [slot_node[int(allowed[g][0])] for g in range(G)]
    path = [chosen[g] for g in order]
    cost = 0.0
    for a, b in zip(path, path[1:]):
        cost += float(problem.dist[pos[a], pos[b]])
    return VisitationPlan(chosen=chosen, order=order, cost=cost)


def _prefix_reachable(mask: int, n_ordered: int) -> bool:
    ordered_bits = mask & ((1 << n_ordered) - 1)
    return ordered_bits & (ordered_bits + 1) == 0


def _fixed_order_cost(D, order, allowed) -> float:
    front = np.zeros(len(allowed[order[0]]))
    prev = allowed[order[0]]
    for g in order[1:]:
        cur = allowed[g]
        front = (front[:, None] + D[np.ix_(prev, cur)]).min(axis=0)
        prev = cur
    return float(front.min())


def expand_path(plan: VisitationPlan, preds, prm: PrmGraph, tol: float = 1e-12) -> VisitationPlan:
    """Fill in the roadmap polyline joining the chosen nodes.

    Consecutive witness paths are concatenated, repeated junctions merged
    and zero-length clone hops collapsed into one entry that carries the
    POI ids of every waypoint it absorbed.
    """
    stops = [(plan.chosen[g], g) for g in plan.order]
    raw = [(stops[0][0], {stops[0][1]})]
    for (a, _), (b, gb) in zip(stops, stops[1:]):
        path = witness_path(preds, a, b)
        for v in path[1:-1]:
            raw.append((v, set()))
        raw.append((b, {gb}))
    poly, tags = [], []
    pos = prm.positions
    for v, t in raw:
        if poly and np.linalg.norm(pos[v] - pos[poly[-1]]) <= tol:
            tags[-1] |= t
            continue
        poly.append(int(v))
        tags.append(set(t))
    plan.polyline = poly
    plan.waypoint_pois = [tuple(sorted(t)) for t in tags]
    return plan
