"""Free-space sampling, Poisson-disk thinning and roadmap construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConnectivityError, SamplingError
from .scene import Aabb, OccupancyGrid, segment_free


@dataclass
class PrmNode:
    position: np.ndarray
    clone_of: Optional[int] = None
    poi_id: Optional[int] = None


@dataclass(frozen=True)
class PrmEdge:
    u: int
    v: int
    length: float


@dataclass
class PrmGraph:
    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=float).reshape(-1, 3)

    def adjacency(self) -> list:
        adj = [[] for _ in self.nodes]
        for e in self.edges:
            adj[e.u].append((e.v, e.length))
            adj[e.v].append((e.u, e.length))
        return adj

    def components(self) -> list:
        return _components(len(self.nodes), [(e.u, e.v) for e in self.edges])

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": i, "pos": [float(x) for x in n.position], "clone_of": n.clone_of, "poi_id": n.poi_id}
                for i, n in enumerate(self.nodes)
            ],
            "edges": [{"u": e.u, "v": e.v, "len": e.length} for e in self.edges],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PrmGraph":
        nodes = [PrmNode(np.asarray(n["pos"], dtype=float), n.get("clone_of"), n.get("poi_id"))
                 for n in sorted(doc["nodes"], key=lambda n: n["id"])]
        edges = [PrmEdge(int(e["u"]), int(e["v"]), float(e["len"])) for e in doc["edges"]]
        return cls(nodes, edges)


def _components(n, pairs):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: (-len(g), g[0]))


def sample_free(grid: OccupancyGrid, n: int, rng_seed: int, region: Optional[Aabb] = None) -> np.ndarray:
    """Draw ``n`` points uniformly over free cells, jittered inside each cell.

    With ``region``, only cells whose centre lies in it are eligible; the
    pipeline passes the scene box so the grid's outer margin, which a
    closed mesh seals off from the interior, is never sampled.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    mask = ~grid.occupied
    if region is not None:
        idx = np.indices(grid.dims).reshape(3, -1).T
        centers = grid.origin + grid.cell_size * (idx + 0.5)
        inside = np.all((centers >= region.min) & (centers <= region.max), axis=1)
        mask = mask & inside.reshape(grid.dims)
    free = np.flatnonzero(mask.ravel())
    if len(free) == 0:
        raise SamplingError("occupancy grid has no free cells")
    rng = np.random.default_rng(rng_seed)
    picks = free[rng.integers(0, len(free), size=n)]
    cells = np.stack(np.unravel_index(picks, grid.dims), axis=1)
    jitter = rng.random((n, 3))
    pts = grid.origin + grid.cell_size * (cells + jitter)
    bad = ~grid.points_free(pts)
    if bad.any():
        # jitter rounded onto the far cell face
        pts[bad] = grid.origin + grid.cell_size * (cells[bad] + 0.5)
    return pts


def poisson_sparsify(points, r_min: float) -> np.ndarray:
    """Greedy dart throwing in input order.

    A point survives iff every previously kept point is at least ``r_min``
    away. Output preserves input order.
    """
    if r_min < 0:
        raise ValueError("r_min must be non-negative")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if r_min == 0 or len(pts) == 0:
        return pts.copy()
    kept = np.empty_like(pts)
    k = 0
    r2 = r_min * r_min
    for p in pts:
        if k == 0 or np.min(np.sum((kept[:k] - p) ** 2, axis=1)) >= r2:
            kept[k] = p
            k += 1
    return kept[:k].copy()


def build_prm(points, grid: OccupancyGrid, connect_radius: float, max_doublings: int = 6) -> PrmGraph:
    """Radius-connect the points with collision-free straight edges.

    If the result is disconnected the radius is doubled (up to
    ``max_doublings`` times) and candidate edges are re-tested.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("build_prm needs at least one point")
    n = len(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    iu, ju = np.triu_indices(n, k=1)
    pair_d = dist[iu, ju]
    tested = {}
    radius = float(connect_radius)
    comps = [[i] for i in range(n)]
    for attempt in range(max_doublings + 1):
        edges = []
        for i, j, d in zip(iu[pair_d <= radius], ju[pair_d <= radius], pair_d[pair_d <= radius]):
            if d <= 0:
                continue
            key = (int(i), int(j))
            if key not in tested:
                tested[key] = segment_free(grid, pts[i], pts[j])
            if tested[key]:
                edges.append(PrmEdge(key[0], key[1], float(d)))
        comps = _components(n, [(e.u, e.v) for e in edges])
        if len(comps) == 1:
            return PrmGraph([PrmNode(p.copy()) for p in pts], edges)
        if len(pair_d) and radius >= pair_d.max():
            break
        radius *= 2.0
    sizes = [len(c) for c in comps]
    raise ConnectivityError(f"roadmap has {len(comps)} disconnected components of sizes {sizes}")
