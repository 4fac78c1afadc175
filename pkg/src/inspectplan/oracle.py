"""Saliency oracles: decide whether a POI is observable from a position.

The geometric oracle votes on 9 sight lines (box centroid and corners)
and scores saliency by the solid angle the POI box subtends. The remote
oracle speaks a small JSON protocol so an external vision service can
take its place.
"""

from __future__ import annotations

import enum
import json
import math
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoverageError, InputError, ProtocolError, TransportError
from .sampling import PrmEdge, PrmGraph, PrmNode
from .scene import Aabb, OccupancyGrid, raycast_blocked

FOUR_PI = 4.0 * math.pi


class SpatialRelation(str, enum.Enum):
    INSIDE = "inside"
    OVER = "over"
    IN_FRONT = "in_front"
    AROUND = "around"
    ARBITRARY = "arbitrary"

    @classmethod
    def parse(cls, text: str) -> "SpatialRelation":
        key = str(text).strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown spatial relation {text!r}; expected one of "
                             f"{[r.value for r in cls]}") from None


@dataclass(frozen=True, eq=False)
class Poi:
    name: str
    relation: SpatialRelation
    aabb: Aabb
    front_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    visible_range: float = 1.0

    def __post_init__(self):
        axis = np.asarray(self.front_axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if not norm > 0 or not np.isfinite(norm):
            raise InputError(f"POI {self.name!r}: front_axis must be a non-zero vector")
        object.__setattr__(self, "front_axis", axis / norm)
        if not self.visible_range > 0:
            raise InputError(f"POI {self.name!r}: visible_range must be positive")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "relation": self.relation.value,
            "aabb": self.aabb.to_json(),
            "front_axis": self.front_axis.tolist(),
            "visible_range": self.visible_range,
        }


@dataclass(frozen=True)
class TaskSpec:
    ordered: tuple = ()
    unordered: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ordered", tuple(self.ordered))
        object.__setattr__(self, "unordered", tuple(self.unordered))
        names = [p.name for p in self.pois]
        if not names:
            raise InputError("task lists no POIs")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise InputError(f"duplicate POI names: {dupes}")

    @property
    def pois(self) -> tuple:
        """Ordered POIs first (indices 0..n_ordered-1), then unordered."""
        return self.ordered + self.unordered

    @property
    def n_ordered(self) -> int:
        return len(self.ordered)

    def to_json(self) -> dict:
        return {"ordered": [p.to_json() for p in self.ordered],
                "unordered": [p.to_json() for p in self.unordered]}


def _poi_from_json(doc, default_range) -> Poi:
    if not isinstance(doc, dict):
        raise InputError(f"POI entry must be an object, got {doc!r}")
    try:
        name = str(doc["name"])
        relation = SpatialRelation.parse(doc.get("relation", "arbitrary"))
        box = doc["aabb"]
        aabb = Aabb(box["min"], box["max"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed POI {doc.get('name', '?')!r}: {exc}") from None
    return Poi(name, relation, aabb,
               front_axis=doc.get("front_axis", [1.0, 0.0, 0.0]),
               visible_range=float(doc.get("visible_range", default_range)))


def task_from_json(doc: dict, default_range: float) -> TaskSpec:
    if not isinstance(doc, dict):
        raise InputError("task file must hold a JSON object")
    unknown = set(doc) - {"ordered", "unordered"}
    if unknown:
        raise InputError(f"unknown task keys {sorted(unknown)}")
    return TaskSpec(
        ordered=[_poi_from_json(p, default_range) for p in doc.get("ordered", [])],
        unordered=[_poi_from_json(p, default_range) for p in doc.get("unordered", [])],
    )


def load_task(path, scene_diagonal: float) -> TaskSpec:
    """Read a task file. Missing ``visible_range`` defaults to half the scene diagonal."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read task file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"task file is not valid JSON: {exc}") from None
    return task_from_json(doc, 0.5 * scene_diagonal)


@dataclass(frozen=True)
class SaliencyVerdict:
    visible: bool
    saliency: float
    relation_ok: bool

    def __post_init__(self):
        if not 0.0 <= self.saliency <= 1.0:
            raise ValueError(f"saliency {self.saliency} outside [0, 1]")
        if not self.visible and self.saliency != 0.0:
            raise ValueError("an invisible POI must have zero saliency")


def relation_satisfied(p, poi: Poi) -> bool:
    p = np.asarray(p, dtype=float)
    rel = poi.relation
    box = poi.aabb
    if rel is SpatialRelation.ARBITRARY:
        return True
    inside = box.contains(p)
    if rel is SpatialRelation.INSIDE:
        return inside
    if rel is SpatialRelation.OVER:
        return bool(p[2] > box.max[2] and box.min[0] <= p[0] <= box.max[0] and box.min[1] <= p[1] <= box.max[1])
    offset = p - box.centroid
    in_range = float(np.linalg.norm(offset)) <= poi.visible_range
    if rel is SpatialRelation.AROUND:
        return (not inside) and in_range
    return bool(offset @ poi.front_axis > 0) and (not inside) and in_range


def _triangle_solid_angle(a, b, c):
    la, lb, lc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(c)
    num = abs(float(a @ np.cross(b, c)))
    den = la * lb * lc + (a @ b) * lc + (a @ c) * lb + (b @ c) * la
    return 2.0 * math.atan2(num, den)


def box_solid_angle(p, box: Aabb) -> float:
    """Solid angle (steradians) the box subtends at ``p``; 4*pi from inside."""
    p = np.asarray(p, dtype=float)
    if box.contains(p):
        return FOUR_PI
    lo, hi = box.min - p, box.max - p
    total = 0.0
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        for plane, facing in ((lo[k], lo[k] > 0), (hi[k], hi[k] < 0)):
            if not facing:
                continue
            quad = []
            for u, v in ((lo[i], lo[j]), (hi[i], lo[j]), (hi[i], hi[j]), (lo[i], hi[j])):
                q = np.empty(3)
                q[k], q[i], q[j] = plane, u, v
                quad.append(q)
            total += _triangle_solid_angle(quad[0], quad[1], quad[2])
            total += _triangle_solid_angle(quad[0], quad[2], quad[3])
    return total


def focus_target(poi: Poi) -> np.ndarray:
    """Where the camera should point for this POI: the box centroid."""
    return poi.aabb.centroid.copy()


def assess_geometric(node_pos, poi: Poi, grid: OccupancyGrid, omega_ref: float) -> SaliencyVerdict:
    node_pos = np.asarray(node_pos, dtype=float)
    targets = np.vstack([poi.aabb.centroid, poi.aabb.corners()])
    clear = sum(not raycast_blocked(grid, node_pos, t) for t in targets)
    visible = clear >= 5
    saliency = min(max(box_solid_angle(node_pos, poi.aabb) / omega_ref, 0.0), 1.0) if visible else 0.0
    return SaliencyVerdict(visible, saliency, relation_satisfied(node_pos, poi))


def is_salient(verdict: SaliencyVerdict, threshold: float) -> bool:
    return bool(verdict.visible and verdict.saliency >= threshold and verdict.relation_ok)


class GeometricOracle:
    """Raycast visibility plus solid-angle saliency over an occupancy grid."""

    def __init__(self, grid: OccupancyGrid, omega_ref: float):
        if not omega_ref > 0:
            raise ValueError("omega_ref must be positive")
        self.grid = grid
        self.omega_ref = float(omega_ref)
        self.max_in_flight = 1

    def assess(self, node_pos, poi: Poi) -> SaliencyVerdict:
        return assess_geometric(node_pos, poi, self.grid, self.omega_ref)


def request_document(node_pos, poi: Poi) -> dict:
    return {
        "poi": {"name": poi.name, "relation": poi.relation.value, "aabb": poi.aabb.to_json()},
        "position": [float(x) for x in np.asarray(node_pos, dtype=float)],
    }


def parse_verdict(doc) -> SaliencyVerdict:
    if not isinstance(doc, dict):
        raise ProtocolError(f"response must be a JSON object, got {type(doc).__name__}")
    missing = {"visible", "saliency", "relation_ok"} - set(doc)
    if missing:
        raise ProtocolError(f"response lacks {sorted(missing)}")
    visible, saliency, rel = doc["visible"], doc["saliency"], doc["relation_ok"]
    if not isinstance(visible, bool) or not isinstance(rel, bool):
        raise ProtocolError("visible and relation_ok must be booleans")
    if isinstance(saliency, bool) or not isinstance(saliency, (int, float)) or not math.isfinite(saliency):
        raise ProtocolError(f"saliency must be a finite number, got {saliency!r}")
    if not 0.0 <= saliency <= 1.0:
        raise ProtocolError(f"saliency {saliency} outside [0, 1]")
    if not visible and saliency != 0:
        raise ProtocolError("invisible POI reported with non-zero saliency")
    return SaliencyVerdict(visible, float(saliency), rel)


def assess_remote(endpoint: str, node_pos, poi: Poi, timeout: float = 10.0,
                  retries: int = 2, backoff: float = 0.2) -> SaliencyVerdict:
    """POST one assessment; transport failures are retried with exponential backoff."""
    url = endpoint.rstrip("/")
    if not url.endswith("/assess"):
        url += "/assess"
    body = json.dumps(request_document(node_pos, poi)).encode()
    last = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        req = urllib.request.Request(url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                if resp.status != 200:
                    last = f"HTTP {resp.status}"
                    continue
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            last = f"HTTP {exc.code}"
            continue
        except (urllib.error.URLError, OSError) as exc:
            last = str(getattr(exc, "reason", exc))
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not JSON: {exc}") from None
        return parse_verdict(doc)
    raise TransportError(f"{url}: {last} after {retries + 1} attempts")


class RemoteOracle:
    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2,
                 backoff: float = 0.2, max_in_flight: int = 8):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_in_flight = max(1, int(max_in_flight))

    def assess(self, node_pos, poi: Poi) -> SaliencyVerdict:
        return assess_remote(self.endpoint, node_pos, poi, self.timeout, self.retries, self.backoff)


def compute_valid_sets(prm: PrmGraph, task: TaskSpec, oracle, threshold: float):
    """Find the salient nodes of every POI and give each (node, POI) pair its own id.

    A node salient for k >= 2 POIs keeps the lowest-index POI and gains
    k - 1 clones, each joined to it by a zero-length edge. Returns the
    expanded graph and, per POI index, the sorted list of its node ids.
    """
    pois = task.pois
    pairs = [(i, j) for i in range(len(prm.nodes)) for j in range(len(pois))]

    def job(pair):
        i, j = pair
        return is_salient(oracle.assess(prm.nodes[i].position, pois[j]), threshold)

    workers = getattr(oracle, "max_in_flight", 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(job, pairs))
    else:
        flags = [job(p) for p in pairs]
    salient = np.array(flags, dtype=bool).reshape(len(prm.nodes), len(pois))

    nodes = [PrmNode(n.position.copy(), n.clone_of, n.poi_id) for n in prm.nodes]
    edges = list(prm.edges)
    valid = [[] for _ in pois]
    for i in range(len(prm.nodes)):
        seen = np.flatnonzero(salient[i])
        if len(seen) == 0:
            continue
        nodes[i].poi_id = int(seen[0])
        valid[seen[0]].append(i)
        for j in seen[1:]:
            cid = len(nodes)
            nodes.append(PrmNode(nodes[i].position.copy(), clone_of=i, poi_id=int(j)))
            edges.append(PrmEdge(i, cid, 0.0))
            valid[j].append(cid)
    for j, ids in enumerate(valid):
        if not ids:
            raise CoverageError(pois[j].name)
    return PrmGraph(nodes, edges), [sorted(v) for v in valid]
