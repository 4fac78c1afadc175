"""Scene geometry, voxel occupancy and collision queries.

Coordinates are meters in a right-handed, Z-up frame.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import ResolutionError, SceneParseError

DEFAULT_MAX_CELLS = 20_000_000


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=float).reshape(3)
        hi = np.asarray(self.max, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("aabb corners must be finite")
        if np.any(lo > hi):
            raise ValueError(f"aabb min {lo.tolist()} exceeds max {hi.tolist()}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_points(cls, pts) -> "Aabb":
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def size(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))

    def corners(self) -> np.ndarray:
        lo, hi = self.min, self.max
        return np.array([[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]] for i, j, k in product((0, 1), repeat=3)])

    def to_json(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}


@dataclass(frozen=True)
class Scene:
    vertices: np.ndarray
    triangles: Optional[np.ndarray]
    bbox: Aabb

    @classmethod
    def from_arrays(cls, vertices, triangles=None) -> "Scene":
        v = np.asarray(vertices, dtype=float).reshape(-1, 3)
        if len(v) == 0:
            raise SceneParseError("scene has no vertices")
        if not np.all(np.isfinite(v)):
            raise SceneParseError("scene has non-finite vertex coordinates")
        t = None
        if triangles is not None:
            t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
            if t.size and (t.min() < 0 or t.max() >= len(v)):
                raise SceneParseError("triangle index out of range")
        return cls(v, t, Aabb.of_points(v))


# --------------------------------------------------------------------------
# readers


def _finite_floats(tokens, lineno, what="coordinate"):
    try:
        vals = [float(tok) for tok in tokens]
    except ValueError:
        raise SceneParseError(f"line {lineno}: malformed {what} {' '.join(tokens)!r}") from None
    if not all(math.isfinite(x) for x in vals):
        raise SceneParseError(f"line {lineno}: non-finite {what}")
    return vals


def _read_obj(path: Path) -> Scene:
    verts, tris = [], []
    faces = []  # (lineno, raw indices), resolved once all vertices are known
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise SceneParseError(f"line {lineno}: vertex needs 3 coordinates")
                verts.append(_finite_floats(parts[1:4], lineno))
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise SceneParseError(f"line {lineno}: face needs at least 3 vertices")
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError:
                    raise SceneParseError(f"line {lineno}: malformed face index") from None
                faces.append((lineno, len(verts), idx))
    n = len(verts)
    for lineno, seen, idx in faces:
        resolved = []
        for i in idx:
            # negative indices are relative to the vertices read so far
            j = i - 1 if i > 0 else seen + i
            if i == 0 or not 0 <= j < n:
                raise SceneParseError(f"line {lineno}: vertex index {i} out of range (have {n})")
            resolved.append(j)
        for k in range(1, len(resolved) - 1):
            tris.append((resolved[0], resolved[k], resolved[k + 1]))
    if n == 0:
        raise SceneParseError(f"{path}: no vertices")
    return Scene(np.array(verts, dtype=float), np.array(tris, dtype=np.int64).reshape(-1, 3), Aabb.of_points(verts))


def _read_xyz(path: Path) -> Scene:
    pts = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.replace(",", " ").split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 3:
                raise SceneParseError(f"line {lineno}: expected at least 3 columns")
            pts.append(_finite_floats(parts[:3], lineno))
    if not pts:
        raise SceneParseError(f"{path}: no points")
    return Scene(np.array(pts, dtype=float), None, Aabb.of_points(pts))


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path: Path) -> Scene:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise SceneParseError(f"{path}: not a PLY file")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # [name, count, [(prop, type, list_count_type)]]
    for lineno, line in enumerate(header, 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise SceneParseError(f"header line {lineno}: property before element")
            if parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    raise SceneParseError(f"header line {lineno}: unknown list type")
                elements[-1][2].append((parts[4], _PLY_TYPES[parts[3]], _PLY_TYPES[parts[2]]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise SceneParseError(f"header line {lineno}: unknown type {parts[1]!r}")
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]], None))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise SceneParseError(f"{path}: unsupported PLY format {fmt!r}")

    verts, faces = None, []
    if fmt == "ascii":
        tokens = data[body_start:].decode("ascii", errors="replace").split()
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(tokens):
                raise SceneParseError(f"{path}: truncated PLY body at token {pos}")
            out = tokens[pos:pos + n]
            pos += n
            return out

        for name, count, props in elements:
            rows = []
            for r in range(count):
                row = {}
                for prop, typ, cnt in props:
                    if cnt is None:
                        row[prop] = _finite_floats(take(1), f"element {name} row {r}", "value")[0]
                    else:
                        k = int(take(1)[0])
                        row[prop] = [int(x) for x in take(k)]
                rows.append(row)
            if name == "vertex":
                verts = [[row.get("x"), row.get("y"), row.get("z")] for row in rows]
            elif name == "face":
                faces = [row.get("vertex_indices", row.get("vertex_index", [])) for row in rows]
    else:
        order = "<" if fmt == "binary_little_endian" else ">"
        off = body_start
        for name, count, props in elements:
            scalar = all(cnt is None for _, _, cnt in props)
            if scalar:
                dt = np.dtype([(p, order + t) for p, t, _ in props])
                nbytes = dt.itemsize * count
                if off + nbytes > len(data):
                    raise SceneParseError(f"{path}: truncated binary element {name!r} at offset {off}")
                arr = np.frombuffer(data, dtype=dt, count=count, offset=off)
                off += nbytes
                if name == "vertex":
                    verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(float)
                continue
            rows = []
            for r in range(count):
                row = {}
                for prop, typ, cnt in props:
                    try:
                        if cnt is None:
                            (row[prop],) = struct.unpack_from(order + typ, data, off)
                            off += struct.calcsize(typ)
                        else:
                            (k,) = struct.unpack_from(order + cnt, data, off)
                            off += struct.calcsize(cnt)
                            row[prop] = list(struct.unpack_from(order + typ * k, data, off))
                            off += struct.calcsize(typ) * k
                    except struct.error:
                        raise SceneParseError(f"{path}: truncated binary element {name!r} at offset {off}") from None
                rows.append(row)
            if name == "face":
                faces = [row.get("vertex_indices", row.get("vertex_index", [])) for row in rows]
            elif name == "vertex":
                verts = [[row.get("x"), row.get("y"), row.get("z")] for row in rows]

    if verts is None or len(verts) == 0:
        raise SceneParseError(f"{path}: PLY has no vertex element")
    try:
        v = np.asarray(verts, dtype=float)
    except (TypeError, ValueError):
        raise SceneParseError(f"{path}: vertex element lacks x/y/z") from None
    if not np.all(np.isfinite(v)):
        bad = int(np.argwhere(~np.isfinite(v))[0, 0])
        raise SceneParseError(f"{path}: non-finite coordinate at vertex {bad}")
    tris = []
    for fi, f in enumerate(faces):
        if len(f) < 3:
            raise SceneParseError(f"{path}: face {fi} has fewer than 3 vertices")
        for i in f:
            if not 0 <= i < len(v):
                raise SceneParseError(f"{path}: face {fi} references vertex {i} (have {len(v)})")
        for k in range(1, len(f) - 1):
            tris.append((f[0], f[k], f[k + 1]))
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3) if faces else None
    return Scene(v, triangles, Aabb.of_points(v))


_READERS = {"obj": _read_obj, "ply": _read_ply, "xyz": _read_xyz}


def load_scene(path, format: Optional[str] = None) -> Scene:
    """Read an OBJ, PLY (ASCII or binary) or XYZ file.

    ``format`` defaults to the file suffix. Point clouds (XYZ, PLY without
    faces) come back with ``triangles=None``.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in _READERS:
        raise SceneParseError(f"unknown scene format {fmt!r}")
    if not path.is_file():
        raise SceneParseError(f"scene file not found: {path}")
    return _READERS[fmt](path)


# --------------------------------------------------------------------------
# occupancy


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: np.ndarray
    cell_size: float
    dims: tuple
    occupied: np.ndarray  # bool, shape == dims

    @property
    def extent(self) -> Aabb:
        return Aabb(self.origin, self.origin + self.cell_size * np.asarray(self.dims))

    def cell_of(self, p) -> tuple:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin) / self.cell_size)
        return tuple(int(i) for i in idx)

    def in_bounds(self, cell) -> bool:
        return all(0 <= c < d for c, d in zip(cell, self.dims))

    def cell_box(self, cell) -> Aabb:
        lo = self.origin + self.cell_size * np.asarray(cell, dtype=float)
        return Aabb(lo, lo + self.cell_size)

    def points_free(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        idx = np.floor((pts - self.origin) / self.cell_size)
        dims = np.asarray(self.dims)
        ok = np.all((idx >= 0) & (idx < dims), axis=1) & np.all(np.isfinite(pts), axis=1)
        out = np.zeros(len(pts), dtype=bool)
        ii = idx[ok].astype(np.int64)
        out[ok] = ~self.occupied[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def free_fraction(self) -> float:
        return 1.0 - float(self.occupied.mean())


def point_free(grid: OccupancyGrid, p) -> bool:
    return bool(grid.points_free(p)[0])


def traverse(grid: OccupancyGrid, a, b) -> Iterator[tuple]:
    """Yield every cell index the segment a->b passes through, in order.

    Amanatides-Woo voxel walk; indices may fall outside the grid.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = grid.cell_size
    pa = (a - grid.origin) / h
    pb = (b - grid.origin) / h
    cell = [int(math.floor(x)) for x in pa]
    last = [int(math.floor(x)) for x in pb]
    d = pb - pa
    step, t_max, t_delta = [0, 0, 0], [math.inf] * 3, [math.inf] * 3
    for k in range(3):
        if d[k] > 0:
            step[k] = 1
            t_max[k] = (cell[k] + 1 - pa[k]) / d[k]
            t_delta[k] = 1.0 / d[k]
        elif d[k] < 0:
            step[k] = -1
            t_max[k] = (cell[k] - pa[k]) / d[k]
            t_delta[k] = -1.0 / d[k]
    budget = sum(abs(last[k] - cell[k]) for k in range(3))
    yield tuple(cell)
    for _ in range(budget):
        k = 0 if t_max[0] <= t_max[1] and t_max[0] <= t_max[2] else (1 if t_max[1] <= t_max[2] else 2)
        if t_max[k] > 1.0:
            break
        cell[k] += step[k]
        t_max[k] += t_delta[k]
        yield tuple(cell)
    if cell != last:
        # rounding left the walk one crossing short; the endpoint cell still counts
        yield tuple(last)


def segment_free(grid: OccupancyGrid, a, b) -> bool:
    occ = grid.occupied
    dx, dy, dz = grid.dims
    for i, j, k in traverse(grid, a, b):
        if not (0 <= i < dx and 0 <= j < dy and 0 <= k < dz) or occ[i, j, k]:
            return False
    return True


def raycast_blocked(grid: OccupancyGrid, origin, target) -> bool:
    """True iff an occupied cell lies strictly between origin and target.

    The cells holding the two endpoints are ignored, as are cells outside
    the grid.
    """
    start = grid.cell_of(origin)
    end = grid.cell_of(target)
    occ = grid.occupied
    dx, dy, dz = grid.dims
    for cell in traverse(grid, origin, target):
        if cell == start or cell == end:
            continue
        i, j, k = cell
        if 0 <= i < dx and 0 <= j < dy and 0 <= k < dz and occ[i, j, k]:
            return True
    return False


def _tri_box_overlap(v0, v1, v2, centers, half, tol):
    """Separating-axis test of one triangle against many cubes (closed sets)."""
    p = [v0 - centers, v1 - centers, v2 - centers]
    hit = np.ones(len(centers), dtype=bool)
    for k in range(3):
        lo = np.minimum(np.minimum(p[0][:, k], p[1][:, k]), p[2][:, k])
        hi = np.maximum(np.maximum(p[0][:, k], p[1][:, k]), p[2][:, k])
        hit &= (lo <= half + tol) & (hi >= -half - tol)
    edges = (v1 - v0, v2 - v1, v0 - v2)
    normal = np.cross(edges[0], edges[1])
    axes = [normal] + [np.cross(e, u) for e in edges for u in np.eye(3)]
    for ax in axes:
        n = np.linalg.norm(ax)
        if n < 1e-300:
            continue
        ax = ax / n
        r = half * np.abs(ax).sum()
        q0, q1, q2 = (pi @ ax for pi in p)
        lo = np.minimum(np.minimum(q0, q1), q2)
        hi = np.maximum(np.maximum(q0, q1), q2)
        hit &= (lo <= r + tol) & (hi >= -r - tol)
    return hit


def _closest_on_triangle(pts, a, b, c):
    """Closest point on triangle abc to each row of pts (Ericson's region test)."""
    ab, ac = b - a, c - a
    ap = pts - a
    d1, d2 = ap @ ab, ap @ ac
    bp = pts - b
    d3, d4 = bp @ ab, bp @ ac
    cp = pts - c
    d5, d6 = cp @ ab, cp @ ac
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + v[:, None] * ab + w[:, None] * ac
        # edge regions
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out[m] = b + t_bc[m, None] * (c - b)
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out[m] = a + t_ac[m, None] * ac
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out[m] = a + t_ab[m, None] * ab
    out[(d6 >= 0) & (d5 <= d6)] = c
    out[(d3 >= 0) & (d4 <= d3)] = b
    out[(d1 <= 0) & (d2 <= 0)] = a
    return out


def _segment_segment_dist(p1, q1, p2, q2):
    """Distance between segments p1q1 (fixed) and rows of p2/q2 (Ericson 5.1.9)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = r @ d1
    b = d2 @ d1
    eps = 1e-18
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > eps, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        if a <= eps:
            s = np.zeros_like(e)
        t = np.where(e > eps, (b * s + f) / e, 0.0)
        s = np.where(t < 0, np.clip(-c / a, 0, 1) if a > eps else 0.0, s)
        s = np.where(t > 1, np.clip((b - c) / a, 0, 1) if a > eps else 0.0, s)
    t = np.clip(t, 0.0, 1.0)
    c1 = p1 + s[:, None] * d1
    c2 = p2 + t[:, None] * d2
    return np.linalg.norm(c1 - c2, axis=1)


_BOX_EDGES = [(i, j) for i in range(8) for j in range(i + 1, 8) if bin(i ^ j).count("1") == 1]


def _tri_box_distance(v0, v1, v2, lo, hi):
    """Exact distance from a triangle to each box [lo_i, hi_i] (boxes assumed disjoint from it)."""
    best = np.full(len(lo), np.inf)
    for v in (v0, v1, v2):
        gap = np.maximum(np.maximum(lo - v, v - hi), 0.0)
        best = np.minimum(best, np.linalg.norm(gap, axis=1))
    corners = [np.where(np.array([(i >> 2) & 1, (i >> 1) & 1, i & 1], dtype=bool), hi, lo) for i in range(8)]
    for c in corners:
        best = np.minimum(best, np.linalg.norm(c - _closest_on_triangle(c, v0, v1, v2), axis=1))
    for e0, e1 in ((v0, v1), (v1, v2), (v2, v0)):
        for i, j in _BOX_EDGES:
            best = np.minimum(best, _segment_segment_dist(e0, e1, corners[i], corners[j]))
    return best


def _candidate_cells(origin, h, dims, lo, hi):
    i0 = np.clip(np.floor((lo - origin) / h).astype(int) - 1, 0, np.asarray(dims) - 1)
    i1 = np.clip(np.floor((hi - origin) / h).astype(int) + 1, 0, np.asarray(dims) - 1)
    rng = [np.arange(i0[k], i1[k] + 1) for k in range(3)]
    return np.stack(np.meshgrid(*rng, indexing="ij"), axis=-1).reshape(-1, 3)


def build_occupancy(scene: Scene, cell_size: float, robot_radius: float = 0.0,
                    max_cells: int = DEFAULT_MAX_CELLS) -> OccupancyGrid:
    """Voxelize the scene.

    A cell is occupied iff some triangle (or, for point clouds, some point)
    lies within ``robot_radius`` of the cell's closed box. The grid spans
    the scene bbox padded by ``robot_radius + cell_size`` on every side.
    """
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    if robot_radius < 0:
        raise ValueError("robot_radius must be non-negative")
    h = float(cell_size)
    r = float(robot_radius)
    pad = r + h
    origin = scene.bbox.min - pad
    span = scene.bbox.size + 2 * pad
    dims = tuple(max(1, int(math.ceil(s / h - 1e-9))) for s in span)
    total = dims[0] * dims[1] * dims[2]
    if total > max_cells:
        raise ResolutionError(f"grid of {dims} = {total} cells exceeds cap {max_cells}; raise cell_size")
    occ = np.zeros(dims, dtype=bool)
    half = 0.5 * h
    tol = 1e-9 * h

    if scene.triangles is None:
        pts = scene.vertices
        reach = int(math.ceil(r / h)) + 1
        base = np.floor((pts - origin) / h).astype(np.int64)
        for off in product(range(-reach, reach + 1), repeat=3):
            idx = base + np.asarray(off)
            ok = np.all((idx >= 0) & (idx < np.asarray(dims)), axis=1)
            lo = origin + h * idx[ok]
            gap = np.maximum(np.maximum(lo - pts[ok], pts[ok] - (lo + h)), 0.0)
            near = np.linalg.norm(gap, axis=1) <= r + tol
            sel = idx[ok][near]
            occ[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    else:
        V = scene.vertices
        for tri in scene.triangles:
            v0, v1, v2 = V[tri[0]], V[tri[1]], V[tri[2]]
            tlo = np.minimum(np.minimum(v0, v1), v2) - r
            thi = np.maximum(np.maximum(v0, v1), v2) + r
            cells = _candidate_cells(origin, h, dims, tlo, thi)
            cells = cells[~occ[cells[:, 0], cells[:, 1], cells[:, 2]]]
            if len(cells) == 0:
                continue
            centers = origin + h * (cells + 0.5)
            hit = _tri_box_overlap(v0, v1, v2, centers, half, tol)
            if r > 0:
                maybe = ~hit & _tri_box_overlap(v0, v1, v2, centers, half + r, tol)
                if maybe.any():
                    c = centers[maybe]
                    dist = _tri_box_distance(v0, v1, v2, c - half, c + half)
                    sub = np.flatnonzero(maybe)[dist <= r + tol]
                    hit[sub] = True
            sel = cells[hit]
            occ[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    occ.setflags(write=False)
    return OccupancyGrid(origin=origin, cell_size=h, dims=dims, occupied=occ)
