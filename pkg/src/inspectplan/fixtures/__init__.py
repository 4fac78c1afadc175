"""Synthetic indoor scenes and inspection tasks used by tests and demos.

Every scene is a closed shell (floor, ceiling, outer walls) so the grid's
outer margin is sealed off. Solid obstacles are filled with internal
slices spaced below the grid cell size, otherwise their hollow interiors
would show up as free pockets cut off from the rest of the roadmap.

Run ``python -m inspectplan.fixtures`` to rewrite the bundled files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parent / "data"
SCENES = ("two_room", "pillars", "l_corridor", "warehouse", "courtyard")


class MeshBuilder:
    def __init__(self):
        self.vertices = []
        self.faces = []

    def quad(self, a, b, c, d):
        base = len(self.vertices) + 1
        self.vertices += [a, b, c, d]
        self.faces.append((base, base + 1, base + 2, base + 3))

    def rect(self, axis, level, lo, hi):
        """Axis-aligned rectangle at coordinate ``level`` on ``axis``; lo/hi span the other two."""
        u, v = [k for k in range(3) if k != axis]
        corners = []
        for cu, cv in ((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])):
            p = [0.0, 0.0, 0.0]
            p[axis], p[u], p[v] = level, cu, cv
            corners.append(p)
        self.quad(*corners)

    def box(self, lo, hi, fill_step=None):
        """Box surface; with ``fill_step`` also internal slices along every axis."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        for axis in range(3):
            u, v = [k for k in range(3) if k != axis]
            levels = [lo[axis], hi[axis]]
            if fill_step:
                n = int(np.ceil((hi[axis] - lo[axis]) / fill_step))
                levels = list(np.linspace(lo[axis], hi[axis], n + 1))
            for lev in levels:
                self.rect(axis, float(lev), (lo[u], lo[v]), (hi[u], hi[v]))

    def wall(self, axis, level, lo, hi, holes=()):
        """Wall plane with rectangular openings (each (lo, hi) in the plane's two coords).

        The wall is cut into vertical strips between openings, and the
        strips above and below each opening.
        """
        holes = sorted(holes)
        u0 = lo[0]
        for (hlo, hhi) in holes:
            if hlo[0] > u0:
                self.rect(axis, level, (u0, lo[1]), (hlo[0], hi[1]))
            if hlo[1] > lo[1]:
                self.rect(axis, level, (hlo[0], lo[1]), (hhi[0], hlo[1]))
            if hhi[1] < hi[1]:
                self.rect(axis, level, (hlo[0], hhi[1]), (hhi[0], hi[1]))
            u0 = hhi[0]
        if u0 < hi[0]:
            self.rect(axis, level, (u0, lo[1]), (hi[0], hi[1]))

    def shell(self, size):
        sx, sy, sz = size
        self.rect(2, 0.0, (0, 0), (sx, sy))
        self.rect(2, sz, (0, 0), (sx, sy))
        self.rect(0, 0.0, (0, 0), (sy, sz))
        self.rect(0, sx, (0, 0), (sy, sz))
        self.rect(1, 0.0, (0, 0), (sx, sz))
        self.rect(1, sy, (0, 0), (sx, sz))

    def to_obj(self, title: str) -> str:
        lines = [f"# {title}"]
        lines += ["v {} {} {}".format(*(_fmt(c) for c in p)) for p in self.vertices]
        lines += ["f {} {} {} {}".format(*f) for f in self.faces]
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def _poi(name, relation, lo, hi, front_axis=None, visible_range=None):
    doc = {"name": name, "relation": relation, "aabb": {"min": list(lo), "max": list(hi)}}
    if front_axis is not None:
        doc["front_axis"] = list(front_axis)
    if visible_range is not None:
        doc["visible_range"] = visible_range
    return doc


FILL = 0.08  # below every fixture's cell size


def two_room():
    m = MeshBuilder()
    m.shell((10, 6, 3))
    m.wall(0, 5.0, (0, 0), (6, 3), holes=[((2.4, 0.0), (3.6, 2.3))])
    m.box((2.35, 1.35, 0.0), (2.65, 1.65, 1.4), FILL)   # plinth with a sculpture on it
    task = {
        "ordered": [],
        "unordered": [
            _poi("sculpture", "around", (2.0, 1.0, 0.5), (3.0, 2.0, 1.8), visible_range=2.5),
            _poi("storage", "inside", (6.8, 3.4, 0.6), (9.4, 5.5, 2.4)),
        ],
    }
    return m, {"task": task}


def pillars():
    m = MeshBuilder()
    m.shell((12, 12, 4))
    for x in (3.0, 6.0, 9.0):
        for y in (3.0, 6.0, 9.0):
            if (x, y) != (6.0, 6.0):
                m.box((x - 0.3, y - 0.3, 0.0), (x + 0.3, y + 0.3, 4.0), FILL)
    m.box((4.7, 4.7, 0.0), (7.3, 7.3, 0.6), FILL)          # low platform in the middle
    task = {
        "ordered": [
            _poi("gauge", "in_front", (9.4, 2.3, 1.0), (9.7, 3.7, 2.4), front_axis=(1, 0, 0)),
            _poi("vent", "arbitrary", (0.8, 9.8, 3.4), (2.2, 11.2, 3.8)),
        ],
        "unordered": [
            _poi("platform", "over", (4.7, 4.7, 0.7), (7.3, 7.3, 0.9)),
        ],
    }
    return m, {"task": task}


def l_corridor():
    m = MeshBuilder()
    m.shell((10, 10, 3))
    m.box((2.5, 2.5, 0.0), (10.0, 10.0, 3.0), FILL)       # solid block leaves an L of free space
    task = {
        "ordered": [
            _poi("valve", "in_front", (9.0, 0.8, 0.8), (9.6, 1.7, 1.8), front_axis=(-1, 0, 0)),
            _poi("junction_box", "around", (0.3, 0.3, 1.4), (1.3, 1.3, 2.4)),
            _poi("hatch", "in_front", (0.8, 9.0, 0.8), (1.7, 9.6, 1.8), front_axis=(0, -1, 0)),
        ],
        "unordered": [],
    }
    return m, {"task": task}


def warehouse():
    m = MeshBuilder()
    m.shell((16, 10, 5))
    for x in (4.0, 8.0, 12.0):
        m.box((x - 0.5, 2.0, 0.0), (x + 0.5, 8.0, 3.0), FILL)   # shelving rows
    m.box((13.0, 0.3, 0.0), (15.7, 2.3, 0.4), FILL)             # pallet
    task = {
        "ordered": [
            _poi("dock_door", "in_front", (0.3, 4.0, 0.5), (0.6, 6.0, 2.5), front_axis=(1, 0, 0)),
            _poi("shelf_label", "in_front", (8.6, 4.2, 1.0), (8.9, 5.8, 2.2), front_axis=(1, 0, 0)),
        ],
        "unordered": [
            _poi("pallet", "over", (13.0, 0.3, 0.5), (15.7, 2.3, 0.7)),
            _poi("skylight", "arbitrary", (6.0, 0.5, 4.5), (8.0, 1.5, 4.8)),
        ],
    }
    return m, {"task": task}


def courtyard():
    m = MeshBuilder()
    m.shell((14, 14, 4))
    m.box((5.5, 5.5, 0.0), (8.5, 8.5, 1.0), FILL)          # fountain basin
    for c in ((3.0, 3.0), (11.0, 3.0), (3.0, 11.0), (11.0, 11.0)):
        m.box((c[0] - 0.25, c[1] - 0.25, 0.0), (c[0] + 0.25, c[1] + 0.25, 4.0), FILL)
    task = {
        "ordered": [
            _poi("gate", "in_front", (6.0, 0.3, 0.5), (8.0, 0.6, 2.5), front_axis=(0, 1, 0)),
        ],
        "unordered": [
            _poi("fountain", "over", (5.5, 5.5, 1.1), (8.5, 8.5, 1.3)),
            _poi("lantern", "around", (10.3, 10.3, 2.6), (11.7, 11.7, 3.5)),
            _poi("bench", "arbitrary", (1.0, 6.0, 0.3), (2.0, 8.0, 0.9)),
        ],
    }
    return m, {"task": task}


def extra_tasks() -> dict:
    """Tasks that exercise failure paths on the two-room scene."""
    return {
        "two_room_unreachable": {
            "ordered": [],
            "unordered": [_poi("vault", "inside", (2.4, 1.4, 0.2), (2.6, 1.6, 1.2))],
        },
        "two_room_behind": {
            "ordered": [],
            "unordered": [_poi("sculpture", "behind", (2.0, 1.0, 0.5), (3.0, 2.0, 1.8))],
        },
    }


def build_all(out: Path = DATA) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in SCENES:
        mesh, docs = globals()[name]()
        scene = out / f"{name}.obj"
        scene.write_text(mesh.to_obj(name))
        task = out / f"{name}.task.json"
        task.write_text(json.dumps(docs["task"], indent=2) + "\n")
        written += [scene, task]
    for name, doc in extra_tasks().items():
        path = out / f"{name}.task.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        written.append(path)
    return written


def scene_path(name: str) -> Path:
    return DATA / f"{name}.obj"


def task_path(name: str) -> Path:
    return DATA / f"{name}.task.json"
