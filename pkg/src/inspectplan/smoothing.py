"""Polyline shortcutting and oracle-checked midpoint smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .oracle import TaskSpec, is_salient
from .scene import OccupancyGrid, segment_free


@dataclass
class AnnotatedPolyline:
    points: np.ndarray
    waypoint_pois: list = field(default_factory=list)  # per point: tuple of POI indices it must keep observing

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not self.waypoint_pois:
            self.waypoint_pois = [()] * len(self.points)
        self.waypoint_pois = [tuple(w) for w in self.waypoint_pois]
        if len(self.points) < 2:
            raise ValueError("a polyline needs at least 2 points")
        if len(self.waypoint_pois) != len(self.points):
            raise ValueError("one waypoint annotation per point is required")
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(gaps <= 1e-9):
            raise ValueError("consecutive polyline points must be distinct")

    def __len__(self):
        return len(self.points)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def is_waypoint(self, k: int) -> bool:
        return bool(self.waypoint_pois[k])

    def copy(self) -> "AnnotatedPolyline":
        return AnnotatedPolyline(self.points.copy(), list(self.waypoint_pois))


def turning_angle(v, vm, v2) -> float:
    """Deviation from a straight line at vm, in radians (0 = straight, pi = reversal)."""
    a = np.asarray(vm) - np.asarray(v)
    b = np.asarray(v2) - np.asarray(vm)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(a @ b))


def simplify(poly: AnnotatedPolyline, grid: OccupancyGrid) -> AnnotatedPolyline:
    """Greedy forward shortcutting that never drops a waypoint."""
    pts = poly.points
    n = len(pts)
    keep = [0]
    i = 0
    while i < n - 1:
        limit = i + 1
        while limit < n - 1 and not poly.is_waypoint(limit):
            limit += 1
        j = limit
        while j > i + 1 and not segment_free(grid, pts[i], pts[j]):
            j -= 1
        keep.append(j)
        i = j
    return AnnotatedPolyline(pts[keep].copy(), [poly.waypoint_pois[k] for k in keep])


def smooth(poly: AnnotatedPolyline, task: TaskSpec, oracle, grid: OccupancyGrid,
           alpha_min: float = 0.125, threshold: float = 0.5, epsilon: Optional[float] = None,
           max_passes: int = 1000, history: Optional[list] = None) -> AnnotatedPolyline:
    """Pull interior points toward their neighbours' midpoint, most-curved first.

    Each move is backtracked (alpha halved from 1 until below ``alpha_min``)
    until both new segments are collision-free and, for waypoints, the
    oracle still finds every attached POI salient. Connectors skip the
    oracle. Passes repeat until no point moves by more than ``epsilon``.

    ``history``, if given, receives one dict per accepted move
    (``kind="move"``) and per finished pass (``kind="pass"``).
    """
    if not 0 < alpha_min <= 1:
        raise ValueError("alpha_min must lie in (0, 1]")
    pts = poly.points.copy()
    tags = list(poly.waypoint_pois)
    pois = task.pois
    if epsilon is None:
        epsilon = 1e-6 * grid.extent.diagonal
    n = len(pts)

    def length():
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    for pass_no in range(1, max_passes + 1):
        angles = [(-turning_angle(pts[k - 1], pts[k], pts[k + 1]), k) for k in range(1, n - 1)]
        biggest = 0.0
        moves = 0
        for _, k in sorted(angles):
            v, cur, v2 = pts[k - 1], pts[k], pts[k + 1]
            mid = 0.5 * (v + v2)
            alpha = 1.0
            while alpha >= alpha_min:
                cand = alpha * mid + (1.0 - alpha) * cur
                if (np.linalg.norm(cand - v) > 1e-9 and np.linalg.norm(cand - v2) > 1e-9
                        and segment_free(grid, v, cand) and segment_free(grid, cand, v2)
                        and all(is_salient(oracle.assess(cand, pois[j]), threshold) for j in tags[k])):
                    step = float(np.linalg.norm(cand - cur))
                    pts[k] = cand
                    biggest = max(biggest, step)
                    moves += step > 0
                    if history is not None:
                        history.append({"kind": "move", "pass": pass_no, "index": k, "alpha": alpha,
                                        "length": length()})
                    break
                alpha *= 0.5
        if history is not None:
            history.append({"kind": "pass", "pass": pass_no, "length": length(), "max_move": biggest,
                            "moves": moves})
        if biggest <= epsilon:
            break
    return AnnotatedPolyline(pts, tags)
