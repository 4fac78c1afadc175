"""Composite Bezier curves in Bernstein form, timed per segment."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, OrientationError


@lru_cache(maxsize=None)
def _binomials(d: int) -> np.ndarray:
    return np.array([math.comb(d, i) for i in range(d + 1)], dtype=float)


def bernstein(d: int, s) -> np.ndarray:
    """Bernstein basis of degree d at parameter(s) s; shape (..., d+1)."""
    s = np.asarray(s, dtype=float)
    i = np.arange(d + 1)
    return _binomials(d) * s[..., None] ** i * (1.0 - s[..., None]) ** (d - i)


def de_casteljau(ctrl, s: float) -> np.ndarray:
    pts = np.array(ctrl, dtype=float)
    for r in range(1, len(pts)):
        pts = (1.0 - s) * pts[:-1] + s * pts[1:]
    return pts[0]


def hodograph(ctrl, order: int = 1) -> np.ndarray:
    """Control points of the ``order``-th derivative w.r.t. the local parameter."""
    ctrl = np.asarray(ctrl, dtype=float)
    d = len(ctrl) - 1
    if order > d:
        return np.zeros((1,) + ctrl.shape[1:])
    return math.perm(d, order) * np.diff(ctrl, n=order, axis=0)


@dataclass
class CompositeBezier:
    segments: list       # per segment: (d+1, 3) control points
    durations: np.ndarray

    def __post_init__(self):
        self.segments = [np.asarray(c, dtype=float).reshape(-1, 3) for c in self.segments]
        self.durations = np.asarray(self.durations, dtype=float).reshape(-1)
        if len(self.segments) == 0 or len(self.segments) != len(self.durations):
            raise ValueError("need one duration per segment and at least one segment")
        if np.any(~(self.durations > 0)):
            raise ValueError("segment durations must be positive")

    @property
    def degree(self) -> int:
        degs = {len(c) - 1 for c in self.segments}
        if len(degs) != 1:
            raise ValueError("segments have mixed degree")
        return degs.pop()

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def joints(self) -> np.ndarray:
        """Start of every segment plus the final end point."""
        return np.array([c[0] for c in self.segments] + [self.segments[-1][-1]])

    def locate(self, t):
        """Segment index and local parameter for time(s) t (no domain check)."""
        knots = self.knots
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(self.segments) - 1)
        s = np.clip((t - knots[k]) / self.durations[k], 0.0, 1.0)
        return k, s

    def derivative(self, t, order: int = 0) -> np.ndarray:
        """Time derivative of the given order at time(s) t; shape (..., 3)."""
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        k, s = self.locate(flat)
        out = np.zeros((len(flat), 3))
        for seg in np.unique(k):
            m = k == seg
            ctrl = hodograph(self.segments[seg], order) / self.durations[seg] ** order
            out[m] = bernstein(len(ctrl) - 1, s[m]) @ ctrl
        return out.reshape(t.shape + (3,))

    def positions(self, t) -> np.ndarray:
        return self.derivative(t, 0)

    def segment_samples(self, k: int, step: float) -> tuple:
        """Parameters and points on segment k spaced at most ``step`` apart in space."""
        ctrl = self.segments[k]
        bound = float(np.linalg.norm(np.diff(ctrl, axis=0), axis=1).sum())
        m = max(2, int(math.ceil(bound / step)) + 1)
        s = np.linspace(0.0, 1.0, m)
        return s, bernstein(len(ctrl) - 1, s) @ ctrl

    def to_json(self) -> dict:
        return {"segments": [{"degree": len(c) - 1, "ctrl": c.tolist(), "duration": float(T)}
                             for c, T in zip(self.segments, self.durations)]}

    @classmethod
    def from_json(cls, doc: dict) -> "CompositeBezier":
        segs, durs = [], []
        for seg in doc["segments"]:
            ctrl = np.asarray(seg["ctrl"], dtype=float)
            if ctrl.shape != (int(seg["degree"]) + 1, 3):
                raise ValueError("control point count does not match degree")
            segs.append(ctrl)
            durs.append(float(seg["duration"]))
        return cls(segs, np.array(durs))


def eval_position(curve: CompositeBezier, t: float) -> np.ndarray:
    T = curve.total_duration
    if not -1e-12 * max(1.0, T) <= t <= T * (1 + 1e-12):
        raise DomainError(f"t={t} outside [0, {T}]")
    k, s = curve.locate(float(t))
    ctrl = curve.segments[int(k)]
    return bernstein(len(ctrl) - 1, float(s)) @ ctrl


# --------------------------------------------------------------------------
# directions on the unit sphere


def _log_map(q, v):
    c = float(np.clip(q @ v, -1.0, 1.0))
    perp = v - c * q
    n = np.linalg.norm(perp)
    if n < 1e-15:
        return np.zeros(3)
    return perp / n * math.acos(c)


def _exp_map(q, u):
    a = np.linalg.norm(u)
    if a < 1e-300:
        return q
    return math.cos(a) * q + math.sin(a) * u / a


def spherical_blend(weights, directions, iterations: int = 10) -> np.ndarray:
    """Weighted spherical mean of unit vectors.

    Starts from the normalized linear blend and refines by fixed-point
    steps in the tangent plane; for two directions this lands on the
    geodesic point slerp would give.
    """
    w = np.asarray(weights, dtype=float)
    dirs = np.asarray(directions, dtype=float).reshape(-1, 3)
    q = w @ dirs
    n = np.linalg.norm(q)
    if n < 1e-6:
        raise OrientationError("directions cancel out (antipodal blend)")
    q = q / n
    wsum = w.sum()
    for _ in range(iterations):
        u = sum(wi * _log_map(q, di) for wi, di in zip(w, dirs)) / wsum
        if np.linalg.norm(u) < 1e-15:
            break
        q = _exp_map(q, u)
        q /= np.linalg.norm(q)
    return q


def slerp(a, b, f: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.clip(a @ b, -1.0, 1.0))
    if c < -1 + 1e-12:
        raise OrientationError("cannot slerp between antipodal directions")
    omega = math.acos(c)
    if omega < 1e-12:
        return a.copy()
    return (math.sin((1 - f) * omega) * a + math.sin(f * omega) * b) / math.sin(omega)
