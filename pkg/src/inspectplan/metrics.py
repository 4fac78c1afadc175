"""Smoothness and efficiency measures of a finished trajectory."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bezier import CompositeBezier, bernstein, hodograph
from .errors import MetricError, SingularityError
from .smoothing import AnnotatedPolyline

SPEED_EPS = 1e-9


@dataclass(frozen=True)
class TrajectoryMetrics:
    mean_curvature: float  # 1/m, time-uniform mean
    jerk: float            # integral of |third derivative| over time
    steps: int
    distance: float        # m
    skipped_samples: int = 0

    def __post_init__(self):
        for name in ("mean_curvature", "jerk", "distance"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.steps < 0 or self.skipped_samples < 0:
            raise ValueError("counts must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)


def _curvature(vel, acc):
    speed = np.linalg.norm(vel, axis=-1)
    return np.linalg.norm(np.cross(vel, acc), axis=-1) / np.where(speed > 0, speed, 1.0) ** 3, speed


def curvature_at(curve: CompositeBezier, t: float) -> float:
    vel = curve.derivative(float(t), 1)
    acc = curve.derivative(float(t), 2)
    kappa, speed = _curvature(vel, acc)
    if speed <= SPEED_EPS:
        raise SingularityError(f"speed {float(speed):.3g} at t={t} is too small for curvature")
    return float(kappa)


def mean_curvature(curve: CompositeBezier, samples: int = 2000) -> tuple:
    """Mean curvature over uniformly spaced times; returns (mean, skipped).

    Samples where the speed vanishes are dropped and counted.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples")
    t = np.linspace(0.0, curve.total_duration, samples)
    kappa, speed = _curvature(curve.derivative(t, 1), curve.derivative(t, 2))
    ok = speed > SPEED_EPS
    if not ok.any():
        raise MetricError("curvature is undefined at every sample")
    return float(kappa[ok].mean()), int((~ok).sum())


def _per_segment_counts(curve: CompositeBezier, samples: int, floor: int = 2) -> np.ndarray:
    share = curve.durations / curve.total_duration * samples
    return np.maximum(floor, np.round(share).astype(int))


def integrated_jerk(curve: CompositeBezier, samples: int = 2000) -> float:
    """Trapezoid rule on each segment separately (jerk jumps at joints)."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if curve.degree < 3:
        return 0.0
    total = 0.0
    for k, m in enumerate(_per_segment_counts(curve, samples)):
        s = np.linspace(0.0, 1.0, m)
        ctrl = curve.segments[k]
        jerk = bernstein(len(ctrl) - 4, s) @ (hodograph(ctrl, 3) / curve.durations[k] ** 3)
        mag = np.linalg.norm(jerk, axis=1)
        total += float(np.trapezoid(mag, s * curve.durations[k]))
    return total


def arc_length(curve: CompositeBezier, samples: int = 2000) -> float:
    """Chordal length of a dense sampling, at least 32 points per segment."""
    total = 0.0
    for k, m in enumerate(_per_segment_counts(curve, samples, floor=32)):
        pts = bernstein(curve.degree, np.linspace(0.0, 1.0, m)) @ curve.segments[k]
        total += float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
    return total


def steps_and_distance(poly: AnnotatedPolyline, curve: CompositeBezier, samples: int = 2000) -> tuple:
    return len(poly) - 1, arc_length(curve, samples)


def trajectory_metrics(poly: AnnotatedPolyline, curve: CompositeBezier, samples: int = 2000) -> TrajectoryMetrics:
    kappa, skipped = mean_curvature(curve, samples)
    steps, dist = steps_and_distance(poly, curve, samples)
    return TrajectoryMetrics(kappa, integrated_jerk(curve, samples), steps, dist, skipped)
