import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inspectplan.bezier import CompositeBezier
from inspectplan.errors import MetricError, SingularityError
from inspectplan.metrics import (TrajectoryMetrics, arc_length, curvature_at, integrated_jerk, mean_curvature,
                                 trajectory_metrics)
from inspectplan.smoothing import AnnotatedPolyline
from oracles import quintic_hermite_segments


def straight_line():
    # integer-spaced collinear controls: every derivative is exactly parallel to x
    segs = [np.array([[k * 5 + i, 0, 0] for i in range(6)], dtype=float) for k in range(3)]
    return CompositeBezier(segs, [1.0, 2.0, 0.5])


def circle(R, n=16, turns=1.0):
    f = lambda t: np.array([R * math.cos(t), R * math.sin(t), 0.0])
    df = lambda t: np.array([-R * math.sin(t), R * math.cos(t), 0.0])
    ddf = lambda t: -f(t)
    segs, durs = quintic_hermite_segments(f, df, ddf, np.linspace(0, 2 * math.pi * turns, n + 1))
    return CompositeBezier(segs, durs)


def helix(r, c, n=32):
    f = lambda t: np.array([r * math.cos(t), r * math.sin(t), c * t])
    df = lambda t: np.array([-r * math.sin(t), r * math.cos(t), c])
    ddf = lambda t: np.array([-r * math.cos(t), -r * math.sin(t), 0.0])
    segs, durs = quintic_hermite_segments(f, df, ddf, np.linspace(0, 4 * math.pi, n + 1))
    return CompositeBezier(segs, durs)


def test_straight_line_is_exactly_flat():
    c = straight_line()
    assert mean_curvature(c) == (0.0, 0)
    assert integrated_jerk(c) == 0.0


@pytest.mark.parametrize("R", [0.5, 2.0, 7.0])
def test_circle_curvature(R):
    kappa, skipped = mean_curvature(circle(R))
    assert kappa == pytest.approx(1 / R, abs=1e-3)
    assert skipped == 0
    assert curvature_at(circle(R), 0.3) == pytest.approx(1 / R, abs=1e-3)


@pytest.mark.parametrize("r,c", [(1.5, 0.4), (1.0, 1.0), (3.0, 0.2)])
def test_helix_curvature(r, c):
    assert mean_curvature(helix(r, c))[0] == pytest.approx(r / (r * r + c * c), abs=1e-3)


def test_circle_jerk_and_length():
    # unit angular rate: |jerk| = R everywhere, length = 2 pi R
    R = 2.0
    c = circle(R)
    assert integrated_jerk(c) == pytest.approx(2 * math.pi * R, rel=1e-4)
    assert arc_length(c) == pytest.approx(2 * math.pi * R, rel=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 10.0))
def test_jerk_duration_scaling(seed, s):
    rng = np.random.default_rng(seed)
    c = CompositeBezier([rng.normal(size=(6, 3)) for _ in range(3)], rng.uniform(0.5, 2.0, 3))
    scaled = CompositeBezier(c.segments, c.durations * s)
    assert integrated_jerk(scaled) == pytest.approx(integrated_jerk(c) / s ** 2, rel=1e-6)


def test_low_degree_has_no_jerk():
    c = CompositeBezier([np.array([[0, 0, 0], [1, 1, 0], [2, 0, 0]], dtype=float)], [1.0])
    assert integrated_jerk(c) == 0.0


def test_stationary_curve():
    c = CompositeBezier([np.zeros((6, 3))], [1.0])
    with pytest.raises(MetricError):
        mean_curvature(c)
    with pytest.raises(SingularityError):
        curvature_at(c, 0.5)


def test_cusp_samples_are_skipped():
    # the speed vanishes only at the shared joint, which the uniform grid hits exactly
    a = np.array([[0, 0, 0], [0.4, 0, 0], [0.7, 0, 0], [0.9, 0, 0], [1, 0, 0], [1, 0, 0]], dtype=float)
    b = np.array([[1, 0, 0], [1, 0, 0], [1, 0.1, 0], [1, 0.3, 0], [1, 0.6, 0], [1, 1, 0]], dtype=float)
    _, skipped = mean_curvature(CompositeBezier([a, b], [1.0, 1.0]), samples=201)
    assert skipped == 1


def test_trajectory_metrics_bundle():
    c = straight_line()
    poly = AnnotatedPolyline(np.array([[0, 0, 0], [5, 0, 0], [10, 0, 0], [15, 0, 0]], dtype=float))
    m = trajectory_metrics(poly, c)
    assert (m.steps, m.mean_curvature, m.jerk) == (3, 0.0, 0.0)
    assert m.distance == pytest.approx(15.0)
    assert set(m.to_json()) == {"mean_curvature", "jerk", "steps", "distance", "skipped_samples"}
    with pytest.raises(ValueError):
        TrajectoryMetrics(float("nan"), 0.0, 1, 1.0)
