"""Continuous trajectory generation: minimum-snap composite Bezier curves.

The curve has one segment per polyline span. Control points are the
unknowns of an equality-constrained quadratic program: integrated squared
snap plus soft pulls of the joint control points toward the polyline
nodes, with the trajectory ends pinned and C2 continuity at every joint.

Penalty weights are divided by the local duration to the 7th power, the
same time scaling as the snap integral, so ``lam`` is dimensionless and
the balance between snap and node proximity does not drift as spans are
subdivided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .bezier import CompositeBezier, bernstein, slerp, spherical_blend
from .errors import ConditioningError, DomainError, OrientationError, SubdivisionError
from .oracle import TaskSpec, focus_target
from .scene import OccupancyGrid
from .smoothing import AnnotatedPolyline

PIVOT_RTOL = 1e-13


def interpolate_composite(nodes, degree: int = 5, speed: float = 1.0) -> CompositeBezier:
    """One segment per node pair, controls evenly spaced on the chord.

    The result traces the polyline exactly; durations give every segment
    the same constant speed.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    if len(nodes) < 2:
        raise ValueError("need at least 2 nodes")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if not speed > 0:
        raise ValueError("speed must be positive")
    f = np.linspace(0.0, 1.0, degree + 1)[:, None]
    segs = [(1 - f) * a + f * b for a, b in zip(nodes[:-1], nodes[1:])]
    chords = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    if np.any(chords <= 0):
        raise ValueError("consecutive nodes must be distinct")
    return CompositeBezier(segs, chords / speed)


@lru_cache(maxsize=None)
def _unit_snap_matrix(d: int) -> np.ndarray:
    """Q with  int_0^1 |B''''(s)|^2 ds = c^T Q c  for degree-d control vector c."""
    if d < 4:
        return np.zeros((d + 1, d + 1))
    m = d - 4
    gram = np.array([[math.comb(m, i) * math.comb(m, j) / (math.comb(2 * m, i + j) * (2 * m + 1))
                      for j in range(m + 1)] for i in range(m + 1)])
    diff4 = np.diff(np.eye(d + 1), n=4, axis=0)
    scale = float(math.perm(d, 4)) ** 2
    return scale * diff4.T @ gram @ diff4


def snap_integral(curve: CompositeBezier) -> float:
    """Integral over [0, T] of the squared snap norm, exact."""
    total = 0.0
    for ctrl, T in zip(curve.segments, curve.durations):
        Q = _unit_snap_matrix(len(ctrl) - 1)
        total += float(np.einsum("ia,ij,ja->", ctrl, Q, ctrl)) / T ** 7
    return total


def _joint_weights(durations, lam, joint_scale=None):
    tau = 0.5 * (durations[:-1] + durations[1:])
    w = lam / tau ** 7
    if joint_scale is not None:
        w = w * np.asarray(joint_scale, dtype=float)[1:-1]
    return w


def snap_objective(curve: CompositeBezier, nodes, lam: float, ctrl_weight: float = 0.0,
                   anchor: CompositeBezier | None = None, joint_scale=None) -> float:
    """Snap integral + weighted joint-to-node deviations (+ optional control anchoring)."""
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    value = snap_integral(curve)
    w = _joint_weights(curve.durations, lam, joint_scale)
    for j in range(1, len(curve.segments)):
        value += w[j - 1] * float(np.sum((curve.segments[j][0] - nodes[j]) ** 2))
    if anchor is not None and ctrl_weight > 0:
        for c, c0, T in zip(curve.segments, anchor.segments, curve.durations):
            value += ctrl_weight / T ** 7 * float(np.sum((c - c0) ** 2))
    return value


@dataclass
class SnapSolveInfo:
    objective_before: float
    objective_after: float
    kkt_residual: float
    min_pivot: float
    constraint_matrix: np.ndarray
    hessian: np.ndarray


def continuity_constraints(durations, degree: int):
    """Rows of the homogeneous C0/C1/C2 joint constraints (one per joint per order)."""
    K = len(durations)
    n1 = degree + 1
    rows = []
    for k in range(K - 1):
        a, b = k * n1, (k + 1) * n1
        T0, T1 = durations[k], durations[k + 1]
        r = np.zeros(K * n1)
        r[a + degree], r[b] = 1.0, -1.0
        rows.append(r)
        r = np.zeros(K * n1)
        r[a + degree] += T1
        r[a + degree - 1] -= T1
        r[b + 1] -= T0
        r[b] += T0
        rows.append(r / (T0 + T1))
        r = np.zeros(K * n1)
        r[a + degree] += T1 ** 2
        r[a + degree - 1] -= 2 * T1 ** 2
        r[a + degree - 2] += T1 ** 2
        r[b + 2] -= T0 ** 2
        r[b + 1] += 2 * T0 ** 2
        r[b] -= T0 ** 2
        rows.append(r / (T0 ** 2 + T1 ** 2))
    return np.array(rows).reshape(-1, K * n1)


def minimize_snap(curve: CompositeBezier, nodes, lam: float = 10.0, ctrl_weight: float = 1e-3,
                  return_info: bool = False, joint_scale=None):
    """Re-solve all control points for minimum snap.

    Minimizes ``snap_objective`` with the input curve as anchor, subject
    to: first/last control point equal to the first/last node, and C0, C1,
    C2 continuity (in time) at every joint. The input durations are kept.
    Solved through the KKT system of the quadratic program.

    ``joint_scale`` (one factor per node, ends ignored) multiplies the
    node pull at individual joints.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    d = curve.degree
    K = len(curve.segments)
    if d < 5:
        raise ValueError("minimum-snap optimization needs degree >= 5")
    if len(nodes) != K + 1:
        raise ValueError(f"{K} segments need {K + 1} nodes, got {len(nodes)}")
    if lam < 0 or ctrl_weight < 0:
        raise ValueError("penalty weights must be non-negative")
    if joint_scale is not None:
        joint_scale = np.asarray(joint_scale, dtype=float).reshape(-1)
        if len(joint_scale) != K + 1 or np.any(joint_scale < 0):
            raise ValueError("joint_scale needs one non-negative factor per node")
    T = curve.durations
    n1 = d + 1
    nv = K * n1
    x0 = np.vstack(curve.segments)

    # everything scales as duration^-7; normalizing by the median duration keeps entries O(1)
    t_ref = float(np.median(T))
    Tn = T / t_ref
    H = np.zeros((nv, nv))
    f = np.zeros((nv, 3))
    Qu = _unit_snap_matrix(d)
    for k in range(K):
        sl = slice(k * n1, (k + 1) * n1)
        H[sl, sl] += Qu / Tn[k] ** 7
        if ctrl_weight > 0:
            idx = np.arange(k * n1, (k + 1) * n1)
            H[idx, idx] += ctrl_weight / Tn[k] ** 7
            f[idx] += ctrl_weight / Tn[k] ** 7 * x0[idx]
    w = _joint_weights(Tn, lam, joint_scale)
    for j in range(1, K):
        i = j * n1
        H[i, i] += w[j - 1]
        f[i] += w[j - 1] * nodes[j]

    A_end = np.zeros((2, nv))
    A_end[0, 0] = 1.0
    A_end[1, nv - 1] = 1.0
    A = np.vstack([A_end, continuity_constraints(Tn, d)])
    b = np.zeros((len(A), 3))
    b[0], b[1] = nodes[0], nodes[-1]

    m = len(A)
    KKT = np.zeros((nv + m, nv + m))
    KKT[:nv, :nv] = H
    KKT[:nv, nv:] = A.T
    KKT[nv:, :nv] = A
    rhs = np.vstack([f, b])

    # symmetric Ruiz equilibration before factorizing
    scale = np.ones(nv + m)
    for _ in range(5):
        M = np.abs(KKT * scale[:, None] * scale[None, :]).max(axis=1)
        M[M == 0] = 1.0
        scale /= np.sqrt(M)
    Ks = KKT * scale[:, None] * scale[None, :]
    lu, piv = scipy.linalg.lu_factor(Ks, check_finite=False)
    pivots = np.abs(np.diag(lu))
    min_pivot = float(pivots.min())
    if not min_pivot > PIVOT_RTOL * pivots.max():
        raise ConditioningError(f"KKT system is singular (smallest pivot {min_pivot:.3e})")
    z = np.zeros_like(rhs)
    for _ in range(3):  # initial solve plus two refinement steps
        z += scale[:, None] * scipy.linalg.lu_solve((lu, piv), scale[:, None] * (rhs - KKT @ z),
                                                    check_finite=False)
    resid = np.linalg.norm(KKT @ z - rhs) / (np.linalg.norm(KKT) * np.linalg.norm(z) + np.linalg.norm(rhs))

    x = z[:nv]
    out = CompositeBezier([x[k * n1:(k + 1) * n1] for k in range(K)], T.copy())
    if not return_info:
        return out
    info = SnapSolveInfo(
        objective_before=snap_objective(curve, nodes, lam, ctrl_weight, anchor=curve, joint_scale=joint_scale),
        objective_after=snap_objective(out, nodes, lam, ctrl_weight, anchor=curve, joint_scale=joint_scale),
        kkt_residual=float(resid),
        min_pivot=min_pivot,
        constraint_matrix=A,
        hessian=H,
    )
    return out, info


def curve_collisions(curve: CompositeBezier, grid: OccupancyGrid, step: float | None = None) -> list:
    """(segment, local parameter, time) of every dense sample that is not free."""
    step = 0.5 * grid.cell_size if step is None else step
    hits = []
    knots = curve.knots
    for k in range(len(curve.segments)):
        s, pts = curve.segment_samples(k, step)
        bad = ~grid.points_free(pts)
        for si in s[bad]:
            hits.append((k, float(si), float(knots[k] + si * curve.durations[k])))
    return hits


def waypoint_joint_scale(poly: AnnotatedPolyline, waypoint_scale=None):
    """Per-node pull multipliers from a {POI-id tuple: factor} map; None if all ones."""
    if not waypoint_scale:
        return None
    return np.array([waypoint_scale.get(tag, 1.0) if tag else 1.0 for tag in poly.waypoint_pois])


def adaptive_subdivide(curve: CompositeBezier, poly: AnnotatedPolyline, grid: OccupancyGrid,
                       max_rounds: int = 8, lam: float = 10.0, ctrl_weight: float = 1e-3,
                       speed: float = 1.0, waypoint_scale=None):
    """Split offending spans until the optimized curve clears every occupied cell.

    Each round inserts the midpoint of every polyline span whose segment
    has a colliding sample, then re-interpolates and re-optimizes.
    Returns ``(curve, refined_polyline, rounds)``.
    """
    d = curve.degree
    for rnd in range(max_rounds + 1):
        hits = curve_collisions(curve, grid)
        if not hits:
            return curve, poly, rnd
        if rnd == max_rounds:
            worst = max(hits, key=lambda h: _clearance_deficit(curve, grid, h))
            raise SubdivisionError(f"curve still collides after {max_rounds} subdivision rounds "
                                   f"({len(hits)} samples; worst at t={worst[2]:.6g}, segment {worst[0]})")
        spans = sorted({h[0] for h in hits})
        pts, tags = [poly.points[0]], [poly.waypoint_pois[0]]
        for k in range(len(poly) - 1):
            if k in spans:
                pts.append(0.5 * (poly.points[k] + poly.points[k + 1]))
                tags.append(())
            pts.append(poly.points[k + 1])
            tags.append(poly.waypoint_pois[k + 1])
        poly = AnnotatedPolyline(np.array(pts), tags)
        seed = interpolate_composite(poly.points, d, speed)
        curve = minimize_snap(seed, poly.points, lam, ctrl_weight,
                              joint_scale=waypoint_joint_scale(poly, waypoint_scale))
    raise AssertionError("unreachable")  # pragma: no cover


def _clearance_deficit(curve, grid, hit):
    # distance from the sample to the nearest joint: a proxy for how far the curve strayed
    k, s, _ = hit
    p = bernstein(curve.degree, s) @ curve.segments[k]
    return float(min(np.linalg.norm(p - curve.segments[k][0]), np.linalg.norm(p - curve.segments[k][-1])))


# --------------------------------------------------------------------------
# camera orientation


@dataclass
class OrientationProfile:
    node_directions: np.ndarray  # (segments + 1, 3) unit vectors

    def __post_init__(self):
        self.node_directions = np.asarray(self.node_directions, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(self.node_directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("node directions must be unit vectors")

    def to_json(self) -> list:
        return self.node_directions.tolist()


def eval_orientation(profile: OrientationProfile, curve: CompositeBezier, t: float) -> np.ndarray:
    """Camera direction at time t.

    The active segment's two node directions are spread over its d+1
    control slots along the geodesic, then blended with the Bernstein
    weights at t.
    """
    T = curve.total_duration
    if not -1e-12 * max(1.0, T) <= t <= T * (1 + 1e-12):
        raise DomainError(f"t={t} outside [0, {T}]")
    k, s = curve.locate(float(t))
    k = int(k)
    d = len(curve.segments[k]) - 1
    a, b = profile.node_directions[k], profile.node_directions[k + 1]
    ctrl = np.array([slerp(a, b, j / d) for j in range(d + 1)])
    return spherical_blend(bernstein(d, float(s)), ctrl)


def refocus_directions(nodes, poly: AnnotatedPolyline, task: TaskSpec) -> OrientationProfile:
    """Point the camera at each waypoint's POI; connectors blend their neighbours.

    Connector directions mix the nearest preceding and following waypoint
    directions, weighted by inverse path distance along the nodes.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    if len(nodes) != len(poly):
        raise ValueError("nodes must align with the polyline")
    pois = task.pois
    dirs = np.zeros_like(nodes)
    way = [k for k in range(len(nodes)) if poly.waypoint_pois[k]]
    if not way:
        raise OrientationError("polyline has no waypoints to focus on")
    for k in way:
        toward = []
        for j in poly.waypoint_pois[k]:
            v = focus_target(pois[j]) - nodes[k]
            n = np.linalg.norm(v)
            if n < 1e-9:
                raise OrientationError(f"node {k} coincides with the focus target of {pois[j].name!r}")
            toward.append(v / n)
        dirs[k] = toward[0] if len(toward) == 1 else spherical_blend(np.ones(len(toward)), toward)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(nodes, axis=0), axis=1))])
    for k in range(len(nodes)):
        if poly.waypoint_pois[k]:
            continue
        before = [w for w in way if w < k]
        after = [w for w in way if w > k]
        if before and after:
            p, q = before[-1], after[0]
            wp, wq = 1.0 / (arc[k] - arc[p]), 1.0 / (arc[q] - arc[k])
            dirs[k] = spherical_blend([wp, wq], [dirs[p], dirs[q]])
        else:
            dirs[k] = dirs[before[-1] if before else after[0]]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return OrientationProfile(dirs)
