import numpy as np
import pytest
import scipy.linalg

from inspectplan.bezier import CompositeBezier
from inspectplan.errors import ConditioningError, DomainError, OrientationError, SubdivisionError
from inspectplan.oracle import Poi, SpatialRelation, TaskSpec
from inspectplan.pipeline import continuity_mismatch
from inspectplan.scene import Aabb
from inspectplan.smoothing import AnnotatedPolyline
from inspectplan.spline import (OrientationProfile, adaptive_subdivide, curve_collisions, eval_orientation,
                                interpolate_composite, minimize_snap, refocus_directions, snap_integral,
                                snap_objective, waypoint_joint_scale)
from oracles import make_grid

NODES = np.array([[0, 0, 0], [1.0, 0.2, 0], [1.8, 1.0, 0.3], [2.1, 2.0, 0.1], [3.0, 2.4, 0.5], [3.2, 3.3, 0.4]])


def test_interpolation_traces_polyline():
    c = interpolate_composite(NODES, 5, speed=2.0)
    np.testing.assert_allclose(c.joints, NODES)
    np.testing.assert_allclose(c.durations, np.linalg.norm(np.diff(NODES, axis=0), axis=1) / 2.0)
    t = np.linspace(0, c.total_duration, 50)
    np.testing.assert_allclose(np.linalg.norm(c.derivative(t, 1), axis=1), 2.0)
    with pytest.raises(ValueError):
        interpolate_composite(NODES[[0, 0]], 5)


def test_snap_integral_vs_riemann():
    rng = np.random.default_rng(0)
    for d in (4, 5, 7):
        c = CompositeBezier([rng.normal(size=(d + 1, 3)) for _ in range(3)], [0.7, 1.3, 0.9])
        total = 0.0
        for k in range(3):
            t = np.linspace(c.knots[k], c.knots[k + 1], 20001)
            tm = 0.5 * (t[1:] + t[:-1])
            total += float((np.sum(c.derivative(tm, 4) ** 2, axis=1) * np.diff(t)).sum())
        assert snap_integral(c) == pytest.approx(total, rel=1e-6)


def _solve(lam=10.0, ctrl_weight=1e-3, joint_scale=None):
    seed = interpolate_composite(NODES, 5)
    out, info = minimize_snap(seed, NODES, lam, ctrl_weight, return_info=True, joint_scale=joint_scale)
    return seed, out, info


def test_minimize_snap_constraints_and_residual():
    seed, out, info = _solve()
    np.testing.assert_allclose(out.segments[0][0], NODES[0], atol=1e-12)
    np.testing.assert_allclose(out.segments[-1][-1], NODES[-1], atol=1e-12)
    assert max(continuity_mismatch(out)) < 1e-9
    assert info.kkt_residual < 1e-12
    # a feasible start (the optimum itself, as seed and anchor) cannot be improved on
    again, info2 = minimize_snap(out, NODES, return_info=True)
    assert info2.objective_after <= info2.objective_before * (1 + 1e-9)
    assert snap_integral(out) < snap_integral(seed)
    np.testing.assert_array_equal(out.durations, seed.durations)


def test_finite_difference_probes_increase_objective():
    seed, out, info = _solve()
    A = info.constraint_matrix
    null = scipy.linalg.null_space(A)
    x = np.vstack(out.segments)
    n1 = 6

    def f(xx):
        c = CompositeBezier([xx[k * n1:(k + 1) * n1] for k in range(len(seed.segments))], seed.durations)
        return snap_objective(c, NODES, 10.0, 1e-3, anchor=seed)

    base = f(x)
    eps = 1e-3
    for j in range(null.shape[1]):
        for axis in range(3):
            for sign in (1, -1):
                dx = np.zeros_like(x)
                dx[:, axis] = sign * eps * null[:, j]
                assert f(x + dx) > base


def test_node_pull_grows_with_lambda():
    dev = []
    for lam in (0.1, 10.0, 1000.0):
        _, out, _ = _solve(lam)
        dev.append(np.linalg.norm(out.joints[1:-1] - NODES[1:-1]))
    assert dev[0] > dev[1] > dev[2]


def test_joint_scale_pins_one_joint():
    _, plain, _ = _solve()
    scale = np.ones(len(NODES))
    scale[2] = 1e4
    _, pinned, _ = _solve(joint_scale=scale)
    assert np.linalg.norm(pinned.joints[2] - NODES[2]) < 0.1 * np.linalg.norm(plain.joints[2] - NODES[2])


def test_singular_and_invalid_inputs():
    seed = interpolate_composite(NODES, 5)
    with pytest.raises(ConditioningError):
        minimize_snap(seed, NODES, lam=0.0, ctrl_weight=0.0)
    with pytest.raises(ValueError):
        minimize_snap(interpolate_composite(NODES, 4), NODES)
    with pytest.raises(ValueError):
        minimize_snap(seed, NODES[:-1])
    with pytest.raises(ValueError):
        minimize_snap(seed, NODES, joint_scale=[1, 2])


def test_uneven_durations_stay_continuous():
    nodes = np.array([[0, 0, 0], [0.05, 0, 0], [3, 0.2, 0], [3.1, 2, 0], [8, 2.5, 1]], dtype=float)
    seed = interpolate_composite(nodes, 5)
    out, info = minimize_snap(seed, nodes, return_info=True)
    assert max(continuity_mismatch(out)) < 1e-6
    assert info.kkt_residual < 1e-8


def corner_grid():
    occ = np.zeros((24, 24, 6), dtype=bool)
    occ[3:, 3:, :] = True  # an L-shaped free region: x < 0.75 or y < 0.75
    return make_grid(occ, cell_size=0.25)


def test_adaptive_subdivision_clears_corner():
    grid = corner_grid()
    pts = np.array([[0.5, 5.5, 0.75], [0.5, 0.5, 0.75], [5.5, 0.5, 0.75]])
    poly = AnnotatedPolyline(pts, [(0,), (), (1,)])
    curve = minimize_snap(interpolate_composite(pts, 5), pts, lam=1e-3)
    assert curve_collisions(curve, grid)
    curve, refined, rounds = adaptive_subdivide(curve, poly, grid, lam=1e-3)
    assert rounds >= 1 and not curve_collisions(curve, grid)
    assert len(refined) == len(curve.segments) + 1
    assert refined.waypoint_pois[0] == (0,) and refined.waypoint_pois[-1] == (1,)


def test_subdivision_gives_up():
    grid = corner_grid()
    pts = np.array([[0.5, 5.5, 0.75], [0.5, 0.5, 0.75], [5.5, 0.5, 0.75]])
    curve = minimize_snap(interpolate_composite(pts, 5), pts, lam=1e-6)
    assert curve_collisions(curve, grid)
    with pytest.raises(SubdivisionError) as err:
        adaptive_subdivide(curve, AnnotatedPolyline(pts), grid, max_rounds=0, lam=1e-6)
    assert err.value.exit_code == 4


def test_waypoint_joint_scale():
    poly = AnnotatedPolyline(NODES[:3], [(0,), (), (1, 2)])
    assert waypoint_joint_scale(poly, {}) is None
    np.testing.assert_array_equal(waypoint_joint_scale(poly, {(1, 2): 100.0}), [1, 1, 100])


def test_orientation_profile():
    task = TaskSpec(unordered=[Poi("a", SpatialRelation.ARBITRARY, Aabb([0, 3, 0], [1, 4, 1])),
                               Poi("b", SpatialRelation.ARBITRARY, Aabb([5, 0, 0], [6, 1, 1]))])
    nodes = np.array([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [2.5, 0.5, 0.5], [3.5, 0.5, 0.5]])
    poly = AnnotatedPolyline(nodes, [(0,), (), (), (1,)])
    prof = refocus_directions(nodes, poly, task)
    np.testing.assert_allclose(prof.node_directions[0], [0, 1, 0])
    np.testing.assert_allclose(prof.node_directions[3], [1, 0, 0])
    curve = interpolate_composite(nodes, 5)
    for t in np.linspace(0, curve.total_duration, 31):
        assert np.linalg.norm(eval_orientation(prof, curve, t)) == pytest.approx(1.0)
    for k, t in enumerate(curve.knots):
        np.testing.assert_allclose(eval_orientation(prof, curve, t), prof.node_directions[k], atol=1e-9)
    with pytest.raises(DomainError):
        eval_orientation(prof, curve, -1.0)
    with pytest.raises(ValueError):
        OrientationProfile([[2.0, 0, 0]])


def test_antipodal_waypoints_cannot_be_blended():
    task = TaskSpec(unordered=[Poi("a", SpatialRelation.ARBITRARY, Aabb([0, 3, 0], [1, 4, 1])),
                               Poi("b", SpatialRelation.ARBITRARY, Aabb([2, -3, 0], [3, -2, 1]))])
    nodes = np.array([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5], [2.5, 0.5, 0.5]])
    poly = AnnotatedPolyline(nodes, [(0,), (), (1,)])
    with pytest.raises(OrientationError):
        refocus_directions(nodes, poly, task)
