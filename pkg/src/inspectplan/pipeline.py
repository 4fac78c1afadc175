"""End-to-end planning run, independent re-validation and trajectory export."""

from __future__ import annotations

import contextlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bezier import CompositeBezier, hodograph
from .config import PlannerConfig
from .errors import InputError, PlannerError
from .metrics import TrajectoryMetrics, trajectory_metrics
from .oracle import GeometricOracle, RemoteOracle, TaskSpec, compute_valid_sets, is_salient, load_task
from .routing import VisitationPlan, VisitationProblem, expand_path, solve_visitation
from .sampling import PrmGraph, build_prm, poisson_sparsify, sample_free
from .scene import OccupancyGrid, Scene, build_occupancy, load_scene
from .smoothing import AnnotatedPolyline, simplify, smooth
from .spline import (OrientationProfile, adaptive_subdivide, curve_collisions, eval_orientation,
                     interpolate_composite, minimize_snap, refocus_directions, waypoint_joint_scale)

SALIENCY_REPAIRS = 4
REPAIR_BOOST = 100.0


@contextlib.contextmanager
def stage(name: str):
    """Tag planner errors escaping the block with the stage they came from."""
    try:
        yield
    except PlannerError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (ValueError, ArithmeticError) as exc:
        err = PlannerError(f"{type(exc).__name__}: {exc}")
        err.stage = name
        raise err from exc


@dataclass
class Workspace:
    """Scene-derived state shared by planning and validation."""
    scene: Scene
    task: TaskSpec
    grid: OccupancyGrid       # inflated by the robot radius, for motion
    sight: OccupancyGrid      # uninflated, for line-of-sight tests
    oracle: object

    @property
    def diagonal(self) -> float:
        return self.scene.bbox.diagonal


def make_oracle(config: PlannerConfig, sight: OccupancyGrid):
    oc = config.oracle
    if oc.mode == "remote":
        return RemoteOracle(oc.url, timeout=oc.timeout, retries=oc.retries, backoff=oc.backoff,
                            max_in_flight=oc.max_in_flight)
    return GeometricOracle(sight, oc.omega_ref)


def open_workspace(scene_path, task_path, config: PlannerConfig, oracle=None) -> Workspace:
    with stage("scene"):
        scene = load_scene(scene_path)
        diag = scene.bbox.diagonal
        if not diag > 0:
            raise InputError("scene bounding box is degenerate")
    with stage("task"):
        task = load_task(task_path, diag)
    with stage("occupancy"):
        cell = config.grid.cell_fraction * diag
        grid = build_occupancy(scene, cell, config.grid.robot_radius, config.grid.max_cells)
        sight = grid if config.grid.robot_radius == 0 else build_occupancy(scene, cell, 0.0, config.grid.max_cells)
    if oracle is None:
        oracle = make_oracle(config, sight)
    return Workspace(scene, task, grid, sight, oracle)


@dataclass
class PlanResult:
    workspace: Workspace
    prm: PrmGraph
    valid: list
    plan: VisitationPlan
    route: AnnotatedPolyline      # roadmap polyline from the tour
    polyline: AnnotatedPolyline   # after shortcutting and smoothing
    refined: AnnotatedPolyline    # after collision subdivision
    curve: CompositeBezier
    profile: OrientationProfile
    metrics: TrajectoryMetrics
    smoothing_trace: list = field(default_factory=list)
    subdivision_rounds: int = 0
    repairs: int = 0


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def write_ply_polyline(path, points) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
             "property float x", "property float y", "property float z",
             f"element edge {max(len(pts) - 1, 0)}", "property int vertex1", "property int vertex2",
             "end_header"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in pts.tolist()]
    lines += [f"{k} {k + 1}" for k in range(len(pts) - 1)]
    Path(path).write_text("\n".join(lines) + "\n")


def _route_polyline(plan: VisitationPlan, prm: PrmGraph) -> AnnotatedPolyline:
    ids = list(plan.polyline)
    tags = list(plan.waypoint_pois)
    if len(ids) == 1:
        # a single stop observes every POI; add the nearest roadmap neighbour so there is motion
        adj = prm.adjacency()
        options = sorted((w, v) for v, w in adj[ids[0]] if w > 0)
        if not options:
            base = prm.nodes[ids[0]].clone_of
            options = sorted((w, v) for v, w in adj[base if base is not None else ids[0]] if w > 0)
        if not options:
            raise PlannerError("the only roadmap node has no neighbour to move to")
        ids.append(options[0][1])
        tags.append(())
    return AnnotatedPolyline(prm.positions[ids], tags)


def trajectory_document(curve: CompositeBezier, profile: OrientationProfile,
                        poly: AnnotatedPolyline, task: TaskSpec) -> dict:
    doc = curve.to_json()
    doc["directions"] = profile.to_json()
    doc["waypoints"] = [{"joint": k, "pois": list(tag)} for k, tag in enumerate(poly.waypoint_pois) if tag]
    doc["poi_names"] = [p.name for p in task.pois]
    return doc


def _optimize(poly, ws: Workspace, config: PlannerConfig):
    """Fit, subdivide until collision-free, then re-pin waypoints that lost saliency."""
    sc = config.spline
    boost = {}
    pois = ws.task.pois
    for attempt in range(SALIENCY_REPAIRS + 1):
        seed = interpolate_composite(poly.points, sc.degree, sc.speed)
        curve = minimize_snap(seed, poly.points, sc.lam, sc.ctrl_weight,
                              joint_scale=waypoint_joint_scale(poly, boost))
        curve, refined, rounds = adaptive_subdivide(curve, poly, ws.grid, sc.max_subdiv_rounds, sc.lam,
                                                     sc.ctrl_weight, sc.speed, waypoint_scale=boost)
        joints = curve.joints
        lost = [tag for k, tag in enumerate(refined.waypoint_pois)
                if tag and not all(is_salient(ws.oracle.assess(joints[k], pois[j]),
                                              config.oracle.saliency_threshold) for j in tag)]
        if not lost:
            return curve, refined, rounds, attempt
        for tag in lost:
            boost[tag] = boost.get(tag, 1.0) * REPAIR_BOOST
    names = sorted({pois[j].name for tag in lost for j in tag})
    raise PlannerError(f"optimized waypoints lose saliency for {names} after {SALIENCY_REPAIRS} repairs")


def plan(scene_path, task_path, config: PlannerConfig, out_dir=None, oracle=None,
         smoothing: bool = True) -> PlanResult:
    """Run every stage; with ``out_dir`` each artifact is written as soon as it exists.

    ``smoothing=False`` skips the midpoint smoothing passes (shortcutting
    still runs); it exists for ablation runs.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump(out / "config.json", config.to_json())
    ws = open_workspace(scene_path, task_path, config, oracle)
    diag = ws.diagonal
    task = ws.task

    with stage("sampling"):
        pts = sample_free(ws.grid, config.prm.samples, config.seed, region=ws.scene.bbox)
        pts = poisson_sparsify(pts, config.prm.poisson_fraction * diag)
        prm = build_prm(pts, ws.grid, config.prm.connect_radius_fraction * diag, config.prm.max_doublings)
    with stage("oracle"):
        prm, valid = compute_valid_sets(prm, task, ws.oracle, config.oracle.saliency_threshold)
    if out:
        _dump(out / "prm.json", prm.to_json())

    with stage("routing"):
        problem = VisitationProblem.from_prm(prm, valid)
        vplan = solve_visitation(problem, task.n_ordered)
        expand_path(vplan, problem.preds, prm)
        route = _route_polyline(vplan, prm)
    if out:
        doc = vplan.to_json([p.name for p in task.pois])
        doc["valid_counts"] = [len(v) for v in valid]
        _dump(out / "plan.json", doc)

    trace = []
    with stage("smoothing"):
        poly = simplify(route, ws.grid)
        if smoothing:
            poly = smooth(poly, task, ws.oracle, ws.grid, alpha_min=config.smoothing.alpha_min,
                          threshold=config.oracle.saliency_threshold,
                          epsilon=config.smoothing.epsilon_fraction * ws.grid.extent.diagonal,
                          max_passes=config.smoothing.max_passes, history=trace)
    if out:
        write_ply_polyline(out / "polyline.ply", poly.points)
        (out / "smoothing_trace.jsonl").write_text("".join(json.dumps(e) + "\n" for e in trace))

    with stage("spline"):
        curve, refined, rounds, repairs = _optimize(poly, ws, config)
        profile = refocus_directions(curve.joints, refined, task)
    if out:
        _dump(out / "trajectory.json", trajectory_document(curve, profile, refined, task))

    with stage("metrics"):
        metrics = trajectory_metrics(poly, curve, config.metrics.samples)
    if out:
        _dump(out / "metrics.json", metrics.to_json())
    return PlanResult(ws, prm, valid, vplan, route, poly, refined, curve, profile, metrics,
                      trace, rounds, repairs)


# --------------------------------------------------------------------------
# validation


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_json() for c in self.checks]}


def load_trajectory(path):
    try:
        doc = json.loads(Path(path).read_text())
        curve = CompositeBezier.from_json(doc)
    except OSError as exc:
        raise InputError(f"cannot read trajectory: {exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed trajectory file: {exc}") from None
    profile = None
    if doc.get("directions") is not None:
        try:
            profile = OrientationProfile(doc["directions"])
        except ValueError as exc:
            raise InputError(f"malformed directions: {exc}") from None
        if len(profile.node_directions) != len(curve.segments) + 1:
            raise InputError("need one direction per trajectory joint")
    return doc, curve, profile


def continuity_mismatch(curve: CompositeBezier) -> list:
    """Per order 0..2, the worst relative jump of one-sided derivatives over all joints."""
    worst = [0.0, 0.0, 0.0]
    segs, T = curve.segments, curve.durations
    for k in range(len(segs) - 1):
        for order in range(3):
            left = hodograph(segs[k], order)[-1] / T[k] ** order
            right = hodograph(segs[k + 1], order)[0] / T[k + 1] ** order
            scale = max(1.0, float(np.linalg.norm(left)), float(np.linalg.norm(right)))
            worst[order] = max(worst[order], float(np.linalg.norm(left - right)) / scale)
    return worst


def precedence_violations(passage: dict, n_ordered: int) -> list:
    """Pairs (i, i+1) of ordered POIs whose passage times run backwards.

    ``passage`` maps POI index to the time (or any monotone position) at
    which the trajectory observes it. Missing ordered POIs are ignored here.
    """
    seen = [j for j in range(n_ordered) if j in passage]
    return [(i, j) for i, j in zip(seen, seen[1:]) if passage[i] > passage[j]]


def validate(traj_path, scene_path, task_path, config: PlannerConfig, oracle=None,
             continuity_tol: float = 1e-6) -> ValidationReport:
    """Re-check a trajectory file against the scene and task from scratch."""
    doc, curve, _ = load_trajectory(traj_path)
    ws = open_workspace(scene_path, task_path, config, oracle)
    pois = ws.task.pois
    checks = []

    hits = curve_collisions(curve, ws.grid)
    checks.append(Check("collision", not hits,
                        "no occupied samples" if not hits else
                        f"{len(hits)} occupied samples, first at t={hits[0][2]:.6g}"))

    jumps = continuity_mismatch(curve)
    checks.append(Check("continuity", max(jumps) < continuity_tol,
                        "relative joint jumps C0={:.2e} C1={:.2e} C2={:.2e}".format(*jumps)))

    joints = curve.joints
    knots = curve.knots
    visit = {}
    for w in doc.get("waypoints", []):
        for j in w["pois"]:
            visit.setdefault(int(j), int(w["joint"]))
    missing = [pois[j].name for j in range(len(pois)) if j not in visit]
    times = {j: float(knots[k]) for j, k in visit.items()}
    late = precedence_violations(times, ws.task.n_ordered)
    checks.append(Check("precedence", not late and not missing,
                        "ordered POIs passed in index order" if not late and not missing else
                        f"missing waypoints {missing}" if missing else
                        f"ordered POIs passed out of order: {late}"))

    bad = []
    for j, poi in enumerate(pois):
        if j in visit:
            k = visit[j]
        else:  # no annotation: nearest approach
            k = int(np.argmin(np.linalg.norm(joints - poi.aabb.centroid, axis=1)))
        if not is_salient(ws.oracle.assess(joints[k], poi), config.oracle.saliency_threshold):
            bad.append(poi.name)
    checks.append(Check("saliency", not bad, "every POI salient at its waypoint" if not bad
                        else f"not salient: {bad}"))
    return ValidationReport(checks)


# --------------------------------------------------------------------------
# export


def sample_times(T: float, rate: float) -> np.ndarray:
    if not rate > 0:
        raise InputError("rate must be positive")
    n = int(math.floor(T * rate + 1e-9))
    return np.arange(n + 1) / rate


def export(traj_path, fmt: str, rate: float, out_path) -> Path:
    """Sample a trajectory file at ``rate`` Hz into CSV, PLY or JSON."""
    fmt = fmt.lower()
    if fmt not in ("csv", "ply", "json"):
        raise InputError(f"unknown export format {fmt!r} (csv, ply, json)")
    doc, curve, profile = load_trajectory(traj_path)
    t = sample_times(curve.total_duration, rate)
    pos = curve.positions(t)
    out = Path(out_path)
    if fmt == "ply":
        write_ply_polyline(out, pos)
        return out
    if profile is not None:
        dirs = np.array([eval_orientation(profile, curve, ti) for ti in t])
    else:
        vel = curve.derivative(t, 1)
        n = np.linalg.norm(vel, axis=1, keepdims=True)
        dirs = np.divide(vel, n, out=np.zeros_like(vel), where=n > 0)
    if fmt == "csv":
        rows = ["t,x,y,z,dx,dy,dz"]
        rows += [",".join(repr(float(v)) for v in (ti, *p, *d)) for ti, p, d in zip(t, pos, dirs)]
        out.write_text("\n".join(rows) + "\n")
    else:
        res = dict(doc)
        res["samples"] = [{"t": float(ti), "position": p.tolist(), "direction": d.tolist()}
                          for ti, p, d in zip(t, pos, dirs)]
        _dump(out, res)
    return out
