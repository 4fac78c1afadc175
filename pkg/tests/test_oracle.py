import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inspectplan.errors import CoverageError, InputError
from inspectplan.oracle import (GeometricOracle, Poi, SaliencyVerdict, SpatialRelation, TaskSpec,
                                assess_geometric, box_solid_angle, compute_valid_sets, is_salient,
                                load_task, relation_satisfied)
from inspectplan.sampling import PrmEdge, PrmGraph, PrmNode
from inspectplan.scene import Aabb
from oracles import make_grid, mc_solid_angle

BOX = Aabb([1.0, 1.0, 1.0], [2.0, 1.5, 3.0])


def poi(rel, **kw):
    return Poi("p", SpatialRelation.parse(rel), BOX, **kw)


@pytest.mark.parametrize("p", [[0, 0, 0], [1.5, 1.2, 4.0], [1.2, 3.0, 2.0], [-3.0, 5.0, 0.5], [2.5, 1.25, 2.0]])
def test_solid_angle_monte_carlo(p):
    mc = mc_solid_angle(p, BOX.min, BOX.max, rays=400_000, seed=1)
    # binomial standard error of 4*pi*f with 4e5 rays is below 0.01 sr
    assert box_solid_angle(p, BOX) == pytest.approx(mc, abs=0.03)


def test_solid_angle_limits():
    assert box_solid_angle(BOX.centroid, BOX) == pytest.approx(4 * math.pi)
    # face-on far field: area / distance^2
    far = [1.5, 1.25, 3.0 + 100.0]
    assert box_solid_angle(far, BOX) == pytest.approx(0.5 / 100.0 ** 2, rel=1e-3)
    # the box is closed: a point on a face counts as inside
    assert box_solid_angle([1.5, 1.25, 3.0], BOX) == pytest.approx(4 * math.pi)


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.floats(-5, 5)] * 3), st.floats(0.05, 3))
def test_solid_angle_monotone_with_distance(p, k):
    # pulling back along the ray from the centroid never increases the subtended angle
    p = np.asarray(p)
    if BOX.contains(p):
        return
    q = BOX.centroid + (1 + k) * (p - BOX.centroid)
    assert box_solid_angle(q, BOX) <= box_solid_angle(p, BOX) + 1e-12
    assert 0 <= box_solid_angle(p, BOX) <= 4 * math.pi


def test_relations():
    assert relation_satisfied([1.5, 1.2, 2.0], poi("inside"))
    assert not relation_satisfied([0.0, 1.2, 2.0], poi("inside"))
    assert relation_satisfied([1.5, 1.2, 3.5], poi("over"))
    assert not relation_satisfied([2.5, 1.2, 3.5], poi("over"))
    assert not relation_satisfied([1.5, 1.2, 3.0], poi("over"))  # on the top face is not above it
    front = poi("in front", front_axis=[0, 1, 0], visible_range=2.0)
    assert relation_satisfied([1.5, 2.5, 2.0], front)
    assert not relation_satisfied([1.5, 0.0, 2.0], front)
    assert not relation_satisfied([1.5, 4.5, 2.0], front)  # out of range
    around = poi("around", visible_range=2.0)
    assert relation_satisfied([0.0, 0.0, 2.0], around)
    assert not relation_satisfied([1.5, 1.2, 2.0], around)
    assert relation_satisfied([100, 100, 100], poi("arbitrary"))


def test_relation_parse():
    assert SpatialRelation.parse("In-Front") is SpatialRelation.IN_FRONT
    with pytest.raises(InputError):
        SpatialRelation.parse("behind")


def test_verdict_invariants():
    with pytest.raises(ValueError):
        SaliencyVerdict(True, 1.2, True)
    with pytest.raises(ValueError):
        SaliencyVerdict(False, 0.3, True)


def test_visibility_vote_counts_sight_lines():
    # a slab that hides half the box corners from the viewer
    occ = np.zeros((12, 12, 12), dtype=bool)
    grid = make_grid(occ, cell_size=0.5)
    target = Poi("t", SpatialRelation.ARBITRARY, Aabb([4.0, 2.0, 2.0], [4.4, 4.0, 4.0]))
    eye = [1.0, 3.0, 3.0]
    v = assess_geometric(eye, target, grid, 0.4)
    assert v.visible and v.relation_ok
    assert v.saliency == pytest.approx(min(1.0, box_solid_angle(eye, target.aabb) / 0.4))
    occ[5, :, :6] = True  # blocks the lower corners (z = 2) and leaves the centroid and upper corners
    v = assess_geometric(eye, target, make_grid(occ, cell_size=0.5), 0.4)
    assert v.visible
    occ[5, :, :] = True
    v = assess_geometric(eye, target, make_grid(occ, cell_size=0.5), 0.4)
    assert not v.visible and v.saliency == 0.0


def test_saliency_threshold_is_inclusive():
    assert is_salient(SaliencyVerdict(True, 0.5, True), 0.5)
    assert not is_salient(SaliencyVerdict(True, 0.49, True), 0.5)
    assert not is_salient(SaliencyVerdict(True, 1.0, False), 0.5)


def _line_graph(xs):
    nodes = [PrmNode(np.array([x, 0.5, 0.5])) for x in xs]
    edges = [PrmEdge(i, i + 1, float(xs[i + 1] - xs[i])) for i in range(len(xs) - 1)]
    return PrmGraph(nodes, edges)


def test_clones_for_shared_nodes():
    grid = make_grid(np.zeros((10, 1, 1)))
    a = Poi("a", SpatialRelation.AROUND, Aabb([4, 0, 0], [4.2, 1, 1]), visible_range=1.2)
    b = Poi("b", SpatialRelation.AROUND, Aabb([5.8, 0, 0], [6, 1, 1]), visible_range=1.2)
    prm = _line_graph([2.5, 5.0, 7.5])
    out, valid = compute_valid_sets(prm, TaskSpec(unordered=[a, b]), GeometricOracle(grid, 0.05), 0.5)
    assert valid == [[1], [3]]
    clone = out.nodes[3]
    assert clone.clone_of == 1 and clone.poi_id == 1 and out.nodes[1].poi_id == 0
    np.testing.assert_array_equal(clone.position, out.nodes[1].position)
    assert PrmEdge(1, 3, 0.0) in out.edges


def test_coverage_error_names_poi():
    grid = make_grid(np.zeros((10, 1, 1)))
    far = Poi("far", SpatialRelation.INSIDE, Aabb([9, 0, 0], [9.5, 1, 1]))
    with pytest.raises(CoverageError) as err:
        compute_valid_sets(_line_graph([0.5, 1.5]), TaskSpec(unordered=[far]), GeometricOracle(grid, 0.4), 0.5)
    assert err.value.poi_name == "far"
    assert err.value.exit_code == 3


def test_load_task(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"ordered": [{"name": "a", "relation": "over", "aabb": {"min": [0, 0, 0], "max": [1, 1, 1]}}],
                             "unordered": [{"name": "b", "aabb": {"min": [0, 0, 0], "max": [1, 1, 1]},
                                            "front_axis": [0, 0, 2]}]}))
    task = load_task(p, 10.0)
    assert task.n_ordered == 1 and [q.name for q in task.pois] == ["a", "b"]
    assert task.pois[1].relation is SpatialRelation.ARBITRARY
    assert task.pois[0].visible_range == 5.0
    np.testing.assert_allclose(task.pois[1].front_axis, [0, 0, 1])


@pytest.mark.parametrize("doc", [
    {"ordered": [], "unordered": []},
    {"unordered": [{"name": "a", "aabb": {"min": [1, 0, 0], "max": [0, 1, 1]}}]},
    {"unordered": [{"name": "a", "relation": "behind", "aabb": {"min": [0, 0, 0], "max": [1, 1, 1]}}]},
    {"unordered": [{"name": "a", "aabb": {"min": [0, 0, 0], "max": [1, 1, 1]}}] * 2},
    {"unordered": [{"name": "a", "aabb": {"min": [0, 0, 0], "max": [1, 1, 1]}, "front_axis": [0, 0, 0]}]},
    {"tasks": []},
])
def test_bad_tasks(tmp_path, doc):
    p = tmp_path / "t.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(InputError):
        load_task(p, 1.0)
