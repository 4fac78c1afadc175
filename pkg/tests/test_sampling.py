import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inspectplan.errors import ConnectivityError, SamplingError
from inspectplan.sampling import PrmGraph, build_prm, poisson_sparsify, sample_free
from inspectplan.scene import Aabb, segment_free
from oracles import make_grid


def walled_grid():
    occ = np.zeros((10, 10, 4), dtype=bool)
    occ[5, :8, :] = True  # wall with a gap at y >= 8
    return make_grid(occ, cell_size=0.5)


def test_samples_are_free_and_seeded():
    grid = walled_grid()
    a = sample_free(grid, 500, 7)
    assert grid.points_free(a).all()
    np.testing.assert_array_equal(a, sample_free(grid, 500, 7))
    assert not np.array_equal(a, sample_free(grid, 500, 8))


def test_region_restricts_samples():
    grid = walled_grid()
    box = Aabb([0, 0, 0], [2.0, 2.0, 2.0])
    pts = sample_free(grid, 300, 1, region=box)
    # cells whose centre is inside the box; points stay within that cell range
    assert np.all(pts >= 0) and np.all(pts <= 2.25)


def test_no_free_cells():
    with pytest.raises(SamplingError):
        sample_free(make_grid(np.ones((2, 2, 2))), 5, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 1.5), st.integers(1, 300))
def test_poisson_min_distance_and_maximality(seed, r, n):
    pts = np.random.default_rng(seed).random((n, 3)) * 3
    kept = poisson_sparsify(pts, r)
    d = np.linalg.norm(kept[:, None] - kept[None], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= r
    # greedy thinning is maximal: every dropped point has a kept neighbour closer than r
    dist_to_kept = np.linalg.norm(pts[:, None] - kept[None], axis=2).min(axis=1)
    assert np.all(dist_to_kept < r)


def test_poisson_keeps_input_order():
    pts = np.array([[0, 0, 0], [5, 0, 0], [0.1, 0, 0], [2, 0, 0]], dtype=float)
    np.testing.assert_array_equal(poisson_sparsify(pts, 1.0), pts[[0, 1, 3]])
    np.testing.assert_array_equal(poisson_sparsify(pts, 0.0), pts)


def test_prm_edges_are_collision_free():
    grid = walled_grid()
    pts = poisson_sparsify(sample_free(grid, 400, 3), 0.6)
    prm = build_prm(pts, grid, 1.5)
    assert prm.is_connected()
    for e in prm.edges:
        a, b = prm.nodes[e.u].position, prm.nodes[e.v].position
        assert segment_free(grid, a, b)
        assert e.length == pytest.approx(np.linalg.norm(a - b))


def test_prm_radius_doubling():
    grid = make_grid(np.zeros((10, 1, 1)))
    pts = np.array([[0.5, 0.5, 0.5], [2.5, 0.5, 0.5], [6.5, 0.5, 0.5]])
    prm = build_prm(pts, grid, 1.0)
    assert prm.is_connected()
    with pytest.raises(ConnectivityError):
        build_prm(pts, grid, 1.0, max_doublings=1)


def test_prm_disconnected_rooms():
    occ = np.zeros((9, 1, 1), dtype=bool)
    occ[4] = True
    grid = make_grid(occ)
    with pytest.raises(ConnectivityError):
        build_prm([[0.5, 0.5, 0.5], [8.5, 0.5, 0.5]], grid, 1.0)


def test_prm_json_round_trip():
    grid = walled_grid()
    prm = build_prm(poisson_sparsify(sample_free(grid, 200, 5), 0.8), grid, 2.0)
    back = PrmGraph.from_json(prm.to_json())
    np.testing.assert_array_equal(back.positions, prm.positions)
    assert [(e.u, e.v, e.length) for e in back.edges] == [(e.u, e.v, e.length) for e in prm.edges]
