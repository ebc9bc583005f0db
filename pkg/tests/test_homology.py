import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from regimescope.homology import (
    EUCLIDEAN,
    TOROIDAL,
    FiltrationParams,
    PersistenceDiagram,
    PointCloud,
    diagram,
    distance_matrix,
    persistence,
    read_diagram_csv,
    vr_filtration,
    write_diagram_csv,
)

from oracles import rank_diagram

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _tuples(dgm):
    return sorted(dgm.as_tuples())


def test_unit_square():
    dgm = diagram(PointCloud(SQUARE), FiltrationParams(3.0))
    assert dgm.pairs(1) == [(1.0, math.sqrt(2.0))]
    assert sorted(dgm.pairs(0)) == [(0.0, 1.0)] * 3 + [(0.0, math.inf)]


def test_single_point_and_pair():
    one = diagram(PointCloud(np.zeros((1, 2))), FiltrationParams(1.0))
    assert one.as_tuples() == [(0, 0.0, math.inf)]
    two = PointCloud(np.array([[0.0, 0.0], [0.0, 1.0]]))
    assert _tuples(diagram(two, FiltrationParams(2.0))) == [(0, 0.0, 1.0), (0, 0.0, math.inf)]
    # the edge never enters below eps_max
    assert _tuples(diagram(two, FiltrationParams(0.5))) == [(0, 0.0, math.inf)] * 2


def test_coincident_points_drop_zero_length_pairs():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    dgm = diagram(PointCloud(pts), FiltrationParams(5.0))
    assert _tuples(dgm) == [(0, 0.0, 2.0), (0, 0.0, math.inf)]


def test_regular_polygon_has_one_loop():
    n = 12
    ang = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack((np.cos(ang), np.sin(ang)))
    dgm = diagram(PointCloud(pts), FiltrationParams(3.0))
    loops = dgm.pairs(1)
    assert len(loops) == 1
    b, d = loops[0]
    assert b == pytest.approx(2 * math.sin(math.pi / n))
    assert d > 1.5


def test_torus_grid_essential_loops():
    g = np.arange(4.0)
    pts = np.array([(x, y) for x in g for y in g])
    dgm = diagram(PointCloud(pts, 4.0, periodic=True), FiltrationParams(3.0, TOROIDAL))
    h1 = sorted(dgm.pairs(1))
    assert h1 == [(1.0, math.sqrt(2.0))] * 15 + [(1.0, 2.0)] * 2
    # on the plane the same grid has 9 squares and no wrap-around loops
    flat = diagram(PointCloud(pts), FiltrationParams(3.0, EUCLIDEAN))
    assert sorted(flat.pairs(1)) == [(1.0, math.sqrt(2.0))] * 9


def test_toroidal_distance_wraps():
    cloud = PointCloud(np.array([[0.1, 0.1], [9.9, 9.9]]), 10.0, periodic=True)
    assert distance_matrix(cloud, TOROIDAL)[0, 1] == pytest.approx(math.sqrt(0.08))
    assert distance_matrix(cloud, EUCLIDEAN)[0, 1] == pytest.approx(math.sqrt(2) * 9.8)


def test_filtration_order():
    rng = np.random.default_rng(3)
    cx = vr_filtration(PointCloud(rng.uniform(0, 1, (10, 2))), FiltrationParams(0.8))
    assert np.all(np.diff(cx.edge_values) >= 0)
    assert np.all(np.diff(cx.triangle_values) >= 0)
    assert cx.edge_values.max() <= 0.8
    values = [v for v, _, _ in cx.simplices()]
    assert values == sorted(values)


def test_counts_match_graph_components():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 6, (40, 2))
    eps = 0.9
    dgm = diagram(PointCloud(pts), FiltrationParams(eps))
    dist = distance_matrix(PointCloud(pts))
    # components by flood fill
    seen, comps = set(), 0
    for s in range(40):
        if s in seen:
            continue
        comps += 1
        stack = [s]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(np.flatnonzero(dist[v] <= eps).tolist())
    h0 = dgm.pairs(0)
    assert sum(1 for _, d in h0 if math.isinf(d)) == comps
    assert len(h0) == 40


clouds = st.integers(3, 7).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.floats(0, 4, allow_nan=False, width=32))
)


@settings(max_examples=60, deadline=None)
@given(clouds, st.floats(0.5, 6.0), st.booleans())
def test_fast_standard_and_oracle_agree(pts, eps, torus):
    box = 4.5 if torus else None
    cloud = PointCloud(pts, box, periodic=torus)
    params = FiltrationParams(eps, TOROIDAL if torus else EUCLIDEAN)
    cx = vr_filtration(cloud, params)
    fast = _tuples(persistence(cx, "fast"))
    std = _tuples(persistence(cx, "standard"))
    oracle = [p for p in rank_diagram(pts, eps, box) if p[2] > p[1]]
    assert fast == std == sorted(oracle)


@settings(max_examples=30, deadline=None)
@given(clouds, st.floats(0.1, 10.0))
def test_similarity_scaling(pts, factor):
    base = diagram(PointCloud(pts), FiltrationParams(100.0))
    scaled = diagram(PointCloud(pts * factor), FiltrationParams(100.0 * factor))
    want = base.scaled(factor)
    assert len(scaled) == len(want)
    np.testing.assert_array_equal(scaled.dims, want.dims)
    np.testing.assert_allclose(scaled.births, want.births, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(scaled.deaths, want.deaths, rtol=1e-9, atol=1e-12)


def test_translation_and_rotation_invariance():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 3, (25, 2))
    c, s = math.cos(0.7), math.sin(0.7)
    moved = pts @ np.array([[c, -s], [s, c]]) + np.array([5.0, -2.0])
    a = diagram(PointCloud(pts), FiltrationParams(2.0))
    b = diagram(PointCloud(moved), FiltrationParams(2.0))
    np.testing.assert_allclose(a.births, b.births, atol=1e-9)
    np.testing.assert_allclose(a.deaths, b.deaths, atol=1e-9)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    dgm = diagram(PointCloud(rng.uniform(0, 2, (30, 2))), FiltrationParams(0.7))
    path = tmp_path / "d.csv"
    write_diagram_csv(path, dgm)
    back = read_diagram_csv(path, 0.7)
    assert back.as_tuples() == dgm.as_tuples()
    assert path.read_text().splitlines()[0] == "dim,birth,death"


def test_finite_deaths_truncation():
    dgm = PersistenceDiagram.from_pairs([(0, 0.0, math.inf), (1, 0.2, 0.5)], eps_max=2.0)
    np.testing.assert_array_equal(dgm.finite_deaths(), [2.0, 0.5])
    with pytest.raises(ValueError):
        PersistenceDiagram.from_pairs([(0, 0.0, math.inf)]).finite_deaths()


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(points=np.zeros((3, 3))),
        dict(points=np.zeros((0, 2))),
        dict(points=np.array([[np.nan, 0.0]])),
        dict(points=np.array([[5.0, 0.0]]), box_side=5.0, periodic=True),
        dict(points=np.zeros((2, 2)), periodic=True),
    ],
)
def test_point_cloud_validation(kwargs):
    with pytest.raises(ValueError):
        PointCloud(**kwargs)


def test_filtration_params_validation():
    with pytest.raises(ValueError):
        FiltrationParams(0.0)
    with pytest.raises(ValueError):
        FiltrationParams(1.0, "manhattan")
    with pytest.raises(ValueError):
        distance_matrix(PointCloud(SQUARE), TOROIDAL)
