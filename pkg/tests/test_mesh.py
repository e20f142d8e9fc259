"""Domain construction, metric balls, and graph file parsing."""

import math

import numpy as np
import pytest

from plaplace.errors import FormatError, ParameterError
from plaplace.mesh import (
    Ball,
    Circle,
    PeriodicGrid,
    WeightedGraph,
    ball,
    build_torus,
    load_graph,
)

from oracles import graph_distances, torus_bruteforce_distance


def triangle_graph(K=0.0, N=2.0):
    return WeightedGraph(
        edges=[(0, 1), (1, 2), (0, 2)],
        weights=[1.0, 1.0, 1.0],
        lengths=[1.0, 1.0, 1.0],
        measure=[1.0, 1.0, 1.0],
        K=K,
        N=N,
    )


def test_grid_basic_attributes():
    dom = PeriodicGrid(2, 8, 2.0)
    assert dom.nv == 64
    assert dom.h == 0.25
    assert dom.shape == (8, 8)
    assert dom.diam == pytest.approx(math.sqrt(2.0), rel=0, abs=0)
    assert np.all(dom.measure == 0.25**2)
    assert dom.total_measure == pytest.approx(4.0, rel=1e-15)
    assert dom.kind == "grid"
    assert dom.is_grid


def test_circle_is_one_dimensional_grid():
    dom = Circle(16, 2 * math.pi)
    assert isinstance(dom, PeriodicGrid)
    assert dom.d == 1
    assert dom.kind == "circle"
    assert dom.diam == pytest.approx(math.pi, rel=1e-15)
    assert build_torus(1, 16, 2 * math.pi).kind == "circle"
    assert build_torus(2, 4, 1.0).kind == "grid"


def test_grid_validation():
    with pytest.raises(ParameterError):
        PeriodicGrid(4, 8, 1.0)
    with pytest.raises(ParameterError):
        PeriodicGrid(2, 3, 1.0)
    with pytest.raises(ParameterError):
        PeriodicGrid(2, 8, 0.0)
    with pytest.raises(ParameterError):
        PeriodicGrid(2, 8, 1.0, K=math.inf)
    with pytest.raises(ParameterError):
        PeriodicGrid(2, 8, 1.0, N=1.5)
    # N = inf is a legal effective dimension.
    assert PeriodicGrid(2, 8, 1.0, N=math.inf).N == math.inf


def test_K_minus():
    assert PeriodicGrid(2, 8, 1.0, K=0.5).K_minus == 0.0
    assert PeriodicGrid(2, 8, 1.0, K=-0.5).K_minus == 0.5
    assert PeriodicGrid(2, 8, 1.0, K=0.0).K_minus == 0.0


def test_torus_distances_match_bruteforce():
    for d, n, L in ((1, 12, 2.0), (2, 6, 1.0), (3, 4, 3.0)):
        dom = build_torus(d, n, L)
        for vertex in (0, dom.nv // 3, dom.nv - 1):
            got = dom.distances_from(vertex)
            want = np.array(
                [torus_bruteforce_distance(d, n, L, vertex, j) for j in range(dom.nv)]
            )
            assert np.allclose(got, want, rtol=0, atol=1e-14)


def test_ball_boundary_vertex_included():
    dom = Circle(16, 16.0)
    # h = 1, so radius 3 hits vertices 13, 14, 15, 0, 1, 2, 3 exactly.
    b = ball(dom, 0, 3.0)
    assert sorted(b.members.tolist()) == [0, 1, 2, 3, 13, 14, 15]
    assert b.size == 7
    assert b.mask.sum() == 7
    assert isinstance(b, Ball)


def test_ball_validation():
    dom = Circle(8, 1.0)
    with pytest.raises(ParameterError):
        ball(dom, -1, 0.5)
    with pytest.raises(ParameterError):
        ball(dom, 8, 0.5)
    with pytest.raises(ParameterError):
        ball(dom, 0, -0.1)
    # zero radius is the singleton {center}
    assert ball(dom, 3, 0.0).members.tolist() == [3]


def test_grid_neighbors():
    dom = PeriodicGrid(2, 4, 1.0)
    # vertex 0 = (0,0); neighbours are (3,0),(1,0),(0,3),(0,1)
    assert dom.neighbors(0).tolist() == [1, 3, 4, 12]
    dom1 = Circle(5, 1.0)
    assert dom1.neighbors(0).tolist() == [1, 4]


def test_graph_attributes_and_neighbors():
    g = triangle_graph(K=-1.0, N=math.inf)
    assert g.nv == 3
    assert g.ne == 3
    assert g.kind == "graph"
    assert not g.is_grid
    assert g.K_minus == 1.0
    assert g.N == math.inf
    assert g.diam == pytest.approx(1.0)
    assert g.neighbors(0).tolist() == [1, 2]
    assert g.total_measure == pytest.approx(3.0)


def test_graph_distances_match_dijkstra():
    rng = np.random.default_rng(7)
    nv = 12
    # random connected graph: a path plus extra chords
    edges = [(i, i + 1) for i in range(nv - 1)]
    extra = {(1, 5), (0, 7), (3, 10), (2, 9)}
    edges += sorted(extra)
    ne = len(edges)
    lengths = rng.uniform(0.5, 2.0, size=ne)
    g = WeightedGraph(edges, np.ones(ne), lengths, np.ones(nv))
    want = graph_distances(nv, edges, lengths)
    for v in range(nv):
        assert np.allclose(g.distances_from(v), want[v], rtol=0, atol=1e-12)
    assert g.diam == pytest.approx(want.max(), rel=1e-15)


def test_graph_validation():
    m = [1.0, 1.0, 1.0]
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 0)], [1.0], [1.0], m)  # self loop
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1), (1, 0)], [1.0, 1.0], [1.0, 1.0], m)  # duplicate
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1)], [1.0], [1.0], m)  # vertex 2 disconnected
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 3)], [1.0], [1.0], m)  # endpoint out of range
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1), (1, 2)], [1.0, -1.0], [1.0, 1.0], m)
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1), (1, 2)], [1.0, 1.0], [0.0, 1.0], m)
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1), (1, 2)], [1.0, 1.0], [1.0, 1.0], [1.0, 0.0, 1.0])
    with pytest.raises(ParameterError):
        WeightedGraph([], [], [], m)
    with pytest.raises(ParameterError):
        WeightedGraph([(0, 1)], [1.0], [1.0], [1.0])  # single vertex


def test_graph_arrays_frozen():
    g = triangle_graph()
    with pytest.raises(ValueError):
        g.edge_weight[0] = 2.0
    with pytest.raises(ValueError):
        g.measure[0] = 2.0


def write_graph(tmp_path, text, name="g.graph"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_graph_roundtrip(tmp_path):
    text = """
# a triangle with one long edge
vertex 0 1.0
vertex 1 2.0
vertex 2 0.5
edge 0 1 1.0 1.5
edge 1 2 2.0     # weight 2, default length
edge 0 2 1.0 1.0
K -0.25
N inf
"""
    g = load_graph(write_graph(tmp_path, text))
    assert g.nv == 3
    assert g.ne == 3
    assert g.measure.tolist() == [1.0, 2.0, 0.5]
    assert g.edge_weight.tolist() == [1.0, 2.0, 1.0]
    assert g.edge_length.tolist() == [1.5, 1.0, 1.0]
    assert g.K == -0.25
    assert g.N == math.inf


def test_load_graph_errors(tmp_path):
    cases = [
        "vertex 0 1.0\nvertex 1 1.0\nwidget 0 1\n",  # unknown record
        "vertex 0 1.0\nvertex 0 1.0\nedge 0 1 1\n",  # duplicate vertex
        "vertex 0 1.0\nvertex 2 1.0\nedge 0 1 1\n",  # ids not 0..nv-1
        "edge 0 1 1.0\n",  # no vertices
        "vertex 0 1.0\nvertex 1 1.0\nedge 0 1\n",  # edge missing weight
        "vertex 0 1.0\nvertex 1 1.0\nedge 0 1 1 1 1\n",  # too many fields
        "vertex 0 one\nvertex 1 1.0\nedge 0 1 1\n",  # bad float
        "vertex 0 1.0 3\nvertex 1 1.0\nedge 0 1 1\n",  # vertex extra field
        # structurally invalid graph surfaces as FormatError too
        "vertex 0 1.0\nvertex 1 1.0\nedge 0 0 1\n",
    ]
    for i, text in enumerate(cases):
        path = write_graph(tmp_path, text, name=f"bad{i}.graph")
        with pytest.raises(FormatError):
            load_graph(path)


def test_load_graph_error_reports_line(tmp_path):
    path = write_graph(tmp_path, "vertex 0 1.0\nvertex 1 1.0\nbogus\n")
    with pytest.raises(FormatError, match=":3:"):
        load_graph(path)
