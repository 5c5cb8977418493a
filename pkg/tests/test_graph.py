
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from routeseq.graph import (EmptyGraphError, GraphParseError, GraphStructureError, MINNESOTA_BBOX, filter_bbox,
                            from_edges, load_graph, neighbors, read_graph, write_graph)


TOY_EDGES = {(0, 1), (1, 2), (2, 3), (2, 4)}


def assert_graph_invariants(g):
    n = g.n_nodes
    seen = set()
    for u, v in g.edges:
        assert 0 <= u < v < n
        assert (u, v) not in seen
        seen.add((u, v))
        assert g.weight(u, v) > 0
        assert g.has_edge(v, u)
    for u in range(n):
        for v, w in g.neighbors(u):
            assert (min(u, v), max(u, v)) in seen
            assert w == g.weight(v, u)


def test_toy_fixture_matches_hand_enumeration(toy5):
    assert toy5.n_nodes == 5
    assert set(toy5.edges) == TOY_EDGES
    assert_graph_invariants(toy5)


def test_symmetric_listing_deduplicates(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n")
    (tmp_path / "c.xy").write_text("0 0\n3 4\n")
    g = load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")
    assert g.edges == ((0, 1),)
    assert g.weight(0, 1) == 5.0


def test_symmetric_header_mirrors_lower_triangle(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern symmetric\n3 3 2\n2 1\n3 2\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n2 0\n")
    g = load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")
    assert g.edges == ((0, 1), (1, 2))
    assert [v for v, _ in g.neighbors(1)] == [0, 2]


def test_self_loops_dropped_and_counted(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 3\n1 1\n1 2\n2 2\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    g = load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")
    assert g.self_loops_dropped == 2
    assert g.edges == ((0, 1),)


def test_real_valued_matrix_market_ignores_values(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate real symmetric\n%c\n2 2 1\n2 1 7.5\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    assert load_graph(tmp_path / "e.mtx", tmp_path / "c.xy").edges == ((0, 1),)


@pytest.mark.parametrize("body, lineno", [
    ("2 2 1\n1 x\n", 3),
    ("2 2\n", 2),
])
def test_malformed_row_names_line(tmp_path, body, lineno):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n" + body)
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    with pytest.raises(GraphParseError) as info:
        load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")
    assert info.value.lineno == lineno


def test_bad_coordinate_line(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 2\n")
    (tmp_path / "c.xy").write_text("0 0\n1 zero\n")
    with pytest.raises(GraphParseError, match=":2:"):
        load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")


def test_out_of_range_entry_is_structural(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 3\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    with pytest.raises(GraphStructureError):
        load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")
    with pytest.raises(GraphStructureError):
        from_edges([0, 1], [0, 0], [(0, 2)])


def test_node_count_mismatch(tmp_path):
    (tmp_path / "e.mtx").write_text("%%MatrixMarket matrix coordinate pattern general\n3 3 1\n1 2\n")
    (tmp_path / "c.xy").write_text("0 0\n1 0\n")
    with pytest.raises(GraphStructureError, match="3 nodes"):
        load_graph(tmp_path / "e.mtx", tmp_path / "c.xy")


def test_minnesota_full_graph(minnesota):
    assert minnesota.n_nodes == 2642
    # four MatlabBGL edges join nodes with identical coordinates
    assert minnesota.zero_length_dropped == 4
    assert minnesota.n_edges == 3299
    assert_graph_invariants(minnesota)


def test_minnesota_box(mn376):
    assert (mn376.n_nodes, mn376.n_edges) == (376, 455)
    assert_graph_invariants(mn376)


def test_closed_box_keeps_boundary_nodes(minnesota):
    g = filter_bbox(minnesota, *MINNESOTA_BBOX, inclusive=True)
    assert (g.n_nodes, g.n_edges) == (382, 462)


def test_all_inclusive_box_is_identity(toy5):
    g = filter_bbox(toy5, -1, 3, -1, 2)
    assert g.id_map == {i: i for i in range(5)}
    assert g.edges == toy5.edges
    np.testing.assert_array_equal(g.lon, toy5.lon)


def test_box_excluding_two_nodes(toy5):
    # drops node 1 (1,0) and node 0 (0,0): keeps 2,3,4 -> 0,1,2
    g = filter_bbox(toy5, -0.5, 2.5, 0.5, 1.5)
    assert g.id_map == {2: 0, 3: 1, 4: 2}
    assert set(g.edges) == {(0, 1), (0, 2)}


def test_empty_box_raises(toy5):
    with pytest.raises(EmptyGraphError):
        filter_bbox(toy5, 10, 11, 10, 11)
    with pytest.raises(ValueError):
        filter_bbox(toy5, 1, 0, 0, 1)


def test_neighbors(toy5):
    assert neighbors(toy5, 2) == [(1, 1.0), (3, 1.0), (4, 1.0)]
    assert neighbors(toy5, 0) == [(1, 1.0)]
    g = from_edges([0, 1, 5], [0, 0, 5], [(0, 1)])
    assert neighbors(g, 2) == []
    with pytest.raises(IndexError):
        neighbors(toy5, 5)


def test_export_round_trip(mn376, tmp_path):
    write_graph(mn376, tmp_path / "g.txt")
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert lines[0] == "376 455"
    u, v, w = lines[1 + 376].split()
    assert float(w) == mn376.weight(int(u), int(v))
    back = read_graph(tmp_path / "g.txt")
    assert back.edges == mn376.edges
    np.testing.assert_array_equal(back.lon, mn376.lon)


boxes = st.tuples(st.floats(-97.5, -93.5), st.floats(0.2, 4), st.floats(43.5, 48.5), st.floats(0.2, 4))


@settings(max_examples=30, deadline=None)
@given(boxes)
def test_filter_idempotent_and_shrinking(minnesota, box):
    x0, dx, y0, dy = box
    b = (x0, x0 + dx, y0, y0 + dy)
    try:
        g1 = filter_bbox(minnesota, *b)
    except EmptyGraphError:
        return
    g2 = filter_bbox(g1, *b)
    assert g1.n_nodes <= minnesota.n_nodes and g1.n_edges <= minnesota.n_edges
    assert g2.id_map == {i: i for i in range(g1.n_nodes)}
    assert g2.edges == g1.edges
    assert_graph_invariants(g1)
    for old, new in g1.id_map.items():
        assert (g1.lon[new], g1.lat[new]) == (minnesota.lon[old], minnesota.lat[old])
        assert b[0] < g1.lon[new] < b[1] and b[2] < g1.lat[new] < b[3]
