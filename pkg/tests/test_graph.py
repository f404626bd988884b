import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prodigy_tm.graph import (
    Graph, GraphParseError, GraphSpec, GraphValidationError, InfeasibleParameters, degree_stats,
    from_edges, gen_kronecker, gen_uniform_random, load_csc, load_edge_list, save_csc,
    save_edge_list,
)


def test_csc_holds_in_neighbors():
    g = from_edges(3, [0, 1, 0], [1, 2, 2])
    assert g.col_ptr.tolist() == [0, 0, 1, 3]
    assert sorted(g.in_neighbors(2).tolist()) == [0, 1]
    assert g.out_degrees().tolist() == [2, 1, 0]
    assert g.in_degrees().tolist() == [0, 1, 2]
    assert g.row_idx.dtype == np.uint32 and g.col_ptr.dtype == np.int64


def test_load_edge_list_basic(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# tiny\n0 1\n1 2\n\n2 0\n")
    g = load_edge_list(p)
    assert (g.num_vertices, g.num_edges) == (3, 3)
    assert np.all(g.edge_weight == 1.0)


def test_header_overrides_vertex_count(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("n=10 m=1\n0 1\n")
    assert load_edge_list(p).num_vertices == 10


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1\n1 x\n")
    with pytest.raises(GraphParseError) as e:
        load_edge_list(p)
    assert e.value.lineno == 2


def test_negative_id_rejected(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 -1\n")
    with pytest.raises(GraphValidationError):
        load_edge_list(p)


def test_weighted_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("0 1 2.5\n1 0 3\n")
    g = load_edge_list(p, weighted=True)
    assert sorted(g.edge_weight.tolist()) == [2.5, 3.0]


def test_uniform_random_shape():
    g = gen_uniform_random(500, 8, seed=3)
    assert g.num_edges == 4000
    edges = list(zip(*[a.tolist() for a in _src_dst(g)]))
    assert len(set(edges)) == len(edges)
    assert all(u != v for u, v in edges)


def test_uniform_random_is_deterministic():
    a = gen_uniform_random(300, 4, seed=7, weighted=True)
    b = gen_uniform_random(300, 4, seed=7, weighted=True)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != gen_uniform_random(300, 4, seed=8).to_bytes()


def test_uniform_random_infeasible():
    with pytest.raises(InfeasibleParameters):
        gen_uniform_random(3, 5, seed=0)


def test_kronecker_size_and_skew():
    g = gen_kronecker(10, 8, seed=1)
    assert g.num_vertices == 1024 and g.num_edges == 8192
    s = degree_stats(g)
    assert s.max > 10 * s.mean


def test_weights_are_small_integers():
    g = gen_kronecker(6, 4, seed=2, weighted=True)
    w = g.edge_weight
    assert w.min() >= 1 and w.max() <= 64 and np.all(w == np.round(w))


def test_graph_spec_build_and_label():
    gs = GraphSpec("uniform-random", n=100, avg_degree=2, seed=1)
    assert gs.build().num_edges == 200
    assert gs.label() == "ur-n100-d2"
    with pytest.raises(GraphValidationError):
        GraphSpec("torus")


def _src_dst(g: Graph):
    dst = np.repeat(np.arange(g.num_vertices), np.diff(g.col_ptr))
    return g.row_idx.astype(np.int64), dst


edge_lists = st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(1, 64)),
             max_size=80)))


@settings(max_examples=60, deadline=None)
@given(edge_lists)
def test_edge_list_roundtrip(tmp_path_factory, data):
    n, edges = data
    src = [e[0] for e in edges]
    dst = [e[1] for e in edges]
    w = [float(e[2]) for e in edges]
    g = from_edges(n, src, dst, w)
    d = tmp_path_factory.mktemp("rt")
    save_edge_list(g, d / "g.txt", weighted=True)
    h = load_edge_list(d / "g.txt", weighted=True)
    assert np.array_equal(g.col_ptr, h.col_ptr)
    assert np.array_equal(g.row_idx, h.row_idx)
    assert np.array_equal(g.edge_weight, h.edge_weight)
    save_csc(h, d / "g.csc")
    assert load_csc(d / "g.csc").to_bytes() == g.to_bytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.floats(0.1, 6), st.integers(0, 2**16))
def test_uniform_no_self_loops_or_duplicates(n, deg, seed):
    m = round(n * deg)
    if m > n * (n - 1):
        return
    g = gen_uniform_random(n, deg, seed)
    g.validate()
    src, dst = _src_dst(g)
    assert g.num_edges == m
    assert not np.any(src == dst)
    assert len(set(zip(src.tolist(), dst.tolist()))) == m
