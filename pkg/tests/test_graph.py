import numpy as np
import pytest

from sas_pipeline.errors import ContractError, InputError
from sas_pipeline.graph import build_graph, normalized_coupling, spmm

from conftest import random_graph


def test_csr_is_symmetric_and_deduplicated():
    g = build_graph([(0, 1), (1, 0), (1, 2), (2, 2), (0, 1)], 4)
    assert g.num_edges == 2
    assert g.degrees.tolist() == [1, 2, 1, 0]
    assert g.neighbors(1).tolist() == [0, 2]
    assert g.row_offsets.tolist() == [0, 1, 3, 4, 4]
    a = g.adjacency().toarray()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)


def test_edge_order_does_not_matter():
    edges = [(0, 3), (2, 1), (1, 3), (0, 2)]
    g1 = build_graph(edges, 4)
    g2 = build_graph(list(reversed([(v, u) for u, v in edges])), 4)
    assert np.array_equal(g1.row_offsets, g2.row_offsets)
    assert np.array_equal(g1.col_indices, g2.col_indices)


def test_out_of_range_edge_reports_line():
    with pytest.raises(InputError, match="line 7"):
        build_graph([(0, 1), (1, 5)], 3, line_numbers=[3, 7])
    with pytest.raises(InputError):
        build_graph([(-1, 0)], 3)


def test_edge_array_lists_each_edge_once():
    g = build_graph([(2, 0), (1, 2)], 3)
    assert g.edge_array().tolist() == [[0, 2], [1, 2]]


def test_graph_arrays_are_read_only(path_graph):
    with pytest.raises(ValueError):
        path_graph.col_indices[0] = 3


def test_coupling_entries_on_path(path_graph):
    s = normalized_coupling(path_graph).to_dense()
    d1 = np.array([2.0, 3.0, 3.0, 2.0])
    assert s[0, 0] == pytest.approx(1 / 2)
    assert s[1, 1] == pytest.approx(1 / 3)
    assert s[0, 1] == pytest.approx(1 / np.sqrt(d1[0] * d1[1]))
    assert s[0, 2] == 0.0
    assert np.array_equal(s, s.T)


def test_isolated_node_keeps_itself():
    g = build_graph([(0, 1)], 3)
    s = normalized_coupling(g).to_dense()
    assert s[2].tolist() == [0.0, 0.0, 1.0]


def test_coupling_matches_dense_formula_and_spectrum():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        g = random_graph(rng, n, 0.2)
        a = g.adjacency().toarray() + np.eye(n)
        d = a.sum(axis=1)
        dense = a / np.sqrt(np.outer(d, d))
        s = normalized_coupling(g).to_dense()
        assert np.allclose(s, dense, atol=1e-14)
        eig = np.linalg.eigvalsh(s)
        assert eig.max() == pytest.approx(1.0, abs=1e-10)
        assert eig.min() >= -1.0 - 1e-10


def test_spmm_agrees_with_dense_and_threads_are_bit_identical():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 50, 0.1)
    s = normalized_coupling(g)
    x = rng.normal(size=(50, 4))
    single = spmm(s, x)
    assert np.allclose(single, s.to_dense() @ x, atol=1e-12)
    assert np.array_equal(spmm(s, x, workers=4), single)


def test_spmm_on_edgeless_graph_is_identity():
    g = build_graph([], 5)
    x = np.arange(10.0).reshape(5, 2)
    assert np.array_equal(spmm(normalized_coupling(g), x), x)


def test_spmm_shape_mismatch(path_graph):
    with pytest.raises(ContractError):
        spmm(normalized_coupling(path_graph), np.ones((3, 2)))


def test_regular_graph_rows_sum_to_one():
    ring = [(i, (i + 1) % 10) for i in range(10)]
    cube = [(u, u ^ bit) for u in range(8) for bit in (1, 2, 4) if u < u ^ bit]
    complete = [(u, v) for u in range(8) for v in range(u + 1, 8)]
    for edges, n, d in ((ring, 10, 2), (cube, 8, 3), (complete, 8, 7)):
        g = build_graph(edges, n)
        assert (g.degrees == d).all()
        row_sums = np.asarray(normalized_coupling(g).matrix.sum(axis=1)).ravel()
        assert (row_sums == 1.0).all(), d
