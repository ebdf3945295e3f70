import numpy as np
import pytest

import gelato
from gelato import (AttributeMatrix, add_self_loops, build_graph,
                    cosine_pairs, cosine_similarity)
from gelato.errors import DataError

from conftest import random_graph


class TestBuildGraph:
    def test_path_graph_degrees_and_volume(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        assert g.degrees.tolist() == [1.0, 2.0, 1.0]
        assert g.volume == 4.0
        assert g.num_arcs == 4

    def test_empty_graph(self):
        g = build_graph([], 5)
        assert g.volume == 0.0
        assert g.degrees.tolist() == [0.0] * 5
        assert g.num_edges == 0

    def test_cora_scale_counts(self):
        # same shape as the standard citation benchmark: 2708 nodes,
        # 5278 undirected edges -> 10556 arcs, average degree ~3.90
        rng = np.random.default_rng(0)
        g = random_graph(rng, 2708, 5278, ensure_positive_degree=False)
        assert g.num_edges == 5278
        assert g.num_arcs == 10556
        assert abs(g.degrees.mean() - 3.90) < 0.01

    def test_duplicate_edge_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            build_graph([(0, 1), (0, 1)], 3)

    def test_reversed_duplicate_rejected_undirected(self):
        with pytest.raises(DataError, match="duplicate"):
            build_graph([(0, 1), (1, 0)], 3)

    def test_id_out_of_range(self):
        with pytest.raises(DataError, match="out of range"):
            build_graph([(0, 3)], 3)

    def test_negative_weight_rejected(self):
        with pytest.raises(DataError, match="nonnegative"):
            build_graph([(0, 1, -0.5)], 3)

    def test_nonfinite_weight_rejected(self):
        with pytest.raises(DataError, match="finite"):
            build_graph([(0, 1, np.inf)], 3)

    def test_volume_matches_degree_sum_weighted(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            g = random_graph(rng, 15, 25, weighted=True)
            assert abs(g.volume - g.degrees.sum()) <= 1e-12 * max(g.volume, 1)

    def test_undirected_symmetry(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 12, 20, weighted=True)
        A = g.adjacency().toarray()
        np.testing.assert_array_equal(A, A.T)

    def test_edge_pairs_round_trip(self):
        edges = [(0, 1, 0.5), (1, 2, 2.0), (0, 3, 1.0)]
        g = build_graph(edges, 4)
        pairs, w = g.edge_pairs(return_weights=True)
        got = sorted((int(u), int(v), float(x)) for (u, v), x in zip(pairs, w))
        assert got == sorted(edges)

    def test_pair_weights_lookup(self):
        g = build_graph([(0, 1, 0.5), (2, 3, 1.5)], 4)
        w = g.pair_weights(np.array([[0, 1], [2, 3], [0, 2]]))
        assert w.tolist() == [0.5, 1.5, 0.0]

    def test_immutability(self):
        g = build_graph([(0, 1)], 2)
        with pytest.raises(ValueError):
            g.data[0] = 5.0


class TestCosine:
    def test_identical_rows(self):
        X = AttributeMatrix([[1.0, 2.0], [1.0, 2.0]])
        assert cosine_similarity(X, (0, 1)) == pytest.approx(1.0)

    def test_orthogonal(self):
        X = AttributeMatrix([[1.0, 0.0], [0.0, 1.0]])
        assert cosine_similarity(X, (0, 1)) == pytest.approx(0.0)

    def test_half_overlap(self):
        X = AttributeMatrix([[1.0, 1.0], [1.0, 0.0]])
        assert cosine_similarity(X, (0, 1)) == pytest.approx(
            1.0 / np.sqrt(2.0), abs=1e-12)

    def test_zero_row_convention(self):
        X = AttributeMatrix([[0.0, 0.0], [1.0, 1.0]])
        assert cosine_similarity(X, (0, 1)) == 0.0
        assert cosine_similarity(X, (0, 0)) == 0.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(3)
        X = AttributeMatrix(rng.normal(size=(10, 4)))
        for _ in range(30):
            u, v = rng.integers(0, 10, 2)
            s_uv = cosine_similarity(X, (u, v))
            s_vu = cosine_similarity(X, (v, u))
            assert s_uv == s_vu
            assert -1.0 - 1e-12 <= s_uv <= 1.0 + 1e-12

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(4)
        X = AttributeMatrix(rng.normal(size=(8, 3)))
        pairs = np.array([[0, 1], [2, 5], [7, 3]])
        vec = cosine_pairs(X, pairs)
        scal = [cosine_similarity(X, p) for p in pairs]
        np.testing.assert_allclose(vec, scal, atol=1e-15)

    def test_nonfinite_attributes_rejected(self):
        with pytest.raises(DataError):
            AttributeMatrix([[np.nan, 1.0]])


class TestSelfLoops:
    def test_isolated_only_no_isolated_is_identity(self):
        g = build_graph([(0, 1), (1, 2)], 3)
        g2 = add_self_loops(g, "isolated-only", 1.0)
        assert g2.num_arcs == g.num_arcs

    def test_isolated_only_adds_to_empty(self):
        g = build_graph([], 3)
        g2 = add_self_loops(g, "isolated-only", 1.0)
        assert g2.degrees.tolist() == [1.0, 1.0, 1.0]

    def test_all_on_triangle(self):
        g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
        g2 = add_self_loops(g, "all", 1.0)
        assert g2.degrees.tolist() == [3.0, 3.0, 3.0]
        assert g2.volume == 9.0

    def test_positive_degree_postcondition(self):
        rng = np.random.default_rng(5)
        for mode in ("all", "isolated-only"):
            g = build_graph([(0, 1)], 6)
            g2 = add_self_loops(g, mode, 0.5)
            assert (g2.degrees > 0).all()

    def test_bad_weight(self):
        g = build_graph([(0, 1)], 2)
        with pytest.raises(DataError):
            add_self_loops(g, "all", 0.0)

    def test_bad_mode(self):
        g = build_graph([(0, 1)], 2)
        with pytest.raises(DataError):
            add_self_loops(g, "everything", 1.0)
