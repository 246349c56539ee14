import numpy as np
import pytest

from gigamae.augment import (
    CLASS_B,
    CLASS_E,
    CLASS_F,
    CLASS_N,
    apply_masks,
    make_plan,
    round_half_up,
    sample_masks,
    unmasked,
)
from gigamae.graph import Graph
from gigamae.model import attention_index


def _brute_class(graph, plan, i):
    edge_hit = any(i in e for e in plan.masked_edges.tolist())
    feat_hit = i in set(plan.masked_feature_nodes.tolist())
    return {(False, False): CLASS_N, (True, False): CLASS_E, (False, True): CLASS_F, (True, True): CLASS_B}[
        (edge_hit, feat_hit)
    ]


class TestSampleMasks:
    def test_no_masking(self, planted):
        plan = sample_masks(planted, 0.0, 0.0, seed=1)
        assert len(plan.masked_edges) == 0 and len(plan.masked_feature_nodes) == 0
        assert np.all(plan.node_class == CLASS_N)

    def test_full_masking(self):
        g = Graph.from_edges(np.ones((5, 2)), [(0, 1), (1, 2), (2, 3)])  # node 4 isolated
        plan = sample_masks(g, 1.0, 1.0, seed=0)
        assert len(plan.masked_edges) == 3
        np.testing.assert_array_equal(plan.node_class, [CLASS_B] * 4 + [CLASS_F])

    def test_counts_round_half_up(self, planted):
        plan = sample_masks(planted, 0.4, 0.4, seed=2)
        assert len(plan.masked_edges) == round_half_up(0.4 * planted.num_edges)
        assert len(plan.masked_feature_nodes) == round_half_up(0.4 * planted.num_nodes)

    def test_round_half_up(self):
        assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]

    def test_deterministic(self, planted):
        a, b = sample_masks(planted, 0.3, 0.5, seed=9), sample_masks(planted, 0.3, 0.5, seed=9)
        np.testing.assert_array_equal(a.masked_edges, b.masked_edges)
        np.testing.assert_array_equal(a.node_class, b.node_class)

    def test_ratio_range(self, planted):
        with pytest.raises(ValueError):
            sample_masks(planted, 1.2, 0.0)

    def test_partition_brute_force(self):
        rng = np.random.default_rng(0)
        for trial in range(40):
            n = int(rng.integers(2, 101))
            g = Graph.from_edges(rng.normal(size=(n, 2)), rng.integers(0, n, size=(int(rng.integers(1, 3 * n)), 2)))
            plan = sample_masks(g, rng.random(), rng.random(), seed=trial)
            assert sum(plan.class_counts().values()) == n
            for i in range(n):
                assert plan.node_class[i] == _brute_class(g, plan, i)
            assert set(map(tuple, plan.masked_edges.tolist())) <= g.edge_set()

    def test_uniform_edges(self, planted):
        counts = np.zeros(planted.num_edges)
        index = {tuple(e): k for k, e in enumerate(planted.edges.tolist())}
        for s in range(400):
            for e in sample_masks(planted, 0.25, 0.0, seed=s).masked_edges.tolist():
                counts[index[tuple(e)]] += 1
        # each edge is masked with probability 0.25; 400 draws -> mean 100, sd ~8.7
        assert abs(counts.mean() - 100) < 1 and counts.min() > 60 and counts.max() < 140


class TestApplyMasks:
    def test_edge_only(self, path3):
        plan = make_plan(path3, masked_edges=[(0, 1)])
        mg = apply_masks(path3, plan)
        np.testing.assert_array_equal(mg.adjacency_edges, [[1, 2]])
        np.testing.assert_array_equal(plan.node_class, [CLASS_E, CLASS_E, CLASS_N])

    def test_feature_only(self, path3):
        plan = make_plan(path3, masked_feature_nodes=[2])
        mg = apply_masks(path3, plan)
        np.testing.assert_array_equal(mg.features[2], [0, 0])
        np.testing.assert_array_equal(mg.features[:2], path3.features[:2])
        np.testing.assert_array_equal(plan.node_class, [CLASS_N, CLASS_N, CLASS_F])

    def test_both(self, path3):
        plan = make_plan(path3, masked_edges=[(0, 1)], masked_feature_nodes=[1])
        np.testing.assert_array_equal(plan.node_class, [CLASS_E, CLASS_B, CLASS_N])

    def test_original_untouched(self, planted):
        before = planted.features.copy()
        apply_masks(planted, sample_masks(planted, 0.5, 0.5, seed=0))
        np.testing.assert_array_equal(planted.features, before)

    def test_invariants(self, planted):
        plan = sample_masks(planted, 0.4, 0.4, seed=4)
        mg = apply_masks(planted, plan)
        kept = set(map(tuple, mg.adjacency_edges.tolist()))
        assert kept == planted.edge_set() - set(map(tuple, plan.masked_edges.tolist()))
        zero_rows = ~mg.features.any(axis=1)
        expected = np.isin(np.arange(planted.num_nodes), plan.masked_feature_nodes) | ~planted.features.any(axis=1)
        np.testing.assert_array_equal(zero_rows, expected)

    def test_symmetric_removal(self, planted):
        plan = sample_masks(planted, 0.3, 0.0, seed=5)
        dst, src = attention_index(apply_masks(planted, plan).adjacency_edges, planted.num_nodes)
        pairs = set(zip(dst.tolist(), src.tolist()))
        for i, j in plan.masked_edges.tolist():
            assert (i, j) not in pairs and (j, i) not in pairs

    def test_node_count_mismatch(self, path3, planted):
        with pytest.raises(ValueError):
            apply_masks(path3, sample_masks(planted, 0.1, 0.1, seed=0))

    def test_foreign_edge(self, path3):
        with pytest.raises(ValueError, match="not an edge"):
            make_plan(path3, masked_edges=[(0, 2)])

    def test_unmasked_is_identity(self, planted):
        mg = unmasked(planted)
        np.testing.assert_array_equal(mg.adjacency_edges, planted.edges)
        np.testing.assert_array_equal(mg.features, planted.features)
