import numpy as np
import pytest

from subcr import rng
from subcr.diffusion import compute_ppr, sparsify_topk
from subcr.errors import ConfigError
from subcr.graph import build_graph
from subcr.sampling import (ViewPairBatch, _rwr_sample_many, build_view_pair,
                            epoch_batches, make_batch, rwr_sample, step_budget)
from subcr.synth import community_graph

from conftest import random_graph


@pytest.fixture(scope="module")
def graph():
    return community_graph(num_nodes=120, num_features=8, num_communities=4,
                           p_within=0.12, seed=1)


@pytest.fixture(scope="module")
def diffusion(graph):
    return compute_ppr(graph, alpha=0.15)


class TestWalk:
    def test_p1_is_target(self, graph):
        out = rwr_sample(graph, 7, 1, 0.1, rng.stream(0, rng.TRAIN_SAMPLE))
        assert out.tolist() == [7]

    def test_two_node_graph_collects_both(self):
        g = build_graph([(0, 1)], np.ones((2, 1)))
        out = rwr_sample(g, 0, 2, 0.1, rng.stream(3, rng.TRAIN_SAMPLE))
        assert out.tolist() == [0, 1]

    def test_isolated_target_pads(self):
        g = build_graph([(0, 1)], np.ones((3, 1)))
        out = rwr_sample(g, 2, 4, 0.1, rng.stream(0, rng.TRAIN_SAMPLE))
        assert out.tolist() == [2, 2, 2, 2]

    def test_restart_prob_one_never_leaves(self, graph):
        out = rwr_sample(graph, 5, 4, 1.0, rng.stream(0, rng.TRAIN_SAMPLE))
        assert out.tolist() == [5, 5, 5, 5]

    def test_target_first_and_length(self, graph):
        for t in (0, 17, 63):
            out = rwr_sample(graph, t, 4, 0.1,
                             rng.stream(9, rng.TRAIN_SAMPLE, unit=t))
            assert out[0] == t
            assert len(out) == 4

    def test_distinct_when_reachable(self, graph):
        out = rwr_sample(graph, 3, 4, 0.1, rng.stream(2, rng.TRAIN_SAMPLE))
        assert len(np.unique(out)) == 4

    def test_same_stream_reproduces(self, graph):
        a = rwr_sample(graph, 11, 4, 0.1, rng.stream(5, rng.TRAIN_SAMPLE, 2, 11))
        b = rwr_sample(graph, 11, 4, 0.1, rng.stream(5, rng.TRAIN_SAMPLE, 2, 11))
        assert np.array_equal(a, b)

    def test_vectorized_matches_scalar_walks(self, graph):
        targets = np.arange(40)
        budget = step_budget(graph, 4)
        many = _rwr_sample_many(graph, targets, 4, 0.1, seed=7,
                                purpose=rng.TRAIN_SAMPLE, round_index=3,
                                budget=budget)
        for t in targets:
            one = rwr_sample(graph, int(t), 4, 0.1,
                             rng.stream(7, rng.TRAIN_SAMPLE, 3, int(t)),
                             budget=budget)
            assert np.array_equal(many[t], one), f"target {t}"

    def test_bad_params_rejected(self, graph):
        with pytest.raises(ConfigError):
            rwr_sample(graph, 0, 0, 0.1, rng.stream(0, rng.TRAIN_SAMPLE))
        with pytest.raises(ConfigError):
            rwr_sample(graph, 0, 4, 0.0, rng.stream(0, rng.TRAIN_SAMPLE))


class TestViewPair:
    def test_two_node_views(self):
        g = build_graph([(0, 1)], np.array([[1.0, 2.0], [3.0, 4.0]]))
        s = compute_ppr(g, alpha=0.15)
        local, global_ = build_view_pair(g, s, [0, 1])
        assert np.allclose(local.adjacency, 0.5)
        assert np.max(np.abs(global_.adjacency - s.matrix)) < 1e-15
        assert local.attributes[0].tolist() == [0.0, 0.0]
        assert global_.attributes[0].tolist() == [0.0, 0.0]
        assert local.attributes[1].tolist() == [3.0, 4.0]

    def test_padded_duplicates_degenerate_to_self_loop(self):
        g = build_graph([(0, 1)], np.ones((3, 2)))
        s = compute_ppr(g, alpha=0.15)
        local, global_ = build_view_pair(g, s, [2, 2])
        assert np.array_equal(local.adjacency, np.eye(2))
        assert np.allclose(global_.adjacency, s.matrix[2, 2])

    def test_local_blocks_symmetric_unit_range(self, graph, diffusion):
        ids = rwr_sample(graph, 9, 4, 0.1, rng.stream(1, rng.TRAIN_SAMPLE))
        local, _ = build_view_pair(graph, diffusion, ids)
        assert np.array_equal(local.adjacency, local.adjacency.T)
        assert local.adjacency.min() >= 0
        assert local.adjacency.max() <= 1.0


class TestBatch:
    def test_rotation_negatives(self, graph, diffusion):
        batch = make_batch(graph, diffusion, [4, 9, 23], 4, 0.1, seed=2)
        nid, nloc, nglo, nmask = batch.negative_arrays()
        assert np.array_equal(nid, batch.node_ids[[1, 2, 0]])
        assert np.array_equal(nloc, batch.local_adj[[1, 2, 0]])
        assert np.array_equal(nglo, batch.global_adj[[1, 2, 0]])
        assert np.array_equal(nmask, batch.masked_attrs[[1, 2, 0]])
        # negative slot heads differ from their paired targets
        assert (nid[:, 0] != batch.targets).all()

    def test_b2_rotation(self, graph, diffusion):
        batch = make_batch(graph, diffusion, [4, 9], 4, 0.1, seed=2)
        nid, _, _, _ = batch.negative_arrays()
        assert nid[0, 0] == 9 and nid[1, 0] == 4

    def test_shared_node_sets_across_views(self, graph, diffusion):
        batch = make_batch(graph, diffusion, np.arange(10), 4, 0.1, seed=3)
        for b in range(10):
            lv = batch.view("local", b)
            gv = batch.view("global", b)
            assert np.array_equal(lv.node_ids, gv.node_ids)
            assert lv.node_ids[0] == batch.targets[b]

    def test_masking_and_unmasked_rows(self, graph, diffusion):
        batch = make_batch(graph, diffusion, [1, 2, 3], 4, 0.1, seed=4)
        assert (batch.masked_attrs[:, 0, :] == 0).all()
        assert np.array_equal(batch.target_attrs,
                              graph.attributes[[1, 2, 3]])

    def test_determinism(self, graph, diffusion):
        a = make_batch(graph, diffusion, np.arange(20), 4, 0.1, seed=5,
                       round_index=2)
        b = make_batch(graph, diffusion, np.arange(20), 4, 0.1, seed=5,
                       round_index=2)
        assert np.array_equal(a.node_ids, b.node_ids)
        assert np.array_equal(a.local_adj, b.local_adj)
        assert a.rng_stream == b.rng_stream

    def test_batch_independence_of_grouping(self, graph, diffusion):
        whole = make_batch(graph, diffusion, np.arange(12), 4, 0.1, seed=6)
        part = make_batch(graph, diffusion, np.arange(6, 12), 4, 0.1, seed=6)
        assert np.array_equal(whole.node_ids[6:], part.node_ids)

    def test_round_index_changes_samples(self, graph, diffusion):
        a = make_batch(graph, diffusion, np.arange(30), 4, 0.1, seed=5,
                       round_index=0)
        b = make_batch(graph, diffusion, np.arange(30), 4, 0.1, seed=5,
                       round_index=1)
        assert not np.array_equal(a.node_ids, b.node_ids)

    def test_batch_of_one_rejected(self, graph, diffusion):
        with pytest.raises(ConfigError, match="at least 2"):
            make_batch(graph, diffusion, [3], 4, 0.1, seed=0)

    def test_sparse_diffusion_blocks_match_dense(self, graph, diffusion):
        sparse = sparsify_topk(diffusion, graph.num_nodes)  # no-op values
        truncated = sparsify_topk(diffusion, 64)
        a = make_batch(graph, diffusion, np.arange(8), 4, 0.1, seed=7)
        b = make_batch(graph, truncated, np.arange(8), 4, 0.1, seed=7)
        assert np.array_equal(a.node_ids, b.node_ids)
        kept = b.global_adj != 0
        assert np.allclose(a.global_adj[kept], b.global_adj[kept])

    def test_fresh_negatives(self, graph, diffusion):
        a = make_batch(graph, diffusion, np.arange(10), 4, 0.1, seed=8,
                       negative_mode="fresh")
        b = make_batch(graph, diffusion, np.arange(10), 4, 0.1, seed=8,
                       negative_mode="fresh")
        nid, nloc, nglo, nmask = a.negative_arrays()
        assert (nid[:, 0] != a.targets).all()
        assert nloc.shape == a.local_adj.shape
        assert (nmask[:, 0, :] == 0).all()
        bid, _, _, _ = b.negative_arrays()
        assert np.array_equal(nid, bid)

    def test_unknown_negative_mode(self, graph, diffusion):
        with pytest.raises(ConfigError, match="negative_mode"):
            make_batch(graph, diffusion, [1, 2], 4, 0.1, seed=0,
                       negative_mode="nope")


class TestEpochBatches:
    def test_partition_covers_all_nodes(self):
        chunks = epoch_batches(100, 32, seed=1, epoch=0)
        joined = np.concatenate(chunks)
        assert sorted(joined.tolist()) == list(range(100))
        assert [len(c) for c in chunks] == [32, 32, 32, 4]

    def test_trailing_singleton_borrows(self):
        chunks = epoch_batches(7, 3, seed=1, epoch=0)
        assert [len(c) for c in chunks] == [3, 2, 2]

    def test_deterministic_and_epoch_dependent(self):
        a = epoch_batches(50, 16, seed=2, epoch=3)
        b = epoch_batches(50, 16, seed=2, epoch=3)
        c = epoch_batches(50, 16, seed=2, epoch=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[0], c[0])

    def test_single_batch_when_small(self):
        chunks = epoch_batches(5, 300, seed=0, epoch=0)
        assert len(chunks) == 1 and len(chunks[0]) == 5

    def test_batch_size_one_rejected(self):
        with pytest.raises(ConfigError):
            epoch_batches(10, 1, seed=0, epoch=0)
