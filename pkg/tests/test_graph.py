import math

import numpy as np
import pytest

from core.errors import (
    EdgeNotFoundError,
    InvalidScoreError,
    NodeWithFewerThanDCandidatesError,
    PreconditionViolatedError,
    ZeroIdealDcgError,
)
from core.graph import (
    NodeLabel,
    RankDiscount,
    RecommendationList,
    RelevanceStore,
    apply_rewiring,
    build_top_d_graph,
    dcg,
    quality_loss,
    revert_rewiring,
    slot_quality,
    transition_probability,
    unreachable_harmful,
    validate_discount,
    validate_graph,
)
from core.rewire import RewiringOp, make_op

H = NodeLabel.HARMFUL
N = NodeLabel.NEUTRAL


class TestRankDiscount:
    def test_uniform(self):
        discount = RankDiscount.create("uniform", 4)
        assert discount.d == 4
        assert all(discount.p(r) == 0.25 for r in range(1, 5))

    def test_inverse_log_follows_dcg_weights(self):
        discount = RankDiscount.create("invlog", 3)
        weights = np.array([1 / 2, 1 / (1 + math.log2(3)), 1 / 3])
        np.testing.assert_allclose(discount.table, weights / weights.sum(), rtol=1e-12)
        np.testing.assert_allclose(discount.table, [0.40977, 0.31704, 0.27318], atol=5e-5)
        assert discount.table.sum() == pytest.approx(1.0, abs=1e-12)
        assert (np.diff(discount.table) < 0).all()

    def test_aliases(self):
        assert validate_discount("Inverse-Log") == "invlog"
        assert validate_discount("FLAT") == "uniform"
        assert validate_discount("") == "uniform"
        with pytest.raises(ValueError, match="Unsupported discount"):
            validate_discount("zipf")

    def test_rejects_zero_d(self):
        with pytest.raises(ValueError):
            RankDiscount.create("uniform", 0)


class TestRelevanceStore:
    def test_lookup_and_absent_pairs(self):
        store = RelevanceStore.from_triples(3, [0, 0, 1], [1, 2, 0], [0.5, 0.25, 1.0])
        assert store.nnz == 3
        assert store.score(0, 2) == 0.25
        assert store.score(2, 0) == 0.0
        ids, scores = store.row(0)
        assert list(ids) == [1, 2]

    def test_rejects_out_of_range_scores(self):
        with pytest.raises(InvalidScoreError):
            RelevanceStore.from_triples(2, [0], [1], [1.2])

    def test_rejects_nan_scores(self):
        with pytest.raises(InvalidScoreError):
            RelevanceStore.from_triples(2, [0], [1], [float("nan")])

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidScoreError, match="Duplicate"):
            RelevanceStore.from_triples(2, [0, 0], [1, 1], [0.2, 0.3])

    def test_drops_self_pairs(self):
        store = RelevanceStore.from_triples(2, [0, 0], [0, 1], [0.9, 0.3])
        assert store.nnz == 1
        assert store.score(0, 0) == 0.0


class TestTopDGraph:
    def test_lists_are_score_descending_with_id_ties(self):
        store = RelevanceStore.from_triples(
            4, [0, 0, 0, 1, 1, 2, 2, 3, 3], [3, 2, 1, 0, 2, 0, 1, 0, 1],
            [0.5, 0.5, 0.9, 1.0, 1.0, 0.3, 0.2, 0.1, 0.1],
        )
        graph = build_top_d_graph(store, [H, H, N, N], 2, RankDiscount.uniform(2))
        assert graph.lists[0].tolist() == [1, 2]
        assert graph.lists[1].tolist() == [0, 2]
        np.testing.assert_array_equal(graph.scores[0], [0.9, 0.5])

    def test_too_few_candidates(self):
        store = RelevanceStore.from_triples(3, [0, 1, 2], [1, 2, 0], [0.5, 0.5, 0.5])
        with pytest.raises(NodeWithFewerThanDCandidatesError) as error:
            build_top_d_graph(store, [H, N, N], 2, RankDiscount.uniform(2))
        assert error.value.node == 0

    def test_zero_scores_are_not_candidates(self):
        store = RelevanceStore.from_triples(3, [0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1],
                                            [0.5, 0.0, 0.5, 0.5, 0.5, 0.5])
        with pytest.raises(NodeWithFewerThanDCandidatesError):
            build_top_d_graph(store, [H, N, N], 2, RankDiscount.uniform(2))

    def test_discount_must_match_d(self):
        store = RelevanceStore.from_triples(2, [0, 1], [1, 0], [0.5, 0.5])
        with pytest.raises(ValueError, match="ranks"):
            build_top_d_graph(store, [H, N], 1, RankDiscount.uniform(2))

    def test_rank_and_probability(self, two_slot_graph):
        graph, _ = two_slot_graph
        assert graph.rank_of(0, 2) == 2
        assert transition_probability(graph, 0, 2) == 0.5
        with pytest.raises(EdgeNotFoundError):
            graph.rank_of(0, 3)
        assert graph.in_degrees().tolist() == [2, 2, 2, 2]
        assert graph.edge_count() == 8


class TestQuality:
    def test_dcg_of_two_slot_list(self):
        store = RelevanceStore.from_triples(3, [0, 0], [1, 2], [0.9, 0.8])
        value = dcg(RecommendationList(0, np.array([1, 2]), np.array([0.9, 0.8])), store)
        assert value == pytest.approx(0.9 / 2 + 0.8 / (1 + math.log2(3)), rel=1e-12)
        assert value == pytest.approx(0.75948, abs=1e-5)

    def test_quality_loss_after_swap(self, two_slot_graph):
        graph, relevance = two_slot_graph
        # 0 would replace item 1 (0.9) by item 3 (0.7) at rank 1
        rewired = RecommendationList(0, np.array([3, 2]), np.array([0.7, 0.8]))
        loss = quality_loss(rewired, graph, relevance)
        expected = (0.7 / 2 + 0.8 / (1 + math.log2(3))) / (0.9 / 2 + 0.8 / (1 + math.log2(3)))
        assert loss == pytest.approx(expected, rel=1e-12)
        assert slot_quality(graph, 0, 1, 0.7) == pytest.approx(expected, rel=1e-12)
        assert slot_quality(graph, 0) == 1.0

    def test_equal_scores_keep_full_quality(self, two_slot_graph):
        graph, _ = two_slot_graph
        assert slot_quality(graph, 0, 1, 0.9) == 1.0

    def test_zero_ideal(self, graph_factory):
        graph = graph_factory([[1], [0]], [H, N], scores=np.zeros((2, 1)))
        with pytest.raises(ZeroIdealDcgError):
            slot_quality(graph, 0)


class TestRewiring:
    def test_apply_and_revert(self, two_slot_graph):
        graph, relevance = two_slot_graph
        original = graph.copy()
        op = make_op(graph, 0, 1, 3, relevance.score(0, 3))
        apply_rewiring(graph, op)
        assert graph.lists[0].tolist() == [3, 2]
        assert graph.scores[0, 0] == 0.7
        revert_rewiring(graph, op)
        np.testing.assert_array_equal(graph.lists, original.lists)
        np.testing.assert_array_equal(graph.scores, original.scores)

    @pytest.mark.parametrize(
        "op, check",
        [
            (RewiringOp(2, 3, 0, 0.5, 1), "source_harmful"),
            (RewiringOp(0, 3, 2, 0.5, 1), "edge_present"),
            (RewiringOp(0, 2, 3, 0.5, 2), "target_harmful"),
            (RewiringOp(0, 1, 1, 0.5, 1), "insert_neutral"),
            (RewiringOp(1, 0, 3, 0.5, 1), "insert_absent"),
            (RewiringOp(0, 1, 3, 0.5, 2), "rank_match"),
            (RewiringOp(0, 1, 3, 0.4, 1), "probability_match"),
            (RewiringOp(0, 1, 9, 0.5, 1), "node_range"),
        ],
    )
    def test_preconditions(self, two_slot_graph, op, check):
        graph, _ = two_slot_graph
        with pytest.raises(PreconditionViolatedError) as error:
            apply_rewiring(graph, op)
        assert error.value.check == check


class TestValidation:
    def test_valid_graph(self, two_slot_graph):
        graph, _ = two_slot_graph
        report = validate_graph(graph)
        assert report.ok
        assert report.reachable
        assert report.to_dict()["problems"] == []

    def test_unreachable_component(self, graph_factory):
        # 0 and 1 only recommend each other
        graph = graph_factory([[1], [0], [0]], [H, H, N])
        assert unreachable_harmful(graph) == [0, 1]
        report = validate_graph(graph)
        assert not report.ok
        assert report.unreachable == [0, 1]

    def test_zero_probability_rank_does_not_reach(self, graph_factory):
        graph = graph_factory([[1, 2], [0, 2], [0, 1]], [H, H, N])
        graph.discount = RankDiscount("custom", np.array([1.0, 0.0]))
        assert unreachable_harmful(graph) == [0, 1]

    def test_structural_problems(self, graph_factory):
        graph = graph_factory([[0, 1], [2, 2], [0, 1]], [H, H, N])
        report = validate_graph(graph)
        assert report.self_loops == [0]
        assert report.duplicate_items == [1]
        assert not report.ok

    def test_probability_drift(self, graph_factory):
        graph = graph_factory([[1, 2], [0, 2], [0, 1]], [H, H, N])
        graph.discount = RankDiscount("custom", np.array([0.6, 0.5]))
        report = validate_graph(graph)
        assert report.probability_drift
        assert report.discount_increasing is False
        assert not report.ok

    def test_increasing_table_is_flagged(self, graph_factory):
        graph = graph_factory([[1, 2], [0, 2], [0, 1]], [H, H, N])
        graph.discount = RankDiscount("custom", np.array([0.4, 0.6]))
        assert validate_graph(graph).discount_increasing
