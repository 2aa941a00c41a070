import networkx as nx
import numpy as np
import pytest

from core.absorbing import SegregationState, dense_oracle_z, graph_segregation
from core.errors import GraphValidationError, NoFeasibleTargetError
from core.gadget import build_gadget
from core.graph import NodeLabel, apply_rewiring, quality_loss
from core.rewire import (
    K_REACHED,
    OMEGA_EXHAUSTED,
    best_target,
    brute_force_k_rewiring,
    brute_force_one_rewiring,
    evaluate_delta,
    evaluate_delta_unpruned,
    generate_candidates,
    heuristic_k_rewiring,
    make_op,
    optimal_one_rewiring,
    sorted_harmful,
)

H = NodeLabel.HARMFUL
N = NodeLabel.NEUTRAL


class TestCandidates:
    def test_quality_floor_filters_operations(self, two_slot_graph):
        graph, relevance = two_slot_graph
        loose = generate_candidates(graph, relevance, 0.7)
        assert [op.key for op in loose.ops()] == [(0, 1, 3), (1, 0, 2)]
        strict = generate_candidates(graph, relevance, 0.8)
        assert [op.key for op in strict.ops()] == [(0, 1, 3)]
        assert not generate_candidates(graph, relevance, 0.9)

    def test_operation_fields(self, two_slot_graph):
        graph, relevance = two_slot_graph
        op = generate_candidates(graph, relevance, 0.7).ops()[0]
        assert (op.rank, op.p_o, op.score, op.replaced_score) == (1, 0.5, 0.7, 0.9)

    def test_tau_of_one_keeps_equal_score_swaps(self, triangle_gadget):
        gadget = triangle_gadget
        candidates = generate_candidates(gadget.graph, gadget.relevance, 1.0)
        assert len(candidates) == 2 * (3 + 3)

    @pytest.mark.parametrize("tau", [0.0, -0.1, 1.5])
    def test_tau_range(self, two_slot_graph, tau):
        graph, relevance = two_slot_graph
        with pytest.raises(ValueError):
            generate_candidates(graph, relevance, tau)

    def test_best_target_prefers_score_then_id(self, triangle_gadget):
        gadget = triangle_gadget
        assert best_target(gadget.graph, gadget.relevance, gadget.vertex_ids["a"]) == gadget.n1

    def test_no_target(self, chain):
        graph, relevance = chain
        with pytest.raises(NoFeasibleTargetError):
            best_target(graph, relevance, 1)

    def test_regenerate_after_rewiring(self, triangle_gadget):
        gadget = triangle_gadget
        graph, relevance = gadget.graph, gadget.relevance
        a = gadget.vertex_ids["a"]
        candidates = generate_candidates(graph, relevance, 0.5)
        op = make_op(graph, a, gadget.h1, gadget.n1, 1.0)
        apply_rewiring(graph, op)
        candidates.regenerate(graph, relevance, 0.5, a)
        assert [o.key for o in candidates.buckets[a]] == [(a, gadget.h2, gadget.n2)]


class TestDeltaEvaluation:
    def test_pruned_matches_unpruned(self, small_random):
        graph = small_random.graph()
        state = SegregationState.from_graph(graph, 1e-12)
        order = sorted_harmful(state)
        ops = generate_candidates(graph, small_random.relevance, 0.5).ops()
        for op in ops[:40]:
            pruned, probes = evaluate_delta(op, state, order)
            assert probes >= 1
            assert pruned == pytest.approx(evaluate_delta_unpruned(op, state), abs=1e-12)

    def test_order_breaks_ties_by_id(self, triangle_gadget):
        gadget = triangle_gadget
        state = SegregationState.from_graph(gadget.graph, 1e-12)
        order = sorted_harmful(state)
        assert order.nodes[:3].tolist() == sorted(gadget.edge_nodes)
        assert order.z[0] == 3.0


class TestOptimalOneRewiring:
    def test_matches_brute_force(self, small_random):
        graph = small_random.graph()
        relevance = small_random.relevance
        state = SegregationState.from_graph(graph, 1e-12)
        best = optimal_one_rewiring(graph, relevance, state, 0.5)
        exact = brute_force_one_rewiring(graph, relevance, 0.5)
        assert best is not None
        assert best.delta == pytest.approx(exact.delta, abs=1e-9)
        assert best.evaluated <= len(generate_candidates(graph, relevance, 0.5))

    def test_empty_candidate_set(self, two_slot_graph):
        graph, relevance = two_slot_graph
        state = SegregationState.from_graph(graph, 1e-12)
        assert optimal_one_rewiring(graph, relevance, state, 0.95) is None

    def test_two_slot_choice(self, two_slot_graph):
        graph, relevance = two_slot_graph
        state = SegregationState.from_graph(graph, 1e-12)
        best = optimal_one_rewiring(graph, relevance, state, 0.7)
        # both operations lower Z from 2 to 1.5; the smaller key wins
        assert best.op.key == (0, 1, 3)
        assert best.delta == pytest.approx(0.5)


class TestHeuristic:
    def test_triangle_gadget_trajectory(self, triangle_gadget):
        gadget = triangle_gadget
        trace = heuristic_k_rewiring(gadget.graph, gadget.relevance, 0.5, 3, tol=1e-12,
                                     timing=False)
        a, b, c = (gadget.vertex_ids[v] for v in "abc")
        assert trace.z0 == 3.0
        assert [s.z_after for s in trace.steps] == pytest.approx([3.0, 2.75, 2.5])
        assert trace.ops[0].key == (a, gadget.h1, gadget.n1)
        assert trace.ops[1].key == (b, gadget.h1, gadget.n1)
        assert trace.ops[2].key == (c, gadget.h1, gadget.n1)
        assert trace.zero_progress_steps == 1
        assert trace.terminal_reason == K_REACHED
        z, _ = graph_segregation(dense_oracle_z(gadget.graph))
        assert z == pytest.approx(2.5, abs=1e-12)

    def test_single_edge_prefers_edge_node(self):
        gadget = build_gadget(nx.Graph([("a", "b")]))
        trace = heuristic_k_rewiring(gadget.graph, gadget.relevance, 0.5, 1, tol=1e-12,
                                     timing=False)
        assert trace.final_Z == pytest.approx(2.0)
        assert trace.ops[0].u == gadget.edge_ids[("a", "b")]

    def test_matches_dense_oracle_and_keeps_quality(self, small_homophilous):
        graph = small_homophilous.graph()
        relevance = small_homophilous.relevance
        trace = heuristic_k_rewiring(graph, relevance, 0.8, 8, tol=1e-12, timing=False)
        assert trace.final_Z <= trace.z0
        assert all(later <= earlier + 1e-9 for earlier, later in
                   zip([trace.z0] + [s.z_after for s in trace.steps], [s.z_after for s in trace.steps]))
        exact, _ = graph_segregation(dense_oracle_z(graph))
        assert trace.final_Z == pytest.approx(exact, rel=1e-8)
        for u in range(graph.n):
            assert quality_loss(graph.recommendation_list(u), graph, relevance) >= 0.8
            assert len(set(graph.lists[u].tolist())) == graph.d

    def test_exhausts_candidates(self, two_slot_graph):
        graph, relevance = two_slot_graph
        trace = heuristic_k_rewiring(graph, relevance, 0.7, 10, tol=1e-12, timing=False)
        assert trace.terminal_reason == OMEGA_EXHAUSTED
        assert len(trace.steps) == 2
        assert trace.final_Z == pytest.approx(1.0)
        assert trace.ratio == pytest.approx(0.5)

    def test_k_zero(self, two_slot_graph):
        graph, relevance = two_slot_graph
        trace = heuristic_k_rewiring(graph, relevance, 0.7, 0, timing=False)
        assert trace.steps == []
        assert trace.final_Z == trace.z0

    def test_invalid_graph_is_rejected(self, graph_factory):
        graph = graph_factory([[1], [0], [0]], [H, H, N])
        with pytest.raises(GraphValidationError):
            heuristic_k_rewiring(graph, None, 0.5, 1)

    def test_timing_off_is_reproducible(self, small_random):
        first = small_random.graph()
        second = small_random.graph()
        a = heuristic_k_rewiring(first, small_random.relevance, 0.8, 4, timing=False)
        b = heuristic_k_rewiring(second, small_random.relevance, 0.8, 4, timing=False)
        assert [s.op for s in a.steps] == [s.op for s in b.steps]
        assert [s.z_after for s in a.steps] == [s.z_after for s in b.steps]
        assert all(s.wall_time_ms == 0.0 for s in a.steps)
        np.testing.assert_array_equal(first.lists, second.lists)


def test_brute_force_k_agrees_on_gadget(triangle_gadget):
    gadget = triangle_gadget
    trace = brute_force_k_rewiring(gadget.graph, gadget.relevance, 0.5, 3, tol=1e-12,
                                   timing=False)
    assert trace.final_Z == pytest.approx(2.5)
    assert trace.algorithm == "brute"
