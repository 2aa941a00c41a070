import networkx as nx
import numpy as np
import pytest

from core.absorbing import dense_oracle_z, graph_segregation
from core.gadget import (
    GADGET_D,
    Z_EDGE,
    Z_HUB,
    Z_VERTEX,
    Z_VERTEX_REWIRED,
    build_gadget,
    cover_operations,
    cover_structure,
    expected_edge_segregation,
    minimum_vertex_cover,
    read_edge_list,
)
from core.graph import apply_rewiring, validate_graph
from core.rewire import generate_candidates


def z_by_node(gadget):
    z = dense_oracle_z(gadget.graph)
    return {int(h): z[i] for i, h in enumerate(gadget.graph.harmful_ids)}


def test_layout(triangle_gadget):
    gadget = triangle_gadget
    graph = gadget.graph
    assert graph.d == GADGET_D
    assert graph.n == 3 + 3 + 4
    assert graph.node_names[:3] == ["v:a", "v:b", "v:c"]
    assert graph.node_names[3] == "e:a-b"
    assert graph.lists[gadget.vertex_ids["a"]].tolist() == [gadget.h1, gadget.h2]
    assert graph.lists[gadget.edge_ids[("b", "c")]].tolist() == [1, 2]
    assert graph.lists[gadget.h1].tolist() == [gadget.n1, gadget.n2]
    assert validate_graph(graph).ok


def test_initial_values(triangle_gadget):
    gadget = triangle_gadget
    z = z_by_node(gadget)
    assert z[gadget.h1] == pytest.approx(Z_HUB)
    assert all(z[v] == pytest.approx(Z_VERTEX) for v in gadget.vertex_nodes)
    assert all(z[e] == pytest.approx(Z_EDGE) for e in gadget.edge_nodes)


def test_candidate_count(triangle_gadget):
    gadget = triangle_gadget
    candidates = generate_candidates(gadget.graph, gadget.relevance, 0.9)
    assert len(candidates) == 2 * (len(gadget.vertex_nodes) + len(gadget.edge_nodes))
    assert all(op.w == gadget.n1 for op in candidates.ops())


def test_cover_operations_reach_closed_form(triangle, triangle_gadget):
    gadget = triangle_gadget
    cover = minimum_vertex_cover(triangle)
    assert cover == ["a", "b"]
    for op in cover_operations(gadget, cover):
        apply_rewiring(gadget.graph, op)
    z = z_by_node(gadget)
    for v in cover:
        assert z[gadget.vertex_ids[v]] == pytest.approx(Z_VERTEX_REWIRED)
    for e, value in expected_edge_segregation(gadget, cover).items():
        assert z[e] == pytest.approx(value, abs=1e-12)
    assert graph_segregation(np.array(list(z.values())))[0] == pytest.approx(2.75)
    assert cover_structure(triangle, cover) == {"uncovered": 0, "single": 2, "double": 1}


def test_graph_without_edges():
    source = nx.Graph()
    source.add_nodes_from(["x", "y"])
    gadget = build_gadget(source)
    z, _ = graph_segregation(dense_oracle_z(gadget.graph))
    assert z == pytest.approx(2.0)
    assert minimum_vertex_cover(source) == []


def test_rejects_directed_sources():
    with pytest.raises(ValueError):
        build_gadget(nx.DiGraph([(1, 2)]))


def test_read_edge_list(tmp_path):
    path = tmp_path / "edges.csv"
    path.write_text("src,dst\na,b\nb,c\nd,\n")
    source = read_edge_list(str(path))
    assert sorted(source.nodes) == ["a", "b", "c", "d"]
    assert source.number_of_edges() == 2
    assert minimum_vertex_cover(source) == ["b"]
