import numpy as np
import pytest

from core.errors import InputFormatError, InvalidScoreError
from core.graph import NodeLabel, RankDiscount, build_top_d_graph, validate_graph
from core.storage import GraphRepository, load_inputs, read_labels, read_relevance, write_instance
from core.synthetic import homophilous_instance, random_instance


def write(path, text):
    path.write_text(text)
    return str(path)


class TestInputs:
    def test_labels_define_dense_ids(self, tmp_path):
        path = write(tmp_path / "labels.csv", "node,label\nx,Harmful\ny,neutral\nz, harmful\n")
        names, labels = read_labels(path)
        assert names == ["x", "y", "z"]
        assert labels.tolist() == [NodeLabel.HARMFUL, NodeLabel.NEUTRAL, NodeLabel.HARMFUL]

    def test_unknown_label(self, tmp_path):
        path = write(tmp_path / "labels.csv", "node,label\nx,toxic\n")
        with pytest.raises(InputFormatError, match="Unknown label"):
            read_labels(path)

    def test_duplicate_label_rows(self, tmp_path):
        path = write(tmp_path / "labels.csv", "node,label\nx,harmful\nx,neutral\n")
        with pytest.raises(InputFormatError):
            read_labels(path)

    def test_missing_file_and_columns(self, tmp_path):
        with pytest.raises(InputFormatError, match="not found"):
            read_labels(str(tmp_path / "absent.csv"))
        path = write(tmp_path / "labels.csv", "node,kind\nx,harmful\n")
        with pytest.raises(InputFormatError, match="missing columns"):
            read_labels(path)

    def test_relevance_maps_external_ids(self, tmp_path):
        path = write(tmp_path / "rel.csv", "src,dst,score\nx,y,0.25\ny,x,1\n")
        store = read_relevance(path, ["x", "y"])
        assert store.score(0, 1) == 0.25
        assert store.score(1, 0) == 1.0

    def test_relevance_with_unknown_node(self, tmp_path):
        path = write(tmp_path / "rel.csv", "src,dst,score\nx,q,0.25\n")
        with pytest.raises(InputFormatError, match="missing from labels"):
            read_relevance(path, ["x", "y"])

    def test_relevance_with_bad_score(self, tmp_path):
        path = write(tmp_path / "rel.csv", "src,dst,score\nx,y,high\n")
        with pytest.raises(InputFormatError, match="unparseable score"):
            read_relevance(path, ["x", "y"])
        path = write(tmp_path / "rel.csv", "src,dst,score\nx,y,1.5\n")
        with pytest.raises(InvalidScoreError):
            read_relevance(path, ["x", "y"])


class TestGraphRepository:
    def test_round_trip_keeps_lists_and_names(self, small_random, tmp_path):
        graph = small_random.graph("invlog")
        repository = GraphRepository()
        paths = repository.save(graph, str(tmp_path / "graph.csv"))
        assert paths["remap"].endswith("graph.remap.csv")

        loaded = repository.load(paths["graph"], small_random.relevance)
        np.testing.assert_array_equal(loaded.lists, graph.lists)
        np.testing.assert_array_equal(loaded.scores, graph.scores)
        np.testing.assert_array_equal(loaded.labels, graph.labels)
        np.testing.assert_array_equal(loaded.ideal_dcg, graph.ideal_dcg)
        assert loaded.discount.kind == "invlog"
        assert loaded.node_names == graph.node_names
        assert repository.node_names(paths["graph"]) == graph.node_names

    def test_dump_is_sorted_by_source_and_rank(self, two_slot_graph, tmp_path):
        graph, _ = two_slot_graph
        paths = GraphRepository().save(graph, str(tmp_path / "g.csv"))
        lines = open(paths["graph"]).read().splitlines()
        assert lines[0] == "src,dst,rank,prob,score"
        assert lines[1:3] == ["0,1,1,0.5,0.9", "0,2,2,0.5,0.8"]

    def test_repeated_slot(self, two_slot_graph, tmp_path):
        graph, _ = two_slot_graph
        paths = GraphRepository().save(graph, str(tmp_path / "g.csv"))
        text = open(paths["graph"]).read().replace("0,2,2,0.5,0.8", "0,2,1,0.5,0.8")
        write(tmp_path / "g.csv", text)
        with pytest.raises(InputFormatError, match="repeats"):
            GraphRepository().load(paths["graph"])

    def test_build_from_files(self, tmp_path):
        labels = write(tmp_path / "labels.csv", "node,label\np,harmful\nq,harmful\nr,neutral\n")
        relevance = write(tmp_path / "rel.csv",
                          "src,dst,score\np,q,0.9\np,r,0.4\nq,r,0.8\nq,p,0.1\nr,p,0.7\nr,q,0.6\n")
        names, node_labels, store = load_inputs(relevance, labels)
        graph = build_top_d_graph(store, node_labels, 1, RankDiscount.uniform(1), names)
        assert graph.lists[:, 0].tolist() == [1, 2, 0]
        assert validate_graph(graph).ok


class TestSynthetic:
    def test_instances_are_valid_and_seeded(self):
        first = random_instance(40, 3, seed=5)
        second = random_instance(40, 3, seed=5)
        assert first.relevance.nnz == second.relevance.nnz
        np.testing.assert_array_equal(first.labels, second.labels)
        assert validate_graph(first.graph()).ok

    def test_homophilous_blocks(self):
        instance = homophilous_instance(100, 4, within_block=1.0, seed=2)
        graph = instance.graph()
        assert validate_graph(graph).ok
        assert int(instance.labels.sum()) == 50

    def test_rejects_tiny_graphs(self):
        with pytest.raises(ValueError):
            random_instance(3, 3)

    def test_written_instance_reads_back(self, tmp_path):
        instance = random_instance(30, 3, seed=1)
        relevance_path, labels_path = write_instance(instance.relevance, instance.labels,
                                                     instance.names, str(tmp_path))
        names, labels, store = load_inputs(relevance_path, labels_path)
        assert names == instance.names
        np.testing.assert_array_equal(labels, instance.labels)
        assert (store.matrix != instance.relevance.matrix).nnz == 0
