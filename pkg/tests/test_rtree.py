"""Reasoning tree tests: protocol, legality, encoding, and a fuzz sweep."""

import json
import random

import pytest

from eqsearch.metrics.features import FeatureVector
from eqsearch.rtree import (
    Backtrack,
    IllegalAction,
    ProgramStore,
    ProtocolError,
    Select,
    new_tree,
)

ROOT_FV = FeatureVector(1, 1, 0.5, 0.5, 0.5, 0.5, 0.5)


def fv(sim: float = 0.5) -> FeatureVector:
    return FeatureVector(1, 1, sim, sim, sim, 0.5, 0.5)


def batch(n: int):
    return [(fv(0.1 * (i + 1) % 1.0), f"p{i}") for i in range(n)]


class TestProgramStore:
    def test_add_get_roundtrip(self):
        store = ProgramStore()
        ref = store.add("x = 1")
        assert store.get(ref) == "x = 1"
        assert ref in store

    def test_refs_unique(self):
        store = ProgramStore()
        assert store.add("a") != store.add("a")


class TestProtocol:
    def test_new_tree_state(self):
        tree = new_tree(ROOT_FV, "root")
        assert len(tree) == 1
        assert tree.cursor == tree.root == 0
        assert tree.node(0).explored

    def test_backtrack_at_root_illegal(self):
        tree = new_tree(ROOT_FV, "root")
        with pytest.raises(IllegalAction):
            tree.apply_action(Backtrack())

    def test_select_without_children_illegal(self):
        tree = new_tree(ROOT_FV, "root")
        with pytest.raises(IllegalAction):
            tree.apply_action(Select(0))

    def test_expand_off_cursor_rejected(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(2))
        with pytest.raises(ProtocolError):
            tree.add_candidates(1, batch(2))

    def test_empty_batch_rejected(self):
        tree = new_tree(ROOT_FV, "root")
        with pytest.raises(ProtocolError):
            tree.add_candidates(0, [])

    def test_select_moves_cursor_and_marks_explored(self):
        tree = new_tree(ROOT_FV, "root")
        ids = tree.add_candidates(0, batch(3))
        moved = tree.apply_action(Select(1))
        assert moved == ids[1]
        assert tree.cursor == ids[1]
        assert tree.node(ids[1]).explored
        assert not tree.node(ids[0]).explored

    def test_select_indexes_unexplored_order(self):
        # after exploring child 0, Select(0) targets the next unexplored child
        tree = new_tree(ROOT_FV, "root")
        ids = tree.add_candidates(0, batch(3))
        tree.apply_action(Select(0))
        tree.apply_action(Backtrack())
        assert tree.apply_action(Select(0)) == ids[1]

    def test_select_out_of_range(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(2))
        with pytest.raises(IllegalAction):
            tree.apply_action(Select(2))
        with pytest.raises(IllegalAction):
            tree.apply_action(Select(-1))

    def test_backtrack_returns_to_parent(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(2))
        tree.apply_action(Select(0))
        assert tree.apply_action(Backtrack()) == 0

    def test_legal_actions_ordering(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(2))
        assert tree.legal_actions() == [Select(0), Select(1)]
        tree.apply_action(Select(0))
        assert tree.legal_actions() == [Backtrack()]

    def test_path_to_root(self):
        tree = new_tree(ROOT_FV, "root")
        a = tree.add_candidates(0, batch(2))
        tree.apply_action(Select(0))
        b = tree.add_candidates(a[0], batch(2))
        tree.apply_action(Select(1))
        assert tree.path_to_root() == [0, a[0], b[1]]


class TestEncoding:
    def test_edge_count_and_selfloops(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(4))
        enc = tree.to_graph_encoding()
        n = len(tree)
        assert enc.node_features.shape == (n, 7)
        assert len(enc.edges) == 3 * n - 2
        for i in range(n):
            assert (i, i) in enc.edges

    def test_both_orientations_present(self):
        tree = new_tree(ROOT_FV, "root")
        ids = tree.add_candidates(0, batch(2))
        enc = tree.to_graph_encoding()
        for c in ids:
            assert (0, c) in enc.edges and (c, 0) in enc.edges

    def test_cursor_index_tracks(self):
        tree = new_tree(ROOT_FV, "root")
        ids = tree.add_candidates(0, batch(2))
        tree.apply_action(Select(1))
        assert tree.to_graph_encoding().cursor_index == ids[1]

    def test_feature_rows_match_nodes(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(3))
        enc = tree.to_graph_encoding()
        for i, node in enumerate(tree.nodes):
            assert tuple(enc.node_features[i]) == node.features.as_tuple()

    def test_dump_json_roundtrip(self):
        tree = new_tree(ROOT_FV, "root")
        tree.add_candidates(0, batch(2))
        tree.apply_action(Select(0))
        data = json.loads(tree.dump_json())
        assert data["cursor"] == tree.cursor
        assert len(data["nodes"]) == len(tree)
        assert data["nodes"][1]["parent"] == 0


class TestFuzz:
    def test_1000_random_sequences_preserve_invariants(self):
        rng = random.Random(20240817)
        for trial in range(1000):
            tree = new_tree(ROOT_FV, "root")
            for _ in range(rng.randrange(1, 25)):
                if rng.random() < 0.5 and not tree.unexplored_children(tree.cursor):
                    tree.add_candidates(tree.cursor, batch(rng.randrange(1, 5)))
                legal = tree.legal_actions()
                if not legal:
                    break
                action = legal[rng.randrange(len(legal))]
                tree.apply_action(action)

                # invariants
                assert tree.node(tree.cursor).explored
                assert 0 <= tree.cursor < len(tree)
                assert tree.path_to_root()[0] == tree.root
                for i, node in enumerate(tree.nodes):
                    for c in node.children:
                        assert tree.node(c).parent == i
                    if node.explored and node.parent is not None:
                        assert tree.node(node.parent).explored
                enc = tree.to_graph_encoding()
                assert len(enc.edges) == 3 * len(tree) - 2
