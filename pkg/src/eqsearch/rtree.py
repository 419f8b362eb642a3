"""Lazily grown reasoning tree with an exploration cursor.

Nodes hold feature vectors only; program texts live in a separate store
keyed by ``program_ref``.  The tree is exported to the graph network as a
dense feature matrix plus a directed edge list (both orientations of every
tree edge, plus self-loops).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .metrics.features import FeatureVector

NodeId = int


class ProtocolError(Exception):
    """Tree mutation attempted out of protocol (e.g. expanding a non-cursor node)."""


class IllegalAction(Exception):
    pass


@dataclass(frozen=True)
class Backtrack:
    pass


@dataclass(frozen=True)
class Select:
    k: int  # index into the cursor's unexplored children, candidate order


Action = Union[Backtrack, Select]


@dataclass
class TreeNode:
    features: FeatureVector
    parent: Optional[NodeId]
    program_ref: str
    children: list[NodeId] = field(default_factory=list)
    explored: bool = False


class ProgramStore:
    """Append-only mapping of program refs to source texts."""

    def __init__(self):
        self._programs: dict[str, str] = {}
        self._counter = 0

    def add(self, source: str) -> str:
        ref = f"p{self._counter}"
        self._counter += 1
        self._programs[ref] = source
        return ref

    def get(self, ref: str) -> str:
        return self._programs[ref]

    def __contains__(self, ref: str) -> bool:
        return ref in self._programs


@dataclass
class GraphEncoding:
    node_features: np.ndarray  # (num_nodes, 7) float64
    edges: list[tuple[int, int]]  # directed (src, dst)
    cursor_index: int


class ReasoningTree:
    def __init__(self, root_features: FeatureVector, root_program_ref: str):
        self.nodes: list[TreeNode] = [
            TreeNode(features=root_features, parent=None, program_ref=root_program_ref, explored=True)
        ]
        self.root: NodeId = 0
        self.cursor: NodeId = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, nid: NodeId) -> TreeNode:
        return self.nodes[nid]

    def unexplored_children(self, nid: NodeId) -> list[NodeId]:
        return [c for c in self.nodes[nid].children if not self.nodes[c].explored]

    def add_candidates(
        self, at: NodeId, candidates: list[tuple[FeatureVector, str]]
    ) -> list[NodeId]:
        """Append a batch of candidate children under the cursor node."""
        if at != self.cursor:
            raise ProtocolError(f"expansion at node {at} but cursor is {self.cursor}")
        if not candidates:
            raise ProtocolError("candidate batch must be non-empty")
        new_ids = []
        for features, ref in candidates:
            nid = len(self.nodes)
            self.nodes.append(TreeNode(features=features, parent=at, program_ref=ref))
            self.nodes[at].children.append(nid)
            new_ids.append(nid)
        return new_ids

    def legal_actions(self) -> list[Action]:
        """[Backtrack?] followed by Select(k) per unexplored child, in order."""
        actions: list[Action] = []
        if self.cursor != self.root:
            actions.append(Backtrack())
        actions.extend(Select(k) for k in range(len(self.unexplored_children(self.cursor))))
        return actions

    def apply_action(self, action: Action) -> NodeId:
        if isinstance(action, Backtrack):
            if self.cursor == self.root:
                raise IllegalAction("backtracking is disabled at the root")
            self.cursor = self.nodes[self.cursor].parent
            return self.cursor
        unexplored = self.unexplored_children(self.cursor)
        if not 0 <= action.k < len(unexplored):
            raise IllegalAction(f"Select({action.k}) with {len(unexplored)} unexplored children")
        target = unexplored[action.k]
        self.nodes[target].explored = True
        self.cursor = target
        return target

    def path_to_root(self, nid: Optional[NodeId] = None) -> list[NodeId]:
        """Node ids from the root down to ``nid`` (default: cursor)."""
        nid = self.cursor if nid is None else nid
        path = []
        cur: Optional[NodeId] = nid
        while cur is not None:
            path.append(cur)
            cur = self.nodes[cur].parent
        return list(reversed(path))

    def to_graph_encoding(self) -> GraphEncoding:
        n = len(self.nodes)
        features = np.empty((n, 7), dtype=np.float64)
        edges: list[tuple[int, int]] = []
        for i, node in enumerate(self.nodes):
            features[i] = node.features.as_tuple()
            edges.append((i, i))
            if node.parent is not None:
                edges.append((node.parent, i))
                edges.append((i, node.parent))
        return GraphEncoding(node_features=features, edges=edges, cursor_index=self.cursor)

    def dump(self) -> dict:
        """JSON-serializable snapshot for debugging and attention export."""
        return {
            "cursor": self.cursor,
            "nodes": [
                {
                    "id": i,
                    "parent": node.parent,
                    "features": list(node.features.as_tuple()),
                    "explored": node.explored,
                    "program_ref": node.program_ref,
                }
                for i, node in enumerate(self.nodes)
            ],
        }

    def dump_json(self) -> str:
        return json.dumps(self.dump(), indent=2)


def new_tree(root_features: FeatureVector, root_program_ref: str) -> ReasoningTree:
    return ReasoningTree(root_features, root_program_ref)
