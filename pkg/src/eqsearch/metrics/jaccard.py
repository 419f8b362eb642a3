"""Transformation granularity via AST node-set overlap."""

from __future__ import annotations

from collections import Counter

from .parsing import Ast, parse_subject


def _node_descriptors(source: str) -> Counter:
    tree = parse_subject(source)
    if not isinstance(tree, Ast):
        return Counter()
    return Counter(
        (node.kind, node.leaf_text if node.is_leaf else None) for node in tree.nodes
    )


def jaccard_ast(p: str, q: str) -> float:
    """Multiset Jaccard index of the two programs' AST node descriptors.

    An unparseable side contributes the empty multiset; two empty multisets
    give 1.0.  Higher values mean a finer-grained difference.
    """
    pc = _node_descriptors(p)
    qc = _node_descriptors(q)
    keys = set(pc) | set(qc)
    inter = sum(min(pc[k], qc[k]) for k in keys)
    union = sum(max(pc[k], qc[k]) for k in keys)
    if union == 0:
        return 1.0
    return inter / union
