"""Subject-program parsing into a light AST representation.

The subject language is Python; parsing goes through the stdlib ``ast``
module and the result is flattened into an index-based tree that the
similarity metrics can walk cheaply.  Expression-context markers
(Load/Store/Del) are dropped because they carry no syntactic information.
"""

from __future__ import annotations

import ast as pyast
from dataclasses import dataclass, field
from typing import Optional

_CONTEXT_KINDS = (pyast.Load, pyast.Store, pyast.Del)


@dataclass
class AstNode:
    kind: str
    span: tuple[int, int]
    children: list[int] = field(default_factory=list)
    leaf_text: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class Ast:
    """Flattened syntax tree; node 0 is always the Module root."""

    nodes: list[AstNode]
    root: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def top_level_statement_count(self) -> int:
        return len(self.nodes[self.root].children)


@dataclass
class SyntaxFailure:
    message: str


def _line_offsets(source: str) -> list[int]:
    offsets = [0]
    for line in source.splitlines(keepends=True):
        offsets.append(offsets[-1] + len(line))
    return offsets


def _leaf_text(node: pyast.AST) -> Optional[str]:
    if isinstance(node, pyast.Name):
        return node.id
    if isinstance(node, pyast.Constant):
        return repr(node.value)
    if isinstance(node, pyast.arg):
        return node.arg
    if isinstance(node, (pyast.Attribute,)):
        return node.attr
    if isinstance(node, pyast.alias):
        return node.name
    return None


def parse_subject(source: str) -> Ast | SyntaxFailure:
    """Parse a subject program, returning a flattened Ast or SyntaxFailure.

    Empty or whitespace-only input parses to a Module with an empty body;
    syntactic validity is defined purely by grammar acceptance.
    """
    try:
        module = pyast.parse(source)
    except (SyntaxError, ValueError, MemoryError, RecursionError) as exc:
        return SyntaxFailure(str(exc))

    offsets = _line_offsets(source)
    nodes: list[AstNode] = []

    def char_span(node: pyast.AST, fallback: tuple[int, int]) -> tuple[int, int]:
        if getattr(node, "lineno", None) is None or node.end_lineno is None:
            return fallback
        start = offsets[node.lineno - 1] + node.col_offset
        end = offsets[node.end_lineno - 1] + node.end_col_offset
        return (start, end)

    def build(node: pyast.AST, parent_span: tuple[int, int]) -> int:
        span = char_span(node, parent_span)
        idx = len(nodes)
        nodes.append(AstNode(kind=type(node).__name__, span=span))
        for child in pyast.iter_child_nodes(node):
            if isinstance(child, _CONTEXT_KINDS):
                continue
            nodes[idx].children.append(build(child, span))
        if not nodes[idx].children:
            nodes[idx].leaf_text = _leaf_text(node)
        return idx

    build(module, (0, len(source)))
    return Ast(nodes=nodes)


def check_syntax(source: str) -> int:
    """1 iff the grammar accepts the source, else 0."""
    return 1 if isinstance(parse_subject(source), Ast) else 0
