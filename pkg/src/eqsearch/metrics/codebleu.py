"""Code similarity scoring in the CodeBLEU style.

The score combines four sub-scores, each in [0, 1]:
  * clipped n-gram precision over lexical tokens
  * the same with language keywords up-weighted on unigrams
  * AST subtree matching with identifier text pruned
  * def-use dataflow matching with variable names abstracted to def sites

Unparseable candidates degrade gracefully: the tree-based sub-scores drop to
zero while the lexical ones are still computed, so the total never errors.
"""

from __future__ import annotations

import keyword
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .parsing import Ast, SyntaxFailure, parse_subject

_TOKEN_RE = re.compile(
    r"""
    (?P<string>[rRbBuUfF]{0,2}('''.*?'''|\"\"\".*?\"\"\"|'(?:\\.|[^'\\\n])*'|"(?:\\.|[^"\\\n])*"))
  | (?P<number>\d+\.\d*|\.\d+|\d+[jJ]?|0[xXoObB][0-9a-fA-F]+)
  | (?P<name>[A-Za-z_]\w*)
  | (?P<op>\*\*=?|//=?|<<=?|>>=?|<=|>=|==|!=|->|:=|[+\-*/%&|^=<>!~@]=?|[()\[\]{}:,;.])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize_code(source: str) -> list[str]:
    """Lexical token stream: strings, numbers, identifiers, operators.

    Comments and whitespace are discarded.  Tolerant of code that does not
    parse; anything unmatched is skipped.
    """
    out: list[str] = []
    for line in source.splitlines():
        hash_pos = _comment_start(line)
        if hash_pos is not None:
            line = line[:hash_pos]
        out.extend(m.group(0) for m in _TOKEN_RE.finditer(line))
    return out


def _comment_start(line: str):
    in_str: str | None = None
    i = 0
    while i < len(line):
        c = line[i]
        if in_str:
            if c == "\\":
                i += 2
                continue
            if c == in_str:
                in_str = None
        elif c in "'\"":
            in_str = c
        elif c == "#":
            return i
        i += 1
    return None


@dataclass
class CodeBleuConfig:
    alpha: float = 0.25
    beta: float = 0.25
    gamma: float = 0.25
    delta: float = 0.25
    max_ngram: int = 4
    keyword_weight: float = 5.0
    keyword_list: frozenset[str] = field(default_factory=lambda: frozenset(keyword.kwlist))

    def __post_init__(self):
        total = self.alpha + self.beta + self.gamma + self.delta
        if any(w < 0 for w in (self.alpha, self.beta, self.gamma, self.delta)):
            raise ValueError("component weights must be non-negative")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_precision(cand: list[str], ref: list[str], n: int) -> float | None:
    cand_counts = _ngrams(cand, n)
    total = sum(cand_counts.values())
    if total == 0:
        return None
    ref_counts = _ngrams(ref, n)
    matched = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    return matched / total


def _weighted_unigram_precision(cand, ref, keywords, kw_weight) -> float | None:
    cand_counts = Counter(cand)
    if not cand_counts:
        return None
    ref_counts = Counter(ref)
    weight = lambda tok: kw_weight if tok in keywords else 1.0
    total = sum(weight(t) * c for t, c in cand_counts.items())
    matched = sum(weight(t) * min(c, ref_counts[t]) for t, c in cand_counts.items())
    return matched / total


def _geometric_bleu(precisions: list[float | None], cand_len: int, ref_len: int) -> float:
    usable = [p for p in precisions if p is not None]
    if not usable:
        return 0.0
    if any(p == 0.0 for p in usable):
        return 0.0
    log_mean = sum(math.log(p) for p in usable) / len(usable)
    bp = 1.0 if cand_len >= ref_len or cand_len == 0 else math.exp(1.0 - ref_len / cand_len)
    if cand_len == 0:
        bp = 0.0 if ref_len > 0 else 1.0
    return bp * math.exp(log_mean)


def _subtree_hashes(tree: Ast) -> Counter:
    """Structural key multiset; identifier/leaf text is pruned.

    Keys are nested tuples rather than hash() values so results are stable
    across processes regardless of hash randomization.
    """
    counts: Counter = Counter()

    def visit(idx: int):
        node = tree.nodes[idx]
        key = (node.kind, tuple(visit(c) for c in node.children))
        counts[key] += 1
        return key

    visit(tree.root)
    return counts


def ast_match(candidate: Ast | SyntaxFailure, reference: Ast | SyntaxFailure) -> float:
    """Fraction of reference subtrees structurally present in the candidate."""
    if isinstance(candidate, SyntaxFailure):
        return 0.0
    if isinstance(reference, SyntaxFailure):
        return 1.0  # vacuous: no reference structure to match
    ref_counts = _subtree_hashes(reference)
    total = sum(ref_counts.values())
    if total == 0:
        return 1.0
    cand_counts = _subtree_hashes(candidate)
    matched = sum(min(c, cand_counts[h]) for h, c in ref_counts.items())
    return matched / total


def _defuse_edges(tree: Ast) -> list[int]:
    """Def-use edges as a list of def-site ordinals, one entry per use.

    A pre-order, source-ordered scan assigns each assignment target a fresh
    def ordinal; every later read of that name maps to its most recent def.
    Names read before any def (builtins, inputs) are ignored.
    """
    events: list[tuple[int, int, str, str]] = []  # (start, end, name, "def"/"use")

    # the flattened Ast drops ctx markers, so def positions are recovered
    # from node kinds: Name leaves under Assign/AugAssign/AnnAssign targets,
    # For targets and comprehension targets are defs; every other Name is a
    # use.
    nodes = tree.nodes

    def walk(idx: int, def_positions: set[int]):
        node = nodes[idx]
        if node.kind == "Name" and node.leaf_text is not None:
            events.append((node.span[0], node.span[1], node.leaf_text, "def" if idx in def_positions else "use"))
            return
        child_defs = set(def_positions)
        if node.kind in ("Assign", "AugAssign", "AnnAssign"):
            targets = node.children[:-1] if node.kind == "Assign" else node.children[:1]
            for t in targets:
                child_defs.update(_name_leaves(nodes, t))
        elif node.kind in ("For", "AsyncFor", "comprehension"):
            if node.children:
                child_defs.update(_name_leaves(nodes, node.children[0]))
        for c in node.children:
            walk(c, child_defs)

    walk(tree.root, set())
    events.sort(key=lambda e: (e[0], e[1]))

    latest_def: dict[str, int] = {}
    n_defs = 0
    edges: list[int] = []
    for _, _, name, kind in events:
        if kind == "def":
            latest_def[name] = n_defs
            n_defs += 1
        elif name in latest_def:
            edges.append(latest_def[name])
    return edges


def _name_leaves(nodes, idx: int) -> set[int]:
    node = nodes[idx]
    if node.kind == "Name":
        return {idx}
    found: set[int] = set()
    for c in node.children:
        found |= _name_leaves(nodes, c)
    return found


def dataflow_match(candidate: Ast | SyntaxFailure, reference: Ast | SyntaxFailure) -> float:
    """Clipped match of name-abstracted def-use edges; empty reference -> 1."""
    if isinstance(reference, SyntaxFailure):
        return 1.0
    ref_edges = Counter(_defuse_edges(reference))
    total = sum(ref_edges.values())
    if total == 0:
        return 1.0
    if isinstance(candidate, SyntaxFailure):
        return 0.0
    cand_edges = Counter(_defuse_edges(candidate))
    matched = sum(min(c, cand_edges[e]) for e, c in ref_edges.items())
    return matched / total


def codebleu_components(candidate: str, reference: str, cfg: CodeBleuConfig | None = None) -> dict:
    cfg = cfg or CodeBleuConfig()
    cand_toks = tokenize_code(candidate)
    ref_toks = tokenize_code(reference)

    precisions = [
        _clipped_precision(cand_toks, ref_toks, n) for n in range(1, cfg.max_ngram + 1)
    ]
    ngram = _geometric_bleu(precisions, len(cand_toks), len(ref_toks))
    weighted = _geometric_bleu(
        [_weighted_unigram_precision(cand_toks, ref_toks, cfg.keyword_list, cfg.keyword_weight)]
        + precisions[1:],
        len(cand_toks),
        len(ref_toks),
    )

    cand_tree = parse_subject(candidate)
    ref_tree = parse_subject(reference)
    syntax = ast_match(cand_tree, ref_tree)
    dataflow = dataflow_match(cand_tree, ref_tree)
    return {"ngram": ngram, "weighted_ngram": weighted, "ast": syntax, "dataflow": dataflow}


def codebleu(candidate: str, reference: str, cfg: CodeBleuConfig | None = None) -> float:
    """CodeBLEU-style similarity in [0, 100]."""
    cfg = cfg or CodeBleuConfig()
    c = codebleu_components(candidate, reference, cfg)
    score = (
        cfg.alpha * c["ngram"]
        + cfg.beta * c["weighted_ngram"]
        + cfg.gamma * c["ast"]
        + cfg.delta * c["dataflow"]
    )
    return 100.0 * score
