"""Offline synthetic mutator: a deterministic stand-in for an LLM.

Given the current program and the target, each batch contains several
improving candidates of increasing edit size (1, 2, 3 edits toward the
target), a sideways semantics-preserving edit, and corrupt candidates that
either break the syntax or break the semantics with a literal change.  Some
corrupt candidates are "near misses": they bundle a couple of improving
edits with a semantics-breaking literal change, which makes purely greedy
feature-chasing strategies overshoot.  Some expansions are barren (no
improving candidate at all), so committing to a large jump can strand the
search; the unexplored smaller/larger siblings left behind are what makes
backtracking worthwhile.

Improving candidates are placed early via a seeded rank bias, in ascending
edit size, emulating the mild quality ordering real LLM samples show; the
rest land uniformly.  Everything is a pure function of (config, current,
target).
"""

from __future__ import annotations

import difflib
import hashlib
import keyword
import random
import re
from dataclasses import dataclass

from .llmio import EQUIVALENCE_QUESTION, GenerationParams, extract_fenced_programs
from .metrics.parsing import check_syntax

_IDENT_RE = re.compile(r"\b[A-Za-z_]\w*\b")
_DEF_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:=[^=]|\+=|-=|\*=)|^\s*for\s+([A-Za-z_]\w*)\s+in\b", re.MULTILINE)
_NUMBER_RE = re.compile(r"(?<![\w.])\d+(?![\w.])")
_STRING_RE = re.compile(r"'[^'\n]*'|\"[^\"\n]*\"")
_COMPARISON_SWAPS = {"<": "<=", "<=": "<", ">": ">=", ">=": ">", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class SyntheticMutatorConfig:
    valid_per_step: int = 3
    corrupt_per_step: int = 7
    improving_per_step: int = 2
    seed: int = 0
    trap_per_step: int = 2
    trap_extra_edits: int = 3
    rank_bias: float = 0.97
    barren_prob: float = 0.1

    def __post_init__(self):
        if self.improving_per_step > self.valid_per_step:
            raise ValueError("improving_per_step cannot exceed valid_per_step")
        if self.trap_per_step > self.corrupt_per_step:
            raise ValueError("trap_per_step cannot exceed corrupt_per_step")


def _tokens_equal(p: str, q: str) -> bool:
    from .metrics.codebleu import tokenize_code

    return tokenize_code(p) == tokenize_code(q)


def _identifiers(source: str) -> list[str]:
    seen = []
    for m in _IDENT_RE.finditer(source):
        name = m.group(0)
        if name not in seen and not keyword.iskeyword(name):
            seen.append(name)
    return seen


def _defined_names(source: str) -> list[str]:
    names = []
    for m in _DEF_RE.finditer(source):
        name = m.group(1) or m.group(2)
        if name and name not in names:
            names.append(name)
    return names


def _rename(source: str, old: str, new: str) -> str:
    return re.sub(rf"\b{re.escape(old)}\b", new, source)


def _match_ratio(p: str, q: str) -> float:
    return difflib.SequenceMatcher(a=p.splitlines(), b=q.splitlines()).ratio()


def improving_edit(current: str, target: str) -> str:
    """One atomic edit moving `current` toward `target`.

    Tries a consistent variable rename first (one variable, applied
    everywhere); otherwise replaces the first differing line hunk with the
    target's lines.  Returns the target itself when already token-equal.
    """
    if _tokens_equal(current, target):
        return target

    base = _match_ratio(current, target)
    cur_ids = _identifiers(current)
    tgt_ids = _identifiers(target)
    best = None
    for old in sorted(set(cur_ids) - set(tgt_ids)):
        for new in sorted(set(tgt_ids) - set(cur_ids)):
            candidate = _rename(current, old, new)
            ratio = _match_ratio(candidate, target)
            if ratio > base and (best is None or ratio > best[0]):
                best = (ratio, candidate)
    if best is not None:
        return best[1]

    cur_lines = current.splitlines()
    tgt_lines = target.splitlines()
    sm = difflib.SequenceMatcher(a=cur_lines, b=tgt_lines)
    for tag, i1, i2, j1, j2 in sm.get_opcodes():
        if tag == "equal":
            continue
        new_lines = cur_lines[:i1] + tgt_lines[j1:j2] + cur_lines[i2:]
        return "\n".join(new_lines) + ("\n" if target.endswith("\n") else "")
    return target


def improving_candidate(current: str, target: str, edits: int = 1) -> str:
    out = current
    for _ in range(edits):
        out = improving_edit(out, target)
    return out


def lateral_candidate(current: str, target: str, rng: random.Random) -> str:
    """A semantics-preserving edit that does not approach the target."""
    names = [n for n in _defined_names(current) if n in current]
    if names:
        old = rng.choice(names)
        taken = set(_identifiers(current)) | set(_identifiers(target))
        k = 0
        while f"v{k}" in taken:
            k += 1
        return _rename(current, old, f"v{k}")
    return current.rstrip("\n") + "\npass\n"


def corrupt_syntax(current: str, rng: random.Random) -> str:
    choice = rng.randrange(3)
    if choice == 0 and ")" in current:
        idx = current.rindex(")")
        return current[:idx] + current[idx + 1 :]
    if choice == 1 and ":" in current:
        idx = current.index(":")
        return current[:idx] + current[idx + 1 :]
    return current.rstrip("\n") + "\nwhile (\n"


def corrupt_semantics(current: str, rng: random.Random) -> str:
    """Single-site literal/operator change that keeps the program parseable."""
    sites = []
    for m in _NUMBER_RE.finditer(current):
        sites.append(("num", m.start(), m.end()))
    for op, repl in _COMPARISON_SWAPS.items():
        for m in re.finditer(re.escape(op), current):
            # skip '=' inside other operators by requiring standalone match
            if op in ("<", ">") and current[m.end() : m.end() + 1] == "=":
                continue
            sites.append(("cmp:" + repl, m.start(), m.end()))
    for m in _STRING_RE.finditer(current):
        if m.end() - m.start() > 2:
            sites.append(("str", m.start(), m.end()))
    if not sites:
        return corrupt_syntax(current, rng)
    kind, start, end = sites[rng.randrange(len(sites))]
    if kind == "num":
        value = int(current[start:end]) + 1
        mutated = current[:start] + str(value) + current[end:]
    elif kind.startswith("cmp:"):
        mutated = current[:start] + kind[4:] + current[end:]
    else:
        body = current[start:end]
        mutated = current[:start] + body[0] + body[2:-1] + body[1] + body[-1] + current[end:]
    if check_syntax(mutated):
        return mutated
    return corrupt_syntax(current, rng)


def trap_candidate(current: str, target: str, extra_edits: int, rng: random.Random) -> str:
    """Several improving edits plus one semantics break: looks good, is not.

    The break prefers widening a strict comparison (> to >=, < to <=), which
    unit-test suites commonly miss because only the exact boundary input
    distinguishes the two.  The widened operator is usually alien to both
    endpoint programs, which strands the search (see _alien_tokens).
    """
    stepped = current
    for _ in range(1 + extra_edits):
        advanced = improving_edit(stepped, target)
        if _tokens_equal(advanced, target):
            break  # stop short of the target so the trap stays a detour
        stepped = advanced
    sites = []
    for m in re.finditer(r"<=|>=|<|>", stepped):
        if m.group(0) in ("<", ">"):
            sites.append((m.start(), m.group(0) + "="))
    if sites:
        start, repl = sites[rng.randrange(len(sites))]
        widened = stepped[:start] + repl + stepped[start + 1 :]
        if check_syntax(widened):
            return widened
    return corrupt_semantics(stepped, rng)


_NUM_TOKEN_RE = re.compile(r"(?<![\w.])\d+(?![\w.])")
_CMP_TOKEN_RE = re.compile(r"<=|>=|==|!=|<|>")


def _alien_tokens(current: str, target: str) -> bool:
    """True when `current` uses comparison operators or numeric literals that
    the target never uses; such programs sit off the transformation manifold
    and the mutator produces nothing useful from them."""
    cur_cmp = set(_CMP_TOKEN_RE.findall(current))
    tgt_cmp = set(_CMP_TOKEN_RE.findall(target))
    if cur_cmp - tgt_cmp:
        return True
    cur_num = set(_NUM_TOKEN_RE.findall(current))
    tgt_num = set(_NUM_TOKEN_RE.findall(target))
    return bool(cur_num - tgt_num)


def _rng_for(cfg: SyntheticMutatorConfig, current: str, target: str) -> random.Random:
    digest = hashlib.sha256(
        f"{cfg.seed}\x00{current}\x00{target}".encode()
    ).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def synthetic_step(
    cfg: SyntheticMutatorConfig, current: str, target: str, n: int
) -> list[str]:
    """Generate the n-candidate batch for one expansion step."""
    if cfg.valid_per_step + cfg.corrupt_per_step != n:
        raise ValueError(
            f"valid_per_step + corrupt_per_step = "
            f"{cfg.valid_per_step + cfg.corrupt_per_step} != n = {n}"
        )
    rng = _rng_for(cfg, current, target)

    # Some expansions yield no usable candidate at all, the way a real LLM
    # sometimes returns only junk for an awkward intermediate program.  The
    # draw is a pure function of (config, current, target), so the same node
    # is barren on every visit; programs carrying tokens alien to the target
    # are barren always, and laterals preserve the alien tokens, so a subtree
    # rooted at such a program is a genuine dead end.
    barren = not _tokens_equal(current, target) and (
        _alien_tokens(current, target) or rng.random() < cfg.barren_prob
    )

    n_improving = 0 if barren else cfg.improving_per_step
    n_lateral = cfg.valid_per_step - n_improving
    n_trap = 0 if barren else cfg.trap_per_step
    n_plain = n - n_improving - n_lateral - n_trap

    # Edit sizes 1..k, ascending: small steps first, with the larger jumps
    # held in reserve for recovery after a dead-end commit.
    improving = [
        improving_candidate(current, target, edits=size)
        for size in range(1, n_improving + 1)
    ]
    lateral = [lateral_candidate(current, target, rng) for _ in range(n_lateral)]
    traps = [
        trap_candidate(current, target, cfg.trap_extra_edits, rng)
        for _ in range(n_trap)
    ]
    plain_corrupt = []
    for i in range(n_plain):
        if barren or i % 2 == 0:
            # barren batches carry only junk; a semantic corruption could
            # otherwise coincidentally undo the alien token and reopen the
            # dead end
            plain_corrupt.append(corrupt_syntax(current, rng))
        else:
            plain_corrupt.append(corrupt_semantics(current, rng))

    slots: list[str | None] = [None] * n
    free = list(range(n))

    def place_biased(candidate: str):
        weights = [(1.0 - cfg.rank_bias) ** rank for rank in range(len(free))]
        slot = rng.choices(free, weights=weights)[0]
        slots[slot] = candidate
        free.remove(slot)

    def place_uniform(candidate: str):
        slot = free[rng.randrange(len(free))]
        slots[slot] = candidate
        free.remove(slot)

    for cand in improving:
        place_biased(cand)
    # laterals share the early-slot bias (valid samples lead the batch), so a
    # barren batch still offers something parseable near the front
    for cand in lateral:
        place_biased(cand)
    for cand in traps + plain_corrupt:
        place_uniform(cand)
    return [s if s is not None else "" for s in slots]


class SyntheticMutatorClient:
    """LlmClient over the synthetic mutator; recovers (A_i, B) from the prompt."""

    def __init__(self, cfg: SyntheticMutatorConfig | None = None):
        self.cfg = cfg or SyntheticMutatorConfig()

    def complete(self, prompt: str, num_samples: int, params: GenerationParams) -> list[str]:
        programs = extract_fenced_programs(prompt)
        if len(programs) < 2:
            raise ValueError("synthetic client expects a prompt with two programs")
        if prompt.startswith(EQUIVALENCE_QUESTION):
            # equivalence-question prompt: judge from the last reasoning step
            # (or program 1 when there are no steps) against program 2
            final = programs[-1] if len(programs) > 2 else programs[0]
            verdict = "equivalent" if _tokens_equal(final, programs[1]) else "not equivalent"
            return [verdict] * num_samples
        current, target = programs[0], programs[1]
        return synthetic_step(self.cfg, current, target, num_samples)
