"""Corpus ingestion, pair formation, mutation, and dataset splitting.

On-disk corpus format: one directory per problem holding
  problem.json        {"problem_id": ..., "statement": ...}
  solutions/<id>.txt  one solution program per file
  tests.json          [{"input": ..., "output": ...}, ...]
All text is read as UTF-8 with newlines normalized to LF.
"""

from __future__ import annotations

import itertools
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .metrics.parsing import check_syntax
from .metrics.runner import TestCase, TestRunConfig, run_tests


class CorpusFormatError(Exception):
    pass


class MutationExhausted(Exception):
    """No semantics-breaking mutation could be verified within the site budget."""


@dataclass(frozen=True)
class SubjectProgram:
    id: str
    source: str
    problem_id: str

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError(f"program {self.id}: empty source")


@dataclass
class Problem:
    problem_id: str
    statement: Optional[str]
    solutions: list[SubjectProgram]
    tests: list[TestCase]


@dataclass
class ProgramPair:
    source: SubjectProgram
    target: SubjectProgram
    tests: list[TestCase]
    label: str  # "equivalent" | "non_equivalent"
    tags: frozenset[str] = field(default_factory=frozenset)

    @property
    def pair_id(self) -> str:
        return f"{self.source.problem_id}:{self.source.id}-{self.target.id}"


@dataclass
class DatasetSplit:
    train: list[Problem]
    validation: list[Problem]
    evaluation: list[Problem]
    seed: int


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8").replace("\r\n", "\n")


def _load_problem(problem_dir: Path) -> Problem:
    meta_path = problem_dir / "problem.json"
    tests_path = problem_dir / "tests.json"
    solutions_dir = problem_dir / "solutions"
    try:
        meta = json.loads(_read_text(meta_path))
    except FileNotFoundError as exc:
        raise CorpusFormatError(f"{meta_path}: missing") from exc
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{meta_path}: {exc}") from exc
    if "problem_id" not in meta:
        raise CorpusFormatError(f"{meta_path}: missing problem_id")
    try:
        raw_tests = json.loads(_read_text(tests_path))
    except FileNotFoundError as exc:
        raise CorpusFormatError(f"{tests_path}: missing") from exc
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{tests_path}: {exc}") from exc
    if not isinstance(raw_tests, list):
        raise CorpusFormatError(f"{tests_path}: expected a JSON array")
    tests = []
    for i, t in enumerate(raw_tests):
        try:
            tests.append(TestCase(input=t["input"], expected_output=t["output"]))
        except (TypeError, KeyError) as exc:
            raise CorpusFormatError(f"{tests_path}: test #{i} malformed") from exc

    solutions = []
    if solutions_dir.is_dir():
        for sol_path in sorted(solutions_dir.glob("*.txt")):
            source = _read_text(sol_path)
            if not source.strip():
                raise CorpusFormatError(f"{sol_path}: empty solution")
            solutions.append(
                SubjectProgram(id=sol_path.stem, source=source, problem_id=meta["problem_id"])
            )
    return Problem(
        problem_id=meta["problem_id"],
        statement=meta.get("statement"),
        solutions=solutions,
        tests=tests,
    )


def load_corpus(root: str | Path, min_tests: int = 50) -> list[Problem]:
    """Load all problems with >= min_tests tests and >= 2 solutions, by id."""
    root = Path(root)
    if not root.is_dir():
        raise IOError(f"corpus root is not a readable directory: {root}")
    problems = []
    for problem_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        problem = _load_problem(problem_dir)
        if len(problem.tests) >= min_tests and len(problem.solutions) >= 2:
            problems.append(problem)
    problems.sort(key=lambda p: p.problem_id)
    return problems


def make_equivalent_pairs(
    problem: Problem, cap: Optional[int] = 50, seed: int = 0
) -> list[ProgramPair]:
    """All unordered solution pairs, optionally subsampled to `cap`."""
    solutions = sorted(problem.solutions, key=lambda s: s.id)
    pairs = [
        ProgramPair(source=a, target=b, tests=problem.tests, label="equivalent")
        for a, b in itertools.combinations(solutions, 2)
    ]
    if cap is not None and len(pairs) > cap:
        rng = random.Random(seed)
        pairs = rng.sample(pairs, cap)
        pairs.sort(key=lambda p: p.pair_id)
    return pairs


_NUMBER_RE = re.compile(r"(?<![\w.])\d+(?![\w.])")
_STRING_RE = re.compile(r"'[^'\n]*'|\"[^\"\n]*\"")
_CMP_RE = re.compile(r"<=|>=|==|!=|<|>")
_CMP_SWAPS = {"<": "<=", "<=": "<", ">": ">=", ">=": ">", "==": "!=", "!=": "=="}


def _mutation_sites(source: str) -> list[tuple[str, int, int]]:
    sites = []
    for m in _NUMBER_RE.finditer(source):
        sites.append(("num", m.start(), m.end()))
    for m in _CMP_RE.finditer(source):
        sites.append(("cmp", m.start(), m.end()))
    for m in _STRING_RE.finditer(source):
        if m.end() - m.start() > 3:
            sites.append(("str", m.start(), m.end()))
    return sites


def _apply_mutation(source: str, site: tuple[str, int, int]) -> str:
    kind, start, end = site
    text = source[start:end]
    if kind == "num":
        return source[:start] + str(int(text) + 1) + source[end:]
    if kind == "cmp":
        return source[:start] + _CMP_SWAPS[text] + source[end:]
    body = text[1:-1]
    swapped = body[1] + body[0] + body[2:] if len(body) >= 2 else body + "_"
    return source[:start] + text[0] + swapped + text[-1] + source[end:]


def mutate_nonequivalent(
    pair: ProgramPair,
    rng_seed: int,
    exec_cfg: TestRunConfig | None = None,
    max_attempts: int = 20,
) -> ProgramPair:
    """Replace the target with a verified semantics-breaking single-site mutant.

    Each candidate mutant must still parse and must fail at least one of the
    pair's tests when executed; the first verified mutant (sites tried in
    seeded order) wins.
    """
    if pair.label != "equivalent":
        raise ValueError("mutation starts from an equivalent pair")
    source = pair.target.source
    sites = _mutation_sites(source)
    rng = random.Random(rng_seed)
    rng.shuffle(sites)
    for site in sites[:max_attempts]:
        mutant = _apply_mutation(source, site)
        if mutant == source or not check_syntax(mutant):
            continue
        if run_tests(mutant, pair.tests, exec_cfg) < 1.0:
            mutated = SubjectProgram(
                id=pair.target.id + "_mut",
                source=mutant,
                problem_id=pair.target.problem_id,
            )
            return ProgramPair(
                source=pair.source,
                target=mutated,
                tests=pair.tests,
                label="non_equivalent",
                tags=pair.tags,
            )
    raise MutationExhausted(
        f"no verified-failing mutant for {pair.target.id} within {max_attempts} attempts"
    )


def split_dataset(
    problems: list[Problem], ratios: tuple[float, float, float], seed: int
) -> DatasetSplit:
    """Seeded shuffle then contiguous partition; floor sizes, leftover to train/validation."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if any(not 0.0 <= r <= 1.0 for r in ratios):
        raise ValueError("each ratio must lie in [0, 1]")
    n = len(problems)
    ordered = sorted(problems, key=lambda p: p.problem_id)
    random.Random(seed).shuffle(ordered)
    sizes = [int(r * n) for r in ratios]
    leftover = n - sum(sizes)
    for i in range(leftover):
        sizes[min(i, 1)] += 1
    train = ordered[: sizes[0]]
    validation = ordered[sizes[0] : sizes[0] + sizes[1]]
    evaluation = ordered[sizes[0] + sizes[1] :]
    return DatasetSplit(train=train, validation=validation, evaluation=evaluation, seed=seed)
