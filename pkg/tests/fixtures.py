"""Fixture program pairs and corpora for the test suite.

Each fixture pair follows one template: read two ints, accumulate a product
by repeated addition, add a constant, compare against a threshold, print
YES/NO and the total.  Variant A uses a for loop, a dead assignment, and one
name pool; variant B uses a while loop and another pool, so reaching B takes
several renames plus a structural rewrite.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from eqsearch.corpus import ProgramPair, SubjectProgram
from eqsearch.metrics.runner import TestCase

NAME_POOLS = [
    ("x", "y", "total", "i"),
    ("a", "b", "s", "j"),
    ("p", "q", "acc", "t"),
    ("n", "m", "result", "k"),
    ("u1", "u2", "summ", "idx"),
]


def variant_a(names, K: int, T: int) -> str:
    x, y, total, i = names
    return (
        f"{x} = int(input())\n"
        f"{y} = int(input())\n"
        f"dead = 0\n"
        f"{total} = 0\n"
        f"for {i} in range({y}):\n"
        f"    {total} = {total} + {x}\n"
        f"{total} = {total} + {K}\n"
        f"if {total} > {T}:\n"
        f'    print("YES")\n'
        f"else:\n"
        f'    print("NO")\n'
        f"print({total})\n"
    )


def variant_b(names, K: int, T: int) -> str:
    x, y, total, i = names
    return (
        f"{x} = int(input())\n"
        f"{y} = int(input())\n"
        f"{total} = 0\n"
        f"{i} = 0\n"
        f"while {i} < {y}:\n"
        f"    {total} = {total} + {x}\n"
        f"    {i} = {i} + 1\n"
        f"{total} = {total} + {K}\n"
        f"if {total} > {T}:\n"
        f'    print("YES")\n'
        f"else:\n"
        f'    print("NO")\n'
        f"print({total})\n"
    )


def expected_output(x: int, y: int, K: int, T: int) -> str:
    total = x * y + K
    verdict = "YES" if total > T else "NO"
    return f"{verdict}\n{total}\n"


def make_tests(K: int, T: int, seed: int, count: int = 12) -> list[TestCase]:
    """Deliberately incomplete suite: the exact threshold boundary is never
    exercised, so an off-by-one comparison passes every test."""
    rng = random.Random(seed)
    cases = [(0, 0), (1, 1)]
    while len(cases) < count:
        x, y = rng.randrange(0, 9), rng.randrange(0, 9)
        if x * y + K != T:
            cases.append((x, y))
    cases = [(x, y) for x, y in cases if x * y + K != T]
    return [
        TestCase(input=f"{x}\n{y}\n", expected_output=expected_output(x, y, K, T))
        for x, y in cases
    ]


def make_pair(idx: int) -> ProgramPair:
    K = idx % 7 + 1
    T = 8 + (idx * 3) % 15
    pool_a = NAME_POOLS[idx % len(NAME_POOLS)]
    pool_b = NAME_POOLS[(idx + 1 + idx % 3) % len(NAME_POOLS)]
    if pool_a == pool_b:
        pool_b = NAME_POOLS[(idx + 2) % len(NAME_POOLS)]
    a = variant_a(pool_a, K, T)
    b = variant_b(pool_b, K, T)
    problem_id = f"fix{idx:03d}"
    return ProgramPair(
        source=SubjectProgram(id="a", source=a, problem_id=problem_id),
        target=SubjectProgram(id="b", source=b, problem_id=problem_id),
        tests=make_tests(K, T, seed=idx),
        label="equivalent",
    )


def make_pairs(count: int, start: int = 0) -> list[ProgramPair]:
    return [make_pair(start + i) for i in range(count)]


def write_corpus(root: Path, n_problems: int = 3, n_tests: int = 12, start: int = 0) -> Path:
    """Materialize fixture pairs as an on-disk corpus (2 solutions per problem)."""
    root = Path(root)
    for i in range(n_problems):
        pair = make_pair(start + i)
        pdir = root / pair.source.problem_id
        (pdir / "solutions").mkdir(parents=True, exist_ok=True)
        (pdir / "problem.json").write_text(
            json.dumps({"problem_id": pair.source.problem_id, "statement": "sum template"})
        )
        (pdir / "solutions" / "a.txt").write_text(pair.source.source)
        (pdir / "solutions" / "b.txt").write_text(pair.target.source)
        tests = [
            {"input": t.input, "output": t.expected_output} for t in pair.tests[:n_tests]
        ]
        (pdir / "tests.json").write_text(json.dumps(tests))
    return root


QUEUE_A = """n,t=list(map(int,input().split()))
a=input()
k=0
for i in range(t):
    a=a.replace('BG','GB')
print(a)
"""

QUEUE_B = """n,t = list(map(int,input().split()))
s = input()
while t>0:
    s = s.replace("BG","GB")
    t -= 1
print(s)
"""

QUEUE_CHAIN = [
    """n,t=list(map(int,input().split()))
s=input()
k=0
for i in range(t):
    s=s.replace('BG','GB')
print(s)
""",
    """n,t=list(map(int,input().split()))
s=input()
for i in range(t):
    s=s.replace('BG','GB')
print(s)
""",
    """n,t=list(map(int,input().split()))
s=input()
while t>0:
    s=s.replace('BG','GB')
    t -=1
print(s)
""",
    """n,t= list(map(int,input().split()))
s = input()
while t>0:
    s = s.replace("BG","GB")
    t -=1
print(s)
""",
]


def queue_tests() -> list[TestCase]:
    def solve(n: int, t: int, line: str) -> str:
        for _ in range(t):
            line = line.replace("BG", "GB")
        return line

    cases = [(5, 1, "BGGBG"), (5, 2, "BGGBG"), (4, 1, "GGGB"), (2, 3, "BG"), (6, 2, "BBGBGG")]
    return [
        TestCase(input=f"{n} {t}\n{line}\n", expected_output=solve(n, t, line) + "\n")
        for n, t, line in cases
    ]
