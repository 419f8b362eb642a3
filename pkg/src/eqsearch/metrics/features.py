"""Assembly of the 7-component feature vector attached to each tree node."""

from __future__ import annotations

from dataclasses import dataclass

from .codebleu import CodeBleuConfig, codebleu
from .jaccard import jaccard_ast
from .parsing import check_syntax
from .runner import TestCase, TestRunConfig, run_tests


@dataclass(frozen=True)
class FeatureVector:
    """Per-candidate validation signals, all normalized to [0, 1].

    Similarity components are CodeBLEU / 100 so every entry shares scale;
    reporting code rescales back to [0, 100].
    """

    nu: float  # syntactic correctness, {0, 1}
    rho: float  # fraction of unit tests passed
    sim_source: float  # similarity to the search's source program A
    sim_parent: float  # similarity to the parent node's program
    sim_target: float  # similarity to the target program B
    gran_parent: float  # Jaccard granularity vs the parent program
    gran_target: float  # Jaccard overlap vs the target program

    def __post_init__(self):
        if self.nu not in (0.0, 1.0):
            raise ValueError("nu must be 0 or 1")
        for name in ("rho", "sim_source", "sim_parent", "sim_target", "gran_parent", "gran_target"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.nu == 0.0 and self.rho != 0.0:
            raise ValueError("rho must be 0 when nu is 0")

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.nu,
            self.rho,
            self.sim_source,
            self.sim_parent,
            self.sim_target,
            self.gran_parent,
            self.gran_target,
        )


def build_feature_vector(
    candidate: str,
    source: str,
    parent: str,
    target: str,
    tests: list[TestCase],
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
) -> FeatureVector:
    """Compute [nu, rho, sim(A), sim(parent), sim(B), gran(parent), gran(B)].

    Tests are only executed for syntactically valid candidates; an invalid
    candidate gets rho = 0 without spawning any subject process.
    """
    nu = float(check_syntax(candidate))
    rho = run_tests(candidate, tests, exec_cfg) if nu == 1.0 else 0.0
    return FeatureVector(
        nu=nu,
        rho=rho,
        sim_source=codebleu(candidate, source, cb_cfg) / 100.0,
        sim_parent=codebleu(candidate, parent, cb_cfg) / 100.0,
        sim_target=codebleu(candidate, target, cb_cfg) / 100.0,
        gran_parent=jaccard_ast(candidate, parent),
        gran_target=jaccard_ast(candidate, target),
    )
