"""Evaluation harness: reasoning-quality reports, downstream classification,
action histograms, and attention exports.

Strategies share one report shape.  Prompting strategies (CoT, ToT) issue a
single completion per pair and read the transformation sequence out of the
fenced code blocks; search strategies (Agent, Greedy) roll out episodes and
use the root-to-cursor chain.  Runs are repeated and averaged.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .agent import (
    AgentConfig,
    EpisodeResult,
    FeatureCache,
    PolicyFn,
    actor_policy,
    greedy_policy,
    random_policy,
    step_episode,
)
from .gnn import GatNetworkParams, load_checkpoint, network_forward
from .llmio import (
    GenerationParams,
    LlmClient,
    extract_fenced_programs,
    render_cot_prompt,
    render_downstream_prompt,
    render_tot_prompt,
)
from .metrics.codebleu import CodeBleuConfig
from .metrics.features import FeatureVector, build_feature_vector
from .metrics.runner import TestRunConfig
from .rtree import Backtrack, ReasoningTree, Select


@dataclass(frozen=True)
class NoReasoning:
    pass


@dataclass(frozen=True)
class CoT:
    pass


@dataclass(frozen=True)
class ToT:
    experts: int = 3


@dataclass(frozen=True)
class Agent:
    checkpoint: str


@dataclass(frozen=True)
class Greedy:
    policy_id: int


@dataclass(frozen=True)
class AgentNoBacktrack:
    checkpoint: str


@dataclass(frozen=True)
class RandomPolicy:
    """Uniform-random action baseline (not a paper strategy; used for checks)."""


Strategy = Union[NoReasoning, CoT, ToT, Agent, Greedy, AgentNoBacktrack, RandomPolicy]


@dataclass
class PairOutcome:
    pair_id: str
    programs: list[str]  # transformation sequence, source program excluded
    features: list[FeatureVector]
    final_features: FeatureVector
    error: Optional[str] = None


@dataclass
class ReasoningReport:
    strategy: str
    repeats: int
    pair_outcomes: list[list[PairOutcome]]  # one list per repeat
    mean_syntactic: Optional[float]  # percent, absent for ToT
    final_syntactic: float  # percent
    mean_functional: Optional[float]  # percent
    final_functional: float  # percent
    final_similarity: float  # [0, 100]
    mean_granularity: Optional[float]  # [0, 1]
    skipped_pairs: int = 0

    def aggregates(self) -> dict:
        return {
            "strategy": self.strategy,
            "repeats": self.repeats,
            "mean_syntactic": self.mean_syntactic,
            "final_syntactic": self.final_syntactic,
            "mean_functional": self.mean_functional,
            "final_functional": self.final_functional,
            "final_similarity": self.final_similarity,
            "mean_granularity": self.mean_granularity,
            "skipped_pairs": self.skipped_pairs,
        }


@dataclass
class ClassificationReport:
    precision: float
    recall: float
    f1: float
    roc_auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    unparseable: int = 0
    # The AUC is computed from hard binary verdicts and therefore equals
    # balanced accuracy; flagged so downstream tables can footnote it.
    auc_is_balanced_accuracy: bool = True

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "unparseable": self.unparseable,
            "auc_is_balanced_accuracy": self.auc_is_balanced_accuracy,
        }


def strategy_name(strategy: Strategy) -> str:
    if isinstance(strategy, ToT):
        return f"tot{strategy.experts}"
    if isinstance(strategy, Greedy):
        return f"greedy{strategy.policy_id}"
    return {
        NoReasoning: "no_reasoning",
        CoT: "cot",
        Agent: "agent",
        AgentNoBacktrack: "agent_no_backtrack",
        RandomPolicy: "random",
    }[type(strategy)]


def _episode_policy(strategy: Strategy, rng: random.Random) -> Optional[PolicyFn]:
    if isinstance(strategy, Agent):
        actor, _, _, _ = load_checkpoint(strategy.checkpoint)
        return actor_policy(actor)
    if isinstance(strategy, AgentNoBacktrack):
        actor, _, _, _ = load_checkpoint(strategy.checkpoint)
        return actor_policy(actor, allow_backtrack=False)
    if isinstance(strategy, Greedy):
        return greedy_policy(strategy.policy_id)
    if isinstance(strategy, RandomPolicy):
        return random_policy()
    return None


def _sequence_features(
    sequence: list[str],
    a: str,
    b: str,
    tests,
    exec_cfg,
    cb_cfg,
) -> list[FeatureVector]:
    feats = []
    prev = a
    for program in sequence:
        feats.append(build_feature_vector(program, a, prev, b, tests, exec_cfg, cb_cfg))
        prev = program
    return feats


def _run_pair(
    pair,
    strategy: Strategy,
    client: LlmClient,
    cfg: AgentConfig,
    rng: random.Random,
    exec_cfg,
    cb_cfg,
    gen_params: GenerationParams,
    cache: Optional[FeatureCache],
) -> PairOutcome:
    a, b = pair.source.source, pair.target.source
    policy = _episode_policy(strategy, rng)
    if policy is not None:
        result = step_episode(
            pair, client, policy, cfg, rng, exec_cfg, cb_cfg, gen_params, cache
        )
        sequence = result.programs[1:]
        features = [
            build_feature_vector(p, a, prev, b, pair.tests, exec_cfg, cb_cfg)
            for prev, p in zip(result.programs, sequence)
        ]
        final = result.final_features
        return PairOutcome(pair.pair_id, sequence, features, final)

    if isinstance(strategy, NoReasoning):
        sequence: list[str] = []
    else:
        if isinstance(strategy, ToT):
            prompt = render_tot_prompt(a, b, strategy.experts)
        else:
            prompt = render_cot_prompt(a, b)
        response = client.complete(prompt, 1, gen_params)[0]
        sequence = extract_fenced_programs(response)
    if not sequence:
        # no-progress fallback: the final program is the source itself
        sequence = []
        features: list[FeatureVector] = []
        final = build_feature_vector(a, a, a, b, pair.tests, exec_cfg, cb_cfg)
    else:
        features = _sequence_features(sequence, a, b, pair.tests, exec_cfg, cb_cfg)
        final = features[-1]
    return PairOutcome(pair.pair_id, sequence, features, final)


def run_reasoning(
    pairs,
    strategy: Strategy,
    client: LlmClient,
    cfg: AgentConfig | None = None,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    repeats: int = 2,
    seed: int = 0,
    gen_params: GenerationParams | None = None,
) -> ReasoningReport:
    """Evaluate one strategy over equivalent pairs, repeated and averaged.

    "Final" metrics use the last program of each sequence; "mean" metrics
    average over all intermediate programs.  ToT reports final metrics only.
    """
    if not pairs:
        raise ValueError("no pairs to evaluate")
    cfg = cfg or AgentConfig()
    gen_params = gen_params or GenerationParams()
    report_means = not isinstance(strategy, ToT)

    all_outcomes: list[list[PairOutcome]] = []
    skipped = 0
    caches: dict[str, FeatureCache] = {}
    for r in range(repeats):
        outcomes: list[PairOutcome] = []
        for i, pair in enumerate(pairs):
            rng = random.Random((seed, r, i, pair.pair_id).__repr__())
            cache = caches.setdefault(pair.pair_id, FeatureCache())
            try:
                outcomes.append(
                    _run_pair(
                        pair, strategy, client, cfg, rng, exec_cfg, cb_cfg, gen_params, cache
                    )
                )
            except (OSError, RuntimeError, ValueError) as exc:
                skipped += 1
                outcomes.append(
                    PairOutcome(pair.pair_id, [], [], _zero_features(), error=str(exc))
                )
        all_outcomes.append(outcomes)

    def per_run(run: list[PairOutcome], fn) -> float:
        vals = [fn(o) for o in run if o.error is None]
        return sum(vals) / len(vals) if vals else 0.0

    def averaged(fn) -> float:
        return sum(per_run(run, fn) for run in all_outcomes) / repeats

    def mean_over_steps(outcome: PairOutcome, attr: str) -> float:
        feats = outcome.features or [outcome.final_features]
        return sum(getattr(f, attr) for f in feats) / len(feats)

    return ReasoningReport(
        strategy=strategy_name(strategy),
        repeats=repeats,
        pair_outcomes=all_outcomes,
        mean_syntactic=averaged(lambda o: mean_over_steps(o, "nu") * 100) if report_means else None,
        final_syntactic=averaged(lambda o: o.final_features.nu * 100),
        mean_functional=averaged(lambda o: mean_over_steps(o, "rho") * 100) if report_means else None,
        final_functional=averaged(lambda o: o.final_features.rho * 100),
        final_similarity=averaged(lambda o: o.final_features.sim_target * 100),
        mean_granularity=averaged(lambda o: mean_over_steps(o, "gran_parent")) if report_means else None,
        skipped_pairs=skipped,
    )


def _zero_features() -> FeatureVector:
    return FeatureVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def extract_verdict(answer: str) -> Optional[bool]:
    """First case-insensitive match wins: "not equivalent" beats "equivalent"."""
    lowered = answer.lower()
    neg = lowered.find("not equivalent")
    pos = lowered.find("equivalent")
    if neg != -1:
        return False
    if pos != -1:
        return True
    return None


def classify_pair(
    pair,
    steps: list[str],
    client: LlmClient,
    gen_params: GenerationParams | None = None,
) -> tuple[Optional[bool], str]:
    """One downstream equivalence verdict; None when the answer is unparseable."""
    prompt = render_downstream_prompt(pair.source.source, pair.target.source, steps)
    answer = client.complete(prompt, 1, gen_params or GenerationParams())[0]
    return extract_verdict(answer), answer


def classification_metrics(
    labels: list[bool], verdicts: list[Optional[bool]]
) -> ClassificationReport:
    """Precision/recall/F1 and hard-verdict AUC from parallel label lists.

    Unparseable verdicts (None) count as wrong predictions.
    """
    if len(labels) != len(verdicts):
        raise ValueError(f"length mismatch: {len(labels)} labels, {len(verdicts)} verdicts")
    if not labels:
        raise ValueError("empty inputs")
    unparseable = sum(1 for v in verdicts if v is None)
    resolved = [(not lab) if v is None else v for lab, v in zip(labels, verdicts)]
    tp = sum(1 for lab, v in zip(labels, resolved) if lab and v)
    fp = sum(1 for lab, v in zip(labels, resolved) if not lab and v)
    tn = sum(1 for lab, v in zip(labels, resolved) if not lab and not v)
    fn = sum(1 for lab, v in zip(labels, resolved) if lab and not v)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    return ClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        roc_auc=(tpr + tnr) / 2.0,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        unparseable=unparseable,
    )


def run_downstream(
    pairs,
    strategy: Strategy,
    transform_client: LlmClient,
    judge_client: LlmClient,
    cfg: AgentConfig | None = None,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    seed: int = 0,
    gen_params: GenerationParams | None = None,
) -> tuple[ClassificationReport, list[dict]]:
    """Binary equivalence classification with strategy-generated reasoning."""
    if not pairs:
        raise ValueError("no pairs to classify")
    cfg = cfg or AgentConfig()
    gen_params = gen_params or GenerationParams()
    labels: list[bool] = []
    verdicts: list[Optional[bool]] = []
    records: list[dict] = []
    caches: dict[str, FeatureCache] = {}
    for i, pair in enumerate(pairs):
        rng = random.Random((seed, i, pair.pair_id).__repr__())
        cache = caches.setdefault(pair.pair_id, FeatureCache())
        if isinstance(strategy, NoReasoning):
            steps: list[str] = []
        else:
            outcome = _run_pair(
                pair, strategy, transform_client, cfg, rng, exec_cfg, cb_cfg, gen_params, cache
            )
            steps = outcome.programs
        verdict, raw = classify_pair(pair, steps, judge_client, gen_params)
        labels.append(pair.label == "equivalent")
        verdicts.append(verdict)
        records.append(
            {
                "pair_id": pair.pair_id,
                "label": pair.label,
                "verdict": verdict,
                "answer": raw,
                "steps": len(steps),
            }
        )
    return classification_metrics(labels, verdicts), records


@dataclass
class ActionHistogram:
    counts: dict[int, int] = field(default_factory=dict)  # 0=Backtrack, k=Candidate k

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict:
        named = {}
        for bucket in sorted(self.counts):
            name = "backtrack" if bucket == 0 else f"candidate_{bucket}"
            named[name] = self.counts[bucket]
        return named


def action_histogram(episodes: list[EpisodeResult]) -> ActionHistogram:
    """Frequency of discrete actions over episodes; Select(k) is candidate k+1."""
    counts: dict[int, int] = {}
    for episode in episodes:
        for action in episode.actions:
            bucket = 0 if isinstance(action, Backtrack) else action.k + 1
            counts[bucket] = counts.get(bucket, 0) + 1
    return ActionHistogram(counts=counts)


def attention_export(
    tree: ReasoningTree, actor_params: GatNetworkParams, path: str | Path
) -> dict:
    """Write per-layer per-edge attention of one forward pass plus the tree.

    Edges are listed sorted by (dst, src), matching the network's internal
    ordering; coefficients into each node sum to 1.
    """
    enc = tree.to_graph_encoding()
    trace = network_forward(enc, actor_params)
    ordered = sorted(enc.edges, key=lambda e: (e[1], e[0]))
    layers = []
    for alpha in trace.attention:
        layers.append(
            [
                {"src": int(s), "dst": int(d), "alpha": float(a)}
                for (s, d), a in zip(ordered, alpha)
            ]
        )
    dump = {"tree": tree.dump(), "layers": layers}
    Path(path).write_text(json.dumps(dump, indent=2))
    return dump
