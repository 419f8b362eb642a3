"""Command-line entry point.

Every run resolves one configuration (JSON file, then --set overrides), writes
it verbatim into the output directory, and derives all randomness from the
named seeds inside it, so reruns against a replay transcript or the synthetic
client reproduce their outputs bit-exactly.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import random
import sys
from dataclasses import fields
from pathlib import Path

from . import agent as agent_mod
from . import eval as eval_mod
from .corpus import (
    ProgramPair,
    load_corpus,
    make_equivalent_pairs,
    mutate_nonequivalent,
    split_dataset,
)
from .gnn import load_checkpoint
from .llmio import (
    GenerationParams,
    LiveHttpClient,
    RecordingClient,
    ReplayClient,
    TranscriptWriter,
)
from .metrics.codebleu import CodeBleuConfig
from .metrics.runner import TestRunConfig
from .synthetic import SyntheticMutatorClient, SyntheticMutatorConfig


class UsageError(Exception):
    pass


DEFAULT_CONFIG = {
    "corpus_path": None,
    "min_tests": 50,
    "pair_cap": 50,
    "seed": 0,
    "output_dir": "runs/default",
    "split": {"ratios": [0.7, 0.15, 0.15], "seed": 0},
    "client": {
        "kind": "synthetic",  # synthetic | replay | live
        "transcript": None,
        "endpoint": None,
        "model": None,
        "synthetic": {},
    },
    "judge_client": None,  # defaults to "client" when absent
    "agent": {},
    "runner": {},
    "generation": {},
    "eval": {"repeats": 2},
}


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(config: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"--set expects key.path=value, got {assignment!r}")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise UsageError(f"--set path {path!r} crosses a non-object value")
    node[keys[-1]] = value


def resolve_config(args) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            config = _deep_merge(config, json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})")
    for assignment in getattr(args, "set", None) or []:
        _apply_set(config, assignment)
    if getattr(args, "out", None):
        config["output_dir"] = args.out
    if getattr(args, "corpus", None):
        config["corpus_path"] = args.corpus
    return config


def _dataclass_from(cls, mapping: dict):
    allowed = {f.name for f in fields(cls)}
    unknown = set(mapping) - allowed
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**mapping)


def build_client(section: dict):
    kind = section.get("kind", "synthetic")
    if kind == "synthetic":
        cfg = _dataclass_from(SyntheticMutatorConfig, section.get("synthetic") or {})
        return SyntheticMutatorClient(cfg)
    if kind == "replay":
        transcript = section.get("transcript")
        if not transcript:
            raise UsageError("client.kind=replay requires client.transcript")
        return ReplayClient(transcript)
    if kind == "live":
        if not section.get("endpoint") or not section.get("model"):
            raise UsageError("client.kind=live requires client.endpoint and client.model")
        return LiveHttpClient(section["endpoint"], section["model"])
    raise UsageError(f"unknown client kind: {kind}")


def _prepare_out_dir(config: dict) -> Path:
    out = Path(config["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(config, indent=2, sort_keys=True))
    return out


def _load_split(config: dict):
    if not config.get("corpus_path"):
        raise UsageError("corpus_path is required (config file, --corpus, or --set)")
    problems = load_corpus(config["corpus_path"], min_tests=config["min_tests"])
    if not problems:
        raise RuntimeError("corpus is empty after filtering")
    ratios = tuple(config["split"]["ratios"])
    return split_dataset(problems, ratios, config["split"]["seed"])


def _pairs_for(problems, config: dict) -> list[ProgramPair]:
    pairs = []
    for problem in problems:
        pairs.extend(
            make_equivalent_pairs(problem, cap=config["pair_cap"], seed=config["seed"])
        )
    return pairs


def _shared_cfgs(config: dict):
    agent_cfg = _dataclass_from(agent_mod.AgentConfig, config.get("agent") or {})
    exec_cfg = _dataclass_from(TestRunConfig, config.get("runner") or {})
    gen_params = _dataclass_from(GenerationParams, config.get("generation") or {})
    return agent_cfg, exec_cfg, gen_params


def cmd_ingest(args) -> int:
    config = resolve_config(args)
    split = _load_split(config)
    out = _prepare_out_dir(config)
    assignment = {}
    for name, problems in (
        ("train", split.train),
        ("validation", split.validation),
        ("evaluation", split.evaluation),
    ):
        for problem in problems:
            assignment[problem.problem_id] = name
    all_problems = sorted(
        split.train + split.validation + split.evaluation, key=lambda p: p.problem_id
    )
    manifest = {
        "problem_count": len(all_problems),
        "split_seed": split.seed,
        "problems": [
            {
                "problem_id": p.problem_id,
                "solutions": len(p.solutions),
                "tests": len(p.tests),
                "split": assignment[p.problem_id],
            }
            for p in all_problems
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"ingested {len(all_problems)} problems -> {out / 'manifest.json'}")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args)
    out = _prepare_out_dir(config)
    split = _load_split(config)
    train_pairs = _pairs_for(split.train, config)
    val_pairs = _pairs_for(split.validation, config)
    client = build_client(config["client"])
    agent_cfg, exec_cfg, _ = _shared_cfgs(config)
    checkpoint_path = out / "checkpoint.bin"
    curve_path = out / "curve.csv"

    if getattr(args, "transfer", None):
        result = agent_mod.transfer(
            args.transfer,
            train_pairs,
            val_pairs,
            client,
            agent_cfg,
            config["seed"],
            exec_cfg,
            max_episodes=getattr(args, "episodes", None),
            out_checkpoint_path=checkpoint_path,
            curve_path=curve_path,
        )
    else:
        init = None
        if getattr(args, "resume", None):
            actor, critic, _, _ = load_checkpoint(args.resume)
            init = (actor, critic)
        result = agent_mod.train(
            train_pairs,
            val_pairs,
            client,
            agent_cfg,
            config["seed"],
            exec_cfg,
            init=init,
            curve_path=curve_path,
            checkpoint_path=checkpoint_path,
        )
    print(
        f"trained {result.episodes_run} episodes "
        f"(stabilized={result.stabilized}) -> {checkpoint_path}"
    )
    return 0


def cmd_transfer(args) -> int:
    args.transfer = args.checkpoint
    args.resume = None
    return cmd_train(args)


STRATEGY_NAMES = (
    "no-reasoning",
    "cot",
    "tot",
    "agent",
    "agent-no-backtrack",
    "greedy1",
    "greedy2",
    "greedy3",
    "random",
)


def parse_strategy(name: str, checkpoint: str | None, tot_experts: int = 3):
    if name in ("agent", "agent-no-backtrack"):
        if not checkpoint:
            raise UsageError(f"strategy {name} requires --checkpoint")
        if not Path(checkpoint).exists():
            raise UsageError(f"checkpoint not found: {checkpoint}")
        cls = eval_mod.Agent if name == "agent" else eval_mod.AgentNoBacktrack
        return cls(checkpoint)
    if name == "no-reasoning":
        return eval_mod.NoReasoning()
    if name == "cot":
        return eval_mod.CoT()
    if name == "tot":
        return eval_mod.ToT(tot_experts)
    if name.startswith("greedy"):
        return eval_mod.Greedy(int(name[-1]))
    if name == "random":
        return eval_mod.RandomPolicy()
    raise UsageError(f"unknown strategy: {name}")


REPORT_COLUMNS = [
    "strategy",
    "repeats",
    "mean_syntactic",
    "final_syntactic",
    "mean_functional",
    "final_functional",
    "final_similarity",
    "mean_granularity",
    "skipped_pairs",
]


def cmd_eval_reasoning(args) -> int:
    config = resolve_config(args)
    out = _prepare_out_dir(config)
    split = _load_split(config)
    pairs = _pairs_for(split.evaluation, config)
    if not pairs:
        raise RuntimeError("evaluation split produced no pairs")
    client = build_client(config["client"])
    agent_cfg, exec_cfg, gen_params = _shared_cfgs(config)
    strategy = parse_strategy(args.strategy, getattr(args, "checkpoint", None), args.tot_experts)
    report = eval_mod.run_reasoning(
        pairs,
        strategy,
        client,
        agent_cfg,
        exec_cfg,
        repeats=config["eval"]["repeats"],
        seed=config["seed"],
        gen_params=gen_params,
    )
    aggregates = report.aggregates()
    (out / "reasoning_report.json").write_text(json.dumps(aggregates, indent=2, sort_keys=True))
    with open(out / "reasoning_report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        writer.writerow(aggregates)
    print(json.dumps(aggregates, sort_keys=True))
    return 0


def cmd_eval_downstream(args) -> int:
    config = resolve_config(args)
    out = _prepare_out_dir(config)
    split = _load_split(config)
    eq_pairs = _pairs_for(split.evaluation, config)
    if not eq_pairs:
        raise RuntimeError("evaluation split produced no pairs")
    agent_cfg, exec_cfg, gen_params = _shared_cfgs(config)
    pairs = list(eq_pairs)
    for i, pair in enumerate(eq_pairs):
        pairs.append(mutate_nonequivalent(pair, config["seed"] + i, exec_cfg))
    client = build_client(config["client"])
    judge = build_client(config["judge_client"] or config["client"])
    name = "agent-no-backtrack" if args.ablate_backtracking else args.strategy
    strategy = parse_strategy(name, getattr(args, "checkpoint", None), args.tot_experts)
    report, records = eval_mod.run_downstream(
        pairs,
        strategy,
        client,
        judge,
        agent_cfg,
        exec_cfg,
        seed=config["seed"],
        gen_params=gen_params,
    )
    payload = {"metrics": report.as_dict(), "records": records}
    (out / "downstream_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


def cmd_record_transcript(args) -> int:
    config = resolve_config(args)
    out = _prepare_out_dir(config)
    split = _load_split(config)
    pairs = _pairs_for(split.evaluation, config)
    inner = build_client(config["client"])
    transcript_path = out / "transcript.jsonl"
    client = RecordingClient(inner, TranscriptWriter(str(transcript_path)))
    agent_cfg, exec_cfg, gen_params = _shared_cfgs(config)
    strategy = parse_strategy(args.strategy, getattr(args, "checkpoint", None), args.tot_experts)
    eval_mod.run_reasoning(
        pairs,
        strategy,
        client,
        agent_cfg,
        exec_cfg,
        repeats=config["eval"]["repeats"],
        seed=config["seed"],
        gen_params=gen_params,
    )
    print(f"recorded transcript -> {transcript_path}")
    return 0


def cmd_export_attention(args) -> int:
    config = resolve_config(args)
    out = _prepare_out_dir(config)
    split = _load_split(config)
    pairs = _pairs_for(split.evaluation, config)
    if not pairs:
        raise RuntimeError("evaluation split produced no pairs")
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    actor, _, _, _ = load_checkpoint(args.checkpoint)
    client = build_client(config["client"])
    agent_cfg, exec_cfg, gen_params = _shared_cfgs(config)
    pair = pairs[min(args.pair_index, len(pairs) - 1)]
    rng = random.Random(config["seed"])
    result = agent_mod.step_episode(
        pair,
        client,
        agent_mod.actor_policy(actor),
        agent_cfg,
        rng,
        exec_cfg,
        gen_params=gen_params,
        keep_tree=True,
    )
    path = out / "attention.json"
    eval_mod.attention_export(result.tree, actor, path)
    print(f"exported attention for pair {pair.pair_id} -> {path}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqsearch", description="Equivalence-search training and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override a config value (JSON-parsed)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--corpus", help="corpus root directory")

    def strategic(p):
        p.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
        p.add_argument("--checkpoint", help="checkpoint for agent strategies")
        p.add_argument("--tot-experts", type=int, default=3)

    p = sub.add_parser("ingest", help="validate a corpus and write the split manifest")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the agent")
    common(p)
    p.add_argument("--resume", help="checkpoint to continue training from")
    p.add_argument("--transfer", help="checkpoint to transfer-learn from")
    p.add_argument("--episodes", type=int, help="episode budget for --transfer")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer", help="transfer-learn from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval-reasoning", help="evaluate transformation quality")
    common(p)
    strategic(p)
    p.set_defaults(func=cmd_eval_reasoning)

    p = sub.add_parser("eval-downstream", help="evaluate equivalence classification")
    common(p)
    strategic(p)
    p.add_argument("--ablate-backtracking", action="store_true")
    p.set_defaults(func=cmd_eval_downstream)

    p = sub.add_parser("record-transcript", help="record an LLM transcript for replay")
    common(p)
    strategic(p)
    p.set_defaults(func=cmd_record_transcript)

    p = sub.add_parser("export-attention", help="dump attention weights for one episode")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pair-index", type=int, default=0)
    p.set_defaults(func=cmd_export_attention)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
