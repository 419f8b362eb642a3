"""Acceptance suite: nine end-to-end criteria, one pass/fail line each.

Each criterion prints `ACCEPTANCE <n> [<label>]: PASS|FAIL` so the outcome
can be read straight off the test log.  Criteria 5 and 6 share one training
run per ablation arm (module-scoped fixture); everything runs offline
against the synthetic mutator.
"""

import json
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from eqsearch.agent import (
    AgentConfig,
    FeatureCache,
    actor_policy,
    discounted_returns,
    evaluate_policy,
    greedy_policy,
    greedy_select,
    random_policy,
    step_episode,
    train,
)
from eqsearch.eval import Greedy, classification_metrics, run_reasoning
from eqsearch.gnn import init_params
from eqsearch.gnn.network import network_backward, network_forward
from eqsearch.metrics.codebleu import codebleu
from eqsearch.metrics.features import FeatureVector
from eqsearch.metrics.jaccard import jaccard_ast
from eqsearch.metrics.runner import TestRunConfig
from eqsearch.rtree import new_tree
from eqsearch.synthetic import SyntheticMutatorClient, SyntheticMutatorConfig

from fixtures import QUEUE_A, QUEUE_B, QUEUE_CHAIN, make_pairs
from oracles import oracle_codebleu
from tables import CONFUSION_CASES, GREEDY_TABLE

INPROC = TestRunConfig(
    interpreter_command="inprocess", per_test_timeout_ms=100, timeout_fail_fast=True
)
CLIENT = SyntheticMutatorClient(SyntheticMutatorConfig())


@contextmanager
def criterion(n: int, label: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {n} [{label}]: FAIL")
        raise
    print(f"ACCEPTANCE {n} [{label}]: PASS")


# Frozen independent-oracle scores for the pinned pairs (see oracles.py).
PINNED = [
    (QUEUE_A, 52.617405),
    (QUEUE_CHAIN[0], 60.913624),
    (QUEUE_CHAIN[1], 62.166385),
    (QUEUE_CHAIN[2], 95.166865),
    (QUEUE_CHAIN[3], 100.0),
]


def test_criterion_1_metric_oracle_suite():
    with criterion(1, "metric oracle suite"):
        t0 = time.monotonic()
        programs = []
        for pair in make_pairs(50):
            programs.extend([pair.source.source, pair.target.source])
        assert len(programs) == 100
        for p in programs:
            assert codebleu(p, p) == 100.0
            assert jaccard_ast(p, p) == 1.0
        for cand, frozen in PINNED:
            score = codebleu(cand, QUEUE_B)
            assert score == pytest.approx(frozen, abs=0.5)
            assert score == pytest.approx(oracle_codebleu(cand, QUEUE_B), abs=0.5)
        chain = [codebleu(QUEUE_A, QUEUE_B)] + [codebleu(p, QUEUE_B) for p in QUEUE_CHAIN]
        assert chain == sorted(chain)
        assert chain[-1] == 100.0
        assert time.monotonic() - t0 < 60.0


def test_criterion_2_returns_recursion():
    with criterion(2, "discounted-returns recursion"):
        assert discounted_returns([0.0, 0.0, 1.0], 0.5) == [0.25, 0.5, 1.0]
        rng = random.Random(2)
        for _ in range(1000):
            gamma = rng.uniform(0.01, 1.0)
            rewards = [rng.uniform(-2.0, 2.0) for _ in range(rng.randrange(1, 15))]
            d = discounted_returns(rewards, gamma)
            assert len(d) == len(rewards)
            for t in range(len(rewards) - 1):
                assert abs(d[t] - (rewards[t] + gamma * d[t + 1])) <= 1e-12
            assert abs(d[-1] - rewards[-1]) <= 1e-12


def _random_tree_encoding(rng: np.random.Generator, n_max: int = 6):
    from eqsearch.gnn.network import GraphEncoding

    n = int(rng.integers(1, n_max + 1))
    edges = [(i, i) for i in range(n)]
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        edges += [(parent, i), (i, parent)]
    return GraphEncoding(
        node_features=rng.uniform(0.0, 1.0, size=(n, 7)),
        edges=edges,
        cursor_index=int(rng.integers(0, n)),
    )


def test_criterion_3_gnn_gradient_check():
    with criterion(3, "GNN gradient check"):
        t0 = time.monotonic()
        rng = np.random.default_rng(42)
        eps = 1e-6
        for trial in range(50):
            enc = _random_tree_encoding(rng)
            params = init_params(trial, 1 if trial % 2 == 0 else 2)
            proj = rng.standard_normal((enc.node_features.shape[0], params.head_dim))
            trace = network_forward(enc, params)

            n = enc.node_features.shape[0]
            dst = np.asarray(sorted(enc.edges, key=lambda e: (e[1], e[0])))[:, 1]
            for alpha in trace.attention:
                sums = np.zeros(n)
                np.add.at(sums, dst, alpha)
                assert np.allclose(sums, 1.0, atol=1e-12)

            def loss(p):
                return float(np.sum(network_forward(enc, p).outputs * proj))

            grads = network_backward(trace, proj)
            for arr, g in zip(params.flat(), grads.flat()):
                flat = arr.reshape(-1)
                for i in rng.integers(0, flat.size, size=min(4, flat.size)):
                    orig = flat[i]
                    flat[i] = orig + eps
                    up = loss(params)
                    flat[i] = orig - eps
                    down = loss(params)
                    flat[i] = orig
                    numeric = (up - down) / (2 * eps)
                    assert abs(numeric - g.reshape(-1)[i]) <= 1e-4 * max(1.0, abs(numeric))
        assert time.monotonic() - t0 < 120.0


def test_criterion_4_tree_fuzz_and_episode_budgets():
    with criterion(4, "tree fuzz and episode budgets"):
        root_fv = FeatureVector(1, 1, 0.5, 0.5, 0.5, 0.5, 0.5)
        rng = random.Random(20240817)
        for _ in range(1000):
            tree = new_tree(root_fv, "root")
            for _ in range(rng.randrange(1, 25)):
                if rng.random() < 0.5 and not tree.unexplored_children(tree.cursor):
                    batch = [
                        (FeatureVector(1, 1, s, s, s, 0.5, 0.5), f"p{j}")
                        for j, s in enumerate(
                            rng.uniform(0, 1) for _ in range(rng.randrange(1, 5))
                        )
                    ]
                    tree.add_candidates(tree.cursor, batch)
                legal = tree.legal_actions()
                if not legal:
                    break
                tree.apply_action(legal[rng.randrange(len(legal))])
                assert tree.node(tree.cursor).explored
                assert 0 <= tree.cursor < len(tree)
                assert tree.path_to_root()[0] == tree.root
                for i, node in enumerate(tree.nodes):
                    for c in node.children:
                        assert tree.node(c).parent == i
                    if node.explored and node.parent is not None:
                        assert tree.node(node.parent).explored
                assert len(tree.to_graph_encoding().edges) == 3 * len(tree) - 2

        cfg = AgentConfig()
        assert cfg.p_max_queries == 10 and cfg.m_stall == 3
        pair = make_pairs(1)[0]
        cache = FeatureCache()
        policies = [random_policy(), random_policy(allow_backtrack=False),
                    greedy_policy(1), greedy_policy(2), greedy_policy(3)]
        for trial in range(100):
            res = step_episode(
                pair, CLIENT, policies[trial % len(policies)], cfg,
                random.Random(trial), INPROC, feature_cache=cache,
            )
            assert res.termination_reason is not None
            assert res.llm_query_count <= cfg.p_max_queries
            assert len(res.actions) <= cfg.effective_action_cap


@pytest.fixture(scope="module")
def trained_agents():
    """Train both ablation arms once; criteria 5 and 6 read from here."""
    train_pairs = make_pairs(30, start=50)
    val_pairs = make_pairs(8, start=90)
    out = {}
    t0 = time.monotonic()
    for allow_bt in (True, False):
        cfg = AgentConfig(
            max_episodes=1000, eval_every=100, stabilization_window=100,
            allow_backtrack=allow_bt,
        )
        result = train(train_pairs, val_pairs, CLIENT, cfg, seed=7, exec_cfg=INPROC)
        out[allow_bt] = (cfg, result)
    out["wall_seconds"] = time.monotonic() - t0
    return out


def _heldout_score(policy, cfg) -> float:
    return evaluate_policy(make_pairs(50), CLIENT, policy, cfg, 42, INPROC)


def test_criterion_5_synthetic_training(trained_agents):
    with criterion(5, "synthetic-environment training"):
        cfg, result = trained_agents[True]
        assert result.episodes_run <= 2000
        assert trained_agents["wall_seconds"] < 1800.0
        agent_score = _heldout_score(
            actor_policy(result.actor, deterministic=True), cfg
        )
        random_score = _heldout_score(random_policy(), cfg)
        greedy3_score = _heldout_score(greedy_policy(3), cfg)
        print(
            f"  agent={agent_score:.2f} random={random_score:.2f} "
            f"greedy3={greedy3_score:.2f}"
        )
        assert agent_score >= random_score + 10.0
        assert agent_score >= greedy3_score


def test_criterion_6_backtracking_ablation(trained_agents):
    with criterion(6, "backtracking ablation"):
        cfg_bt, result_bt = trained_agents[True]
        cfg_no, result_no = trained_agents[False]
        bt_score = _heldout_score(
            actor_policy(result_bt.actor, deterministic=True), cfg_bt
        )
        no_bt_score = _heldout_score(
            actor_policy(result_no.actor, allow_backtrack=False, deterministic=True),
            cfg_no,
        )
        print(f"  with_backtrack={bt_score:.2f} without={no_bt_score:.2f}")
        assert bt_score >= no_bt_score


def _serialize_report(report) -> str:
    return json.dumps(
        {
            "aggregates": report.aggregates(),
            "outcomes": [
                [
                    {
                        "pair": o.pair_id,
                        "programs": o.programs,
                        "features": [f.as_tuple() for f in o.features],
                        "final": o.final_features.as_tuple(),
                    }
                    for o in repeat
                ]
                for repeat in report.pair_outcomes
            ],
        },
        sort_keys=True,
    )


def test_criterion_7_determinism_and_averaging():
    with criterion(7, "deterministic averaged evaluation"):
        pairs = make_pairs(4)
        reports = [
            run_reasoning(
                pairs, Greedy(policy_id=3), CLIENT, exec_cfg=INPROC, repeats=2, seed=5
            )
            for _ in range(2)
        ]
        assert _serialize_report(reports[0]) == _serialize_report(reports[1])
        report = reports[0]
        assert report.repeats == 2
        assert len(report.pair_outcomes) == 2
        finals = [
            o.final_features.sim_target * 100
            for repeat in report.pair_outcomes
            for o in repeat
        ]
        assert report.final_similarity == pytest.approx(sum(finals) / len(finals))


def test_criterion_8_classification_metrics():
    with criterion(8, "classification metrics"):
        for labels, verdicts, tp, fp, tn, fn, precision, recall, f1, auc in CONFUSION_CASES:
            r = classification_metrics(labels, verdicts)
            assert (r.tp, r.fp, r.tn, r.fn) == (tp, fp, tn, fn)
            assert (r.precision, r.recall, r.f1, r.roc_auc) == (precision, recall, f1, auc)
        balanced = classification_metrics(
            [True, True, False, False], [True, True, True, True]
        )
        assert balanced.precision == 0.5
        assert balanced.recall == 1.0
        assert balanced.f1 == 2 / 3


def test_criterion_9_greedy_policies():
    with criterion(9, "greedy policy table"):
        for policy_id, cands, expected in GREEDY_TABLE:
            feats = [
                FeatureVector(float(n), float(r), s, s, s, 0.5, 0.5)
                for n, r, s in cands
            ]
            assert greedy_select(policy_id, feats) == expected
