"""Agent tests: returns recursion, action sampling, rewards, termination,
greedy baselines, replay buffer, episode mechanics, and training smoke."""

import math
import random

import pytest

from eqsearch.agent import (
    SIGMA_FLOOR,
    TARGET_SIM,
    AgentConfig,
    FeatureCache,
    ReplayBuffer,
    TerminationState,
    Transition,
    actor_policy,
    bucket_for_sample,
    check_termination,
    discounted_returns,
    evaluate_policy,
    gaussian_log_prob,
    greedy_policy,
    greedy_select,
    random_policy,
    reward_for_step,
    sample_action,
    softplus,
    step_episode,
    train,
    transfer,
)
from eqsearch.gnn import init_params, load_checkpoint
from eqsearch.metrics.features import FeatureVector
from eqsearch.metrics.runner import TestRunConfig
from eqsearch.rtree import Backtrack, Select
from eqsearch.synthetic import SyntheticMutatorClient, SyntheticMutatorConfig

from fixtures import make_pair, make_pairs

INPROC = TestRunConfig(
    interpreter_command="inprocess", per_test_timeout_ms=100, timeout_fail_fast=True
)
CLIENT = SyntheticMutatorClient(SyntheticMutatorConfig(seed=0))


def fv(nu=1.0, rho=1.0, sim=0.5):
    return FeatureVector(nu, rho, sim, sim, sim, 0.5, 0.5)


class TestDiscountedReturns:
    def test_hand_case(self):
        assert discounted_returns([0.0, 0.0, 1.0], 0.5) == [0.25, 0.5, 1.0]

    def test_gamma_one_is_suffix_sum(self):
        assert discounted_returns([1.0, 2.0, 3.0], 1.0) == [6.0, 5.0, 3.0]

    def test_empty(self):
        assert discounted_returns([], 0.9) == []

    def test_recursion_1000_random_sequences(self):
        rng = random.Random(99)
        for _ in range(1000):
            n = rng.randrange(1, 30)
            rewards = [rng.uniform(-2.0, 2.0) for _ in range(n)]
            gamma = rng.uniform(0.01, 1.0)
            d = discounted_returns(rewards, gamma)
            for t in range(n):
                nxt = d[t + 1] if t + 1 < n else 0.0
                assert abs(d[t] - (rewards[t] + gamma * nxt)) <= 1e-12

    def test_gamma_domain(self):
        with pytest.raises(ValueError):
            discounted_returns([1.0], 0.0)
        with pytest.raises(ValueError):
            discounted_returns([1.0], 1.5)


class TestSampling:
    def test_softplus_properties(self):
        assert softplus(0.0) == pytest.approx(math.log(2.0))
        assert softplus(50.0) == pytest.approx(50.0)
        assert softplus(-50.0) == pytest.approx(0.0, abs=1e-12)

    def test_gaussian_log_prob(self):
        assert gaussian_log_prob(0.0, 0.0, 1.0) == pytest.approx(
            -0.5 * math.log(2.0 * math.pi)
        )

    def test_bucket_arithmetic(self):
        # u = logistic(x); index = min(floor(u * K), K - 1)
        assert bucket_for_sample(0.0, 2) == 1  # u = 0.5 exactly
        assert bucket_for_sample(-1.0, 2) == 0
        assert bucket_for_sample(100.0, 11) == 10  # clamped to last bucket
        assert bucket_for_sample(-100.0, 11) == 0

    def test_mc_bucket_frequencies(self):
        # mu=0, sigma=1, K=2: logistic symmetry puts half the mass per bucket
        rng = random.Random(0)
        counts = [0, 0]
        n = 100_000
        for _ in range(n):
            index, _, _ = sample_action(0.0, 1.0, 2, rng)
            counts[index] += 1
        assert counts[0] / n == pytest.approx(0.5, abs=0.01)

    def test_sample_action_returns_density(self):
        rng = random.Random(1)
        index, x, lp = sample_action(0.3, 0.7, 5, rng)
        assert 0 <= index < 5
        assert lp == pytest.approx(gaussian_log_prob(x, 0.3, 0.7))

    def test_k_validation(self):
        with pytest.raises(ValueError):
            sample_action(0.0, 1.0, 0, random.Random(0))


class TestReward:
    CFG = AgentConfig()

    def test_terminal_bonus(self):
        r = reward_for_step(self.CFG, Select(0), fv(sim=1.0), 0.8)
        assert r == pytest.approx(1.0 - 0.8 + 1.0 - 0.01)

    def test_invalid_penalty(self):
        r = reward_for_step(self.CFG, Select(0), fv(nu=0.0, rho=0.0, sim=0.5), 0.5)
        assert r == pytest.approx(-0.2 - 0.01)

    def test_failing_tests_penalized(self):
        r = reward_for_step(self.CFG, Select(0), fv(rho=0.0, sim=0.6), 0.5)
        assert r == pytest.approx(0.1 - 0.2 - 0.01)

    def test_plain_improvement(self):
        r = reward_for_step(self.CFG, Select(0), fv(sim=0.7), 0.5)
        assert r == pytest.approx(0.2 - 0.01)

    def test_backtrack_costs_step_only(self):
        assert reward_for_step(self.CFG, Backtrack(), None, 0.9) == pytest.approx(-0.01)

    def test_no_bonus_when_tests_partially_fail(self):
        # partial pass rate: no invalidity penalty, but no terminal bonus either
        r = reward_for_step(self.CFG, Select(0), fv(rho=0.5, sim=1.0), 0.5)
        assert r == pytest.approx(0.5 - 0.01)


class TestTermination:
    CFG = AgentConfig()

    def test_reached_target(self):
        ts = TerminationState()
        assert check_termination(self.CFG, ts, fv(sim=TARGET_SIM)) == "reached_target"

    def test_high_sim_failing_tests_not_terminal(self):
        ts = TerminationState()
        assert check_termination(self.CFG, ts, fv(rho=0.9, sim=0.999)) is None

    def test_stall_after_m_consecutive(self):
        ts = TerminationState(best_sim_target=0.6)
        assert check_termination(self.CFG, ts, fv(sim=0.6)) is None
        assert check_termination(self.CFG, ts, fv(sim=0.5)) is None
        assert check_termination(self.CFG, ts, fv(sim=0.6)) == "stall_m"

    def test_improvement_resets_stall(self):
        ts = TerminationState(best_sim_target=0.6)
        check_termination(self.CFG, ts, fv(sim=0.5))
        check_termination(self.CFG, ts, fv(sim=0.7))
        assert ts.stall_counter == 0
        assert ts.best_sim_target == pytest.approx(0.7)

    def test_query_cap(self):
        ts = TerminationState(query_count=10, best_sim_target=0.1)
        assert check_termination(self.CFG, ts, fv(sim=0.5)) == "cap_p"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AgentConfig(gamma=0.0)
        with pytest.raises(ValueError):
            AgentConfig(m_stall=0)
        with pytest.raises(ValueError):
            AgentConfig(p_max_queries=0)
        assert AgentConfig().effective_action_cap == 30
        assert AgentConfig(action_cap=7).effective_action_cap == 7


from tables import GREEDY_TABLE


class TestGreedySelect:
    @pytest.mark.parametrize("policy_id,cands,expected", GREEDY_TABLE)
    def test_table(self, policy_id, cands, expected):
        feats = [fv(nu=float(n), rho=float(r), sim=s) for n, r, s in cands]
        assert greedy_select(policy_id, feats) == expected

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            greedy_select(4, [fv()])

    def test_empty_candidates(self):
        with pytest.raises(ValueError):
            greedy_select(1, [])


class TestReplayBuffer:
    def make_transition(self, i):
        return Transition(
            state=None, legal_count=2, action_index=i % 2, action=Select(0),
            reward=0.0, next_state=None, terminal=False, x=0.0, mu=0.0, sigma=1.0,
        )

    def test_capacity_ring(self):
        buf = ReplayBuffer(3)
        for i in range(5):
            buf.push(self.make_transition(i))
        assert len(buf) == 3

    def test_sample_bounded(self):
        buf = ReplayBuffer(10)
        for i in range(4):
            buf.push(self.make_transition(i))
        assert len(buf.sample(8, random.Random(0))) == 4
        assert len(buf.sample(2, random.Random(0))) == 2

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)

    def test_transition_index_validation(self):
        with pytest.raises(ValueError):
            Transition(
                state=None, legal_count=2, action_index=2, action=Select(0),
                reward=0.0, next_state=None, terminal=False, x=0.0, mu=0.0, sigma=1.0,
            )


class TestEpisode:
    def test_episode_structure(self):
        pair = make_pair(0)
        rng = random.Random(0)
        res = step_episode(pair, CLIENT, random_policy(), AgentConfig(), rng, INPROC)
        assert res.termination_reason in ("reached_target", "stall_m", "cap_p", "action_cap")
        assert res.llm_query_count <= 10
        assert len(res.actions) <= AgentConfig().effective_action_cap
        assert res.programs[0] == pair.source.source
        assert len(res.rewards) == len(res.actions)
        assert res.final_features is not None

    def test_identical_pair_terminates_immediately(self):
        pair = make_pair(0)
        same = type(pair)(
            source=pair.source, target=pair.source, tests=pair.tests, label="equivalent"
        )
        res = step_episode(same, CLIENT, random_policy(), AgentConfig(), random.Random(0), INPROC)
        assert res.termination_reason == "reached_target"
        assert res.llm_query_count == 0
        assert res.actions == []

    def test_fuzz_episode_budgets(self):
        """1000 fuzzed episodes: queries <= p, actions <= cap, legality holds."""
        pair = make_pair(0)
        cache = FeatureCache()
        cfg = AgentConfig()
        policies = [random_policy(), random_policy(allow_backtrack=False),
                    greedy_policy(1), greedy_policy(2), greedy_policy(3)]
        for trial in range(1000):
            rng = random.Random(trial)
            policy = policies[trial % len(policies)]
            res = step_episode(pair, CLIENT, policy, cfg, rng, INPROC, feature_cache=cache)
            assert res.llm_query_count <= cfg.p_max_queries
            assert len(res.actions) <= cfg.effective_action_cap
            assert res.termination_reason in ("reached_target", "stall_m", "cap_p", "action_cap")
            # transition returns obey the recursion against episode rewards
            if res.transitions:
                d = discounted_returns(res.rewards, cfg.gamma)
                ri = 0
                for i, action in enumerate(res.actions):
                    if ri < len(res.transitions) and res.transitions[ri].action is action:
                        assert res.transitions[ri].discounted_return == pytest.approx(d[i])
                        ri += 1

    def test_actor_policy_runs_episode(self):
        pair = make_pair(0)
        actor = init_params(0, 2)
        res = step_episode(
            pair, CLIENT, actor_policy(actor), AgentConfig(), random.Random(0), INPROC
        )
        assert res.llm_query_count <= 10
        assert all(tr.sigma >= SIGMA_FLOOR for tr in res.transitions)

    def test_keep_tree(self):
        pair = make_pair(0)
        res = step_episode(
            pair, CLIENT, random_policy(), AgentConfig(), random.Random(0), INPROC,
            keep_tree=True,
        )
        assert res.tree is not None
        assert res.tree.path_to_root()[-1] == res.tree.cursor


class TestTraining:
    def test_train_smoke_and_checkpoint(self, tmp_path):
        pairs = make_pairs(2)
        cfg = AgentConfig(max_episodes=6, batch_size=4, eval_every=3)
        ck = tmp_path / "agent.bin"
        curve = tmp_path / "curve.csv"
        result = train(
            pairs, pairs[:1], CLIENT, cfg, seed=0, exec_cfg=INPROC,
            curve_path=curve, checkpoint_path=ck,
        )
        assert result.episodes_run == 6
        assert ck.exists() and curve.exists()
        assert curve.read_text().splitlines()[0] == (
            "episode,mean_reward,validation_sim_target,actor_loss,critic_loss"
        )
        actor, critic, seed, meta = load_checkpoint(ck)
        assert seed == 0
        assert actor.head_dim == 2 and critic.head_dim == 1

    def test_train_requires_pairs(self):
        with pytest.raises(ValueError):
            train([], [], CLIENT, AgentConfig(max_episodes=1), seed=0)

    def test_stabilization_stops_early(self):
        pairs = make_pairs(1)
        # enormous epsilon: window fills after stabilization_window evals
        cfg = AgentConfig(
            max_episodes=50, eval_every=2, stabilization_window=2,
            stabilization_epsilon=1e9, batch_size=4,
        )
        result = train(pairs, pairs, CLIENT, cfg, seed=0, exec_cfg=INPROC)
        assert result.stabilized
        assert result.episodes_run == 4

    def test_transfer_zero_episodes_is_identity(self, tmp_path):
        import numpy as np

        pairs = make_pairs(1)
        src = tmp_path / "src.bin"
        dst = tmp_path / "dst.bin"
        cfg = AgentConfig(max_episodes=2, batch_size=2, eval_every=10)
        train(pairs, [], CLIENT, cfg, seed=3, exec_cfg=INPROC, checkpoint_path=src)
        transfer(src, pairs, [], CLIENT, cfg, seed=4, exec_cfg=INPROC,
                 max_episodes=0, out_checkpoint_path=dst)
        a1, c1, _, _ = load_checkpoint(src)
        a2, c2, _, _ = load_checkpoint(dst)
        for p, q in zip(a1.flat() + c1.flat(), a2.flat() + c2.flat()):
            assert np.array_equal(p, q)

    def test_evaluate_policy_deterministic(self):
        pairs = make_pairs(2)
        cfg = AgentConfig()
        a = evaluate_policy(pairs, CLIENT, greedy_policy(3), cfg, 42, INPROC)
        b = evaluate_policy(pairs, CLIENT, greedy_policy(3), cfg, 42, INPROC)
        assert a == b
        assert 0.0 <= a <= 100.0
