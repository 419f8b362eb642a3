"""Actor-critic search agent over the reasoning tree.

The actor network reads the tree state and emits (mu, sigma) at the cursor
node; a Gaussian sample squashed through a logistic maps onto the K legal
actions (Backtrack when legal, then the unexplored candidates in order).
Training is policy-gradient with experience replay: stored transitions keep
the raw Gaussian sample, and log-probabilities are recomputed under the
current parameters at update time.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .gnn import (
    Adam,
    GatNetworkParams,
    Gradients,
    actor_readout,
    actor_upstream,
    critic_upstream,
    critic_value,
    init_params,
    load_checkpoint,
    network_backward,
    network_forward,
    save_checkpoint,
)
from .llmio import GenerationParams, LlmClient, request_candidates
from .metrics.codebleu import CodeBleuConfig
from .metrics.features import FeatureVector, build_feature_vector
from .metrics.runner import TestRunConfig
from .rtree import (
    Action,
    Backtrack,
    GraphEncoding,
    ProgramStore,
    ProtocolError,
    ReasoningTree,
    Select,
    new_tree,
)

SIGMA_FLOOR = 1e-3
TARGET_SIM = 0.995


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    learning_rate: float = 1e-3
    replay_capacity: int = 5000
    batch_size: int = 32
    max_episodes: int = 2000
    stabilization_window: int = 5
    stabilization_epsilon: float = 1.0  # CodeBLEU points on the 0-100 scale
    n_candidates: int = 10
    m_stall: int = 3
    p_max_queries: int = 10
    action_cap: Optional[int] = None  # defaults to 3 * p_max_queries
    eval_every: int = 50
    allow_backtrack: bool = True
    invalid_penalty: float = 0.2
    step_cost: float = 0.01
    terminal_bonus: float = 1.0
    entropy_beta: float = 1e-3
    grad_clip: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.m_stall < 1:
            raise ValueError("m_stall must be >= 1")
        if self.p_max_queries < 1:
            raise ValueError("p_max_queries must be >= 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")

    @property
    def effective_action_cap(self) -> int:
        return self.action_cap if self.action_cap is not None else 3 * self.p_max_queries


@dataclass
class Transition:
    state: GraphEncoding
    legal_count: int
    action_index: int
    action: Action
    reward: float
    next_state: GraphEncoding
    terminal: bool
    x: float  # raw Gaussian sample at decision time
    mu: float
    sigma: float
    discounted_return: float = 0.0

    def __post_init__(self):
        if not 0 <= self.action_index < self.legal_count:
            raise ValueError(
                f"action index {self.action_index} outside legal count {self.legal_count}"
            )


class ReplayBuffer:
    """Capacity-bounded ring buffer with seeded uniform batch sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: random.Random) -> list[Transition]:
        k = min(batch_size, len(self._items))
        return rng.sample(self._items, k)


@dataclass
class TerminationState:
    stall_counter: int = 0
    query_count: int = 0
    best_sim_target: float = 0.0


@dataclass
class EpisodeResult:
    pair_id: str
    programs: list[str]  # root-to-cursor chain at termination
    step_features: list[FeatureVector]  # features of each selected node, in order
    actions: list[Action]
    termination_reason: str  # reached_target | stall_m | cap_p | action_cap
    llm_query_count: int
    rewards: list[float] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    final_features: Optional[FeatureVector] = None
    tree: Optional[ReasoningTree] = None


def softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def action_distribution(
    tree: ReasoningTree, actor_params: GatNetworkParams
) -> tuple[float, float, list[Action]]:
    """(mu, sigma, legal actions) at the cursor; sigma is floored softplus."""
    legal = tree.legal_actions()
    if not legal:
        raise ProtocolError("no legal actions: episode must terminate first")
    trace = network_forward(tree.to_graph_encoding(), actor_params)
    mu_raw, sigma_raw = actor_readout(trace)
    return mu_raw, softplus(sigma_raw) + SIGMA_FLOOR, legal


def gaussian_log_prob(x: float, mu: float, sigma: float) -> float:
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)


def sample_action(
    mu: float, sigma: float, K: int, rng: random.Random
) -> tuple[int, float, float]:
    """Draw x ~ N(mu, sigma), squash to (0,1), bucket into K actions.

    Returns (bucket index, raw sample x, Gaussian log-density of x); the
    discretization is deterministic post-processing and carries no density.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    x = rng.gauss(mu, sigma)
    u = 1.0 / (1.0 + math.exp(-x))
    index = min(int(u * K), K - 1)
    return index, x, gaussian_log_prob(x, mu, sigma)


def bucket_for_sample(x: float, K: int) -> int:
    u = 1.0 / (1.0 + math.exp(-x))
    return min(int(u * K), K - 1)


def reward_for_step(
    cfg: AgentConfig,
    action: Action,
    selected: Optional[FeatureVector],
    prev_sim_target: float,
) -> float:
    """Similarity delta + terminal bonus − invalidity penalty − step cost."""
    if isinstance(action, Backtrack):
        return -cfg.step_cost
    assert selected is not None
    r = (selected.sim_target - prev_sim_target) - cfg.step_cost
    if selected.nu == 0.0 or selected.rho == 0.0:
        r -= cfg.invalid_penalty
    if selected.rho == 1.0 and selected.sim_target >= TARGET_SIM:
        r += cfg.terminal_bonus
    return r


def discounted_returns(rewards: list[float], gamma: float) -> list[float]:
    """D_t = R_{t+1} + gamma * D_{t+1}, computed right to left."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def check_termination(
    cfg: AgentConfig, ts: TerminationState, latest: FeatureVector
) -> Optional[str]:
    """Update the stall state with the latest selection; report a stop reason."""
    if latest.rho == 1.0 and latest.sim_target >= TARGET_SIM:
        return "reached_target"
    if latest.rho == 0.0 or latest.sim_target <= ts.best_sim_target:
        ts.stall_counter += 1
    else:
        ts.stall_counter = 0
        ts.best_sim_target = latest.sim_target
    if ts.stall_counter >= cfg.m_stall:
        return "stall_m"
    if ts.query_count >= cfg.p_max_queries:
        return "cap_p"
    return None


# A policy maps the current tree to (action index into legal actions, record);
# record is (x, mu, sigma) for the trainable actor and None for baselines.
PolicyFn = Callable[[ReasoningTree, random.Random], tuple[int, Optional[tuple[float, float, float]]]]


def actor_policy(
    actor_params: GatNetworkParams,
    allow_backtrack: bool = True,
    deterministic: bool = False,
) -> PolicyFn:
    def choose(tree: ReasoningTree, rng: random.Random):
        mu, sigma, legal = action_distribution(tree, actor_params)
        offset = 0
        if not allow_backtrack and isinstance(legal[0], Backtrack):
            offset = 1
        K = len(legal) - offset
        if K == 0:
            return 0, None  # only Backtrack is legal; forced move
        if deterministic:
            x = mu
        else:
            x = rng.gauss(mu, sigma)
        index = bucket_for_sample(x, K)
        return index + offset, (x, mu, sigma)

    return choose


def random_policy(allow_backtrack: bool = True) -> PolicyFn:
    def choose(tree: ReasoningTree, rng: random.Random):
        legal = tree.legal_actions()
        offset = 1 if (not allow_backtrack and isinstance(legal[0], Backtrack)) else 0
        if len(legal) - offset == 0:
            return 0, None
        return offset + rng.randrange(len(legal) - offset), None

    return choose


def greedy_select(policy_id: int, candidates: list[FeatureVector]) -> int:
    """Index of the greedy pick among candidate feature vectors.

    Policy 1 maximizes syntactic correctness, Policy 2 test pass rate,
    Policy 3 the sum nu + rho + sim_target; ties break toward earlier
    candidates (via the secondary metrics for policies 1 and 2).
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if policy_id == 1:
        key = lambda f: (f.nu, f.rho, f.sim_target)
    elif policy_id == 2:
        key = lambda f: (f.rho, f.nu, f.sim_target)
    elif policy_id == 3:
        key = lambda f: (f.nu + f.rho + f.sim_target,)
    else:
        raise ValueError(f"unknown greedy policy {policy_id}")
    best = 0
    for i in range(1, len(candidates)):
        if key(candidates[i]) > key(candidates[best]):
            best = i
    return best


def greedy_policy(policy_id: int) -> PolicyFn:
    def choose(tree: ReasoningTree, rng: random.Random):
        legal = tree.legal_actions()
        offset = 1 if isinstance(legal[0], Backtrack) else 0
        unexplored = tree.unexplored_children(tree.cursor)
        feats = [tree.node(nid).features for nid in unexplored]
        return offset + greedy_select(policy_id, feats), None

    return choose


class FeatureCache:
    """Memoizes feature vectors per (candidate, parent) within one pair."""

    def __init__(self):
        self._store: dict[tuple[str, str], FeatureVector] = {}

    def get(
        self,
        candidate: str,
        source: str,
        parent: str,
        target: str,
        tests,
        exec_cfg,
        cb_cfg,
    ) -> FeatureVector:
        key = (candidate, parent)
        hit = self._store.get(key)
        if hit is None:
            hit = build_feature_vector(candidate, source, parent, target, tests, exec_cfg, cb_cfg)
            self._store[key] = hit
        return hit


def step_episode(
    pair,
    client: LlmClient,
    policy: PolicyFn,
    cfg: AgentConfig,
    rng: random.Random,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    gen_params: GenerationParams | None = None,
    feature_cache: FeatureCache | None = None,
    keep_tree: bool = False,
) -> EpisodeResult:
    """One full search episode over a program pair.

    Expansion is lazy: when the cursor has no unexplored children, one batch
    of n candidates is requested (counting toward the query budget p) and
    validated before the policy acts.  The returned transformation sequence
    is the root-to-cursor program chain at termination.
    """
    if not pair.tests:
        raise ValueError("pair has no tests")
    gen_params = gen_params or GenerationParams()
    cache = feature_cache or FeatureCache()
    a, b = pair.source.source, pair.target.source

    store = ProgramStore()
    root_feats = cache.get(a, a, a, b, pair.tests, exec_cfg, cb_cfg)
    tree = new_tree(root_feats, store.add(a))
    ts = TerminationState(best_sim_target=root_feats.sim_target)

    actions: list[Action] = []
    rewards: list[float] = []
    step_features: list[FeatureVector] = []
    transitions: list[Transition] = []
    reason: Optional[str] = None

    if root_feats.rho == 1.0 and root_feats.sim_target >= TARGET_SIM:
        reason = "reached_target"

    while reason is None:
        if not tree.unexplored_children(tree.cursor):
            if ts.query_count >= cfg.p_max_queries:
                reason = "cap_p"
                break
            current = store.get(tree.node(tree.cursor).program_ref)
            candidates = request_candidates(client, current, b, cfg.n_candidates, gen_params)
            ts.query_count += 1
            batch = [
                (cache.get(c, a, current, b, pair.tests, exec_cfg, cb_cfg), store.add(c))
                for c in candidates
            ]
            tree.add_candidates(tree.cursor, batch)

        legal = tree.legal_actions()
        state = tree.to_graph_encoding()
        index, record = policy(tree, rng)
        action = legal[index]
        prev_sim = tree.node(tree.cursor).features.sim_target
        tree.apply_action(action)
        actions.append(action)

        if isinstance(action, Select):
            latest = tree.node(tree.cursor).features
            step_features.append(latest)
            r = reward_for_step(cfg, action, latest, prev_sim)
            reason = check_termination(cfg, ts, latest)
        else:
            r = reward_for_step(cfg, action, None, prev_sim)
        rewards.append(r)

        if len(actions) >= cfg.effective_action_cap and reason is None:
            reason = "action_cap"

        if record is not None:
            x, mu, sigma = record
            transitions.append(
                Transition(
                    state=state,
                    legal_count=len(legal),
                    action_index=index,
                    action=action,
                    reward=r,
                    next_state=tree.to_graph_encoding(),
                    terminal=reason is not None,
                    x=x,
                    mu=mu,
                    sigma=sigma,
                )
            )

    returns = discounted_returns(rewards, cfg.gamma)
    ri = 0
    for i, action in enumerate(actions):
        if ri < len(transitions) and transitions[ri].action is actions[i]:
            transitions[ri].discounted_return = returns[i]
            ri += 1

    chain = [store.get(tree.node(nid).program_ref) for nid in tree.path_to_root()]
    return EpisodeResult(
        pair_id=pair.pair_id,
        programs=chain,
        step_features=step_features,
        actions=actions,
        termination_reason=reason,
        llm_query_count=ts.query_count,
        rewards=rewards,
        transitions=transitions,
        final_features=tree.node(tree.cursor).features,
        tree=tree if keep_tree else None,
    )


def _accumulate(total: Optional[Gradients], grads: Gradients) -> Gradients:
    if total is None:
        return grads
    for (tw, ta), (gw, ga) in zip(total.layers, grads.layers):
        tw += gw
        ta += ga
    return total


def _clip_gradients(grads: Gradients, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.flat()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.flat():
            g *= scale


def _update_networks(
    batch: list[Transition],
    actor: GatNetworkParams,
    critic: GatNetworkParams,
    actor_opt: Adam,
    critic_opt: Adam,
    cfg: AgentConfig,
) -> tuple[float, float]:
    """One replay-batch gradient step; returns (actor_loss, critic_loss)."""
    n = len(batch)
    critic_traces = [network_forward(tr.state, critic) for tr in batch]
    advantages = [
        tr.discounted_return - critic_value(trace)
        for tr, trace in zip(batch, critic_traces)
    ]
    # normalized advantages stabilize the replayed policy gradient
    mean_adv = sum(advantages) / n
    std_adv = math.sqrt(sum((a - mean_adv) ** 2 for a in advantages) / n) + 1e-8
    norm_adv = [(a - mean_adv) / std_adv for a in advantages]

    actor_grads: Optional[Gradients] = None
    critic_grads: Optional[Gradients] = None
    actor_loss = 0.0
    critic_loss = 0.0
    for tr, trace, adv, nadv in zip(batch, critic_traces, advantages, norm_adv):
        actor_trace = network_forward(tr.state, actor)
        mu_raw, sigma_raw = actor_readout(actor_trace)
        sigma = softplus(sigma_raw) + SIGMA_FLOOR
        log_prob = gaussian_log_prob(tr.x, mu_raw, sigma)
        actor_loss += -log_prob * nadv / n

        # d(-logp*adv)/dmu and /dsigma, chained through the softplus; z is
        # clamped because stale replayed samples can sit far outside the
        # current distribution
        z = max(-6.0, min(6.0, (tr.x - mu_raw) / sigma))
        d_mu = -nadv * (z / sigma) / n
        d_sigma = (-nadv * ((z * z - 1.0) / sigma) - cfg.entropy_beta / sigma) / n
        d_sigma_raw = d_sigma / (1.0 + math.exp(-sigma_raw))
        actor_grads = _accumulate(
            actor_grads, network_backward(actor_trace, actor_upstream(actor_trace, d_mu, d_sigma_raw))
        )

        critic_loss += adv * adv / n
        d_value = -2.0 * adv / n
        critic_grads = _accumulate(
            critic_grads, network_backward(trace, critic_upstream(trace) * d_value)
        )
    _clip_gradients(actor_grads, cfg.grad_clip)
    _clip_gradients(critic_grads, cfg.grad_clip)
    actor_opt.step(actor_grads)
    critic_opt.step(critic_grads)
    return actor_loss, critic_loss


def evaluate_policy(
    pairs,
    client: LlmClient,
    policy: PolicyFn,
    cfg: AgentConfig,
    seed: int,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    caches: dict[str, FeatureCache] | None = None,
) -> float:
    """Mean final sim(., B) over pairs, on the 0-100 scale."""
    total = 0.0
    for i, pair in enumerate(pairs):
        rng = random.Random((seed, i, pair.pair_id).__repr__())
        cache = None if caches is None else caches.setdefault(pair.pair_id, FeatureCache())
        result = step_episode(
            pair, client, policy, cfg, rng, exec_cfg, cb_cfg, feature_cache=cache
        )
        total += result.final_features.sim_target * 100.0
    return total / len(pairs) if pairs else 0.0


@dataclass
class TrainResult:
    actor: GatNetworkParams
    critic: GatNetworkParams
    curve: list[dict]
    episodes_run: int
    stabilized: bool


def train(
    train_pairs,
    validation_pairs,
    client: LlmClient,
    cfg: AgentConfig,
    seed: int,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    init: tuple[GatNetworkParams, GatNetworkParams] | None = None,
    curve_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
) -> TrainResult:
    """Actor-critic training with experience replay on equivalent pairs.

    Stops early when the validation mean final similarity moves less than
    stabilization_epsilon across the stabilization window.  The returned and
    checkpointed parameters are the ones from the best validation evaluation
    (falling back to the final episode when validation never ran).
    """
    if not train_pairs:
        raise ValueError("training set is empty")
    if init is not None:
        actor, critic = init[0].copy(), init[1].copy()
    else:
        actor = init_params(seed, head_dim=2)
        critic = init_params(seed + 1, head_dim=1)
    actor_opt = Adam(actor, lr=cfg.learning_rate)
    critic_opt = Adam(critic, lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.replay_capacity)
    rng = random.Random(seed)
    sample_rng = random.Random(seed + 1)

    caches: dict[str, FeatureCache] = {}
    curve: list[dict] = []
    val_history: list[float] = []
    stabilized = False
    episodes_run = 0
    best: tuple[float, GatNetworkParams, GatNetworkParams] | None = None

    for episode in range(cfg.max_episodes):
        pair = train_pairs[rng.randrange(len(train_pairs))]
        cache = caches.setdefault(pair.pair_id, FeatureCache())
        policy = actor_policy(actor, allow_backtrack=cfg.allow_backtrack)
        result = step_episode(
            pair, client, policy, cfg, rng, exec_cfg, cb_cfg, feature_cache=cache
        )
        for tr in result.transitions:
            buffer.push(tr)

        actor_loss = critic_loss = 0.0
        if len(buffer) >= cfg.batch_size:
            batch = buffer.sample(cfg.batch_size, sample_rng)
            actor_loss, critic_loss = _update_networks(
                batch, actor, critic, actor_opt, critic_opt, cfg
            )
        episodes_run = episode + 1

        if validation_pairs and episodes_run % cfg.eval_every == 0:
            val_policy = actor_policy(
                actor, allow_backtrack=cfg.allow_backtrack, deterministic=True
            )
            val = evaluate_policy(
                validation_pairs, client, val_policy, cfg, seed, exec_cfg, cb_cfg, caches
            )
            val_history.append(val)
            if best is None or val > best[0]:
                best = (val, actor.copy(), critic.copy())
            curve.append(
                {
                    "episode": episodes_run,
                    "mean_reward": sum(result.rewards) / max(len(result.rewards), 1),
                    "validation_sim_target": val,
                    "actor_loss": actor_loss,
                    "critic_loss": critic_loss,
                }
            )
            window = val_history[-cfg.stabilization_window :]
            if (
                len(window) == cfg.stabilization_window
                and max(window) - min(window) < cfg.stabilization_epsilon
            ):
                stabilized = True
                break

    # validation curves oscillate under replayed off-policy updates; keep the
    # parameters from the best validation point, not the final episode
    if best is not None:
        actor, critic = best[1], best[2]

    if curve_path is not None:
        with open(curve_path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=[
                    "episode",
                    "mean_reward",
                    "validation_sim_target",
                    "actor_loss",
                    "critic_loss",
                ],
            )
            writer.writeheader()
            writer.writerows(curve)
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            actor,
            critic,
            seed,
            {"episodes_run": episodes_run, "stabilized": stabilized},
        )
    return TrainResult(
        actor=actor, critic=critic, curve=curve, episodes_run=episodes_run, stabilized=stabilized
    )


def transfer(
    checkpoint_path: str | Path,
    train_pairs,
    validation_pairs,
    client: LlmClient,
    cfg: AgentConfig,
    seed: int,
    exec_cfg: TestRunConfig | None = None,
    cb_cfg: CodeBleuConfig | None = None,
    max_episodes: Optional[int] = None,
    out_checkpoint_path: str | Path | None = None,
    curve_path: str | Path | None = None,
) -> TrainResult:
    """Continue training from a checkpoint on a new environment.

    Defaults to 10% of the configured episode budget; with 0 episodes the
    output parameters equal the input checkpoint.
    """
    actor, critic, _, _ = load_checkpoint(checkpoint_path)
    budget = max_episodes if max_episodes is not None else max(cfg.max_episodes // 10, 1)
    cfg = replace(cfg, max_episodes=budget)
    if budget == 0:
        result = TrainResult(actor=actor, critic=critic, curve=[], episodes_run=0, stabilized=False)
        if out_checkpoint_path is not None:
            save_checkpoint(out_checkpoint_path, actor, critic, seed, {"episodes_run": 0})
        return result
    return train(
        train_pairs,
        validation_pairs,
        client,
        cfg,
        seed,
        exec_cfg,
        cb_cfg,
        init=(actor, critic),
        curve_path=curve_path,
        checkpoint_path=out_checkpoint_path,
    )
