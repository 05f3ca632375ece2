"""Deep Q-learning loop: epsilon-greedy selection, replay memory, frozen target network."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import AgentConfig, EpisodeConfig
from .entities import OfflineSchedule
from .environment import N_FEATURES, EpisodeTotals, ShiftExtensionEnv, is_terminal
from .matching import catalog_fingerprint
from .neuralnet import AdamState, Checkpoint, Params, adam_step, clone_params, forward, init_params, mse_loss_and_gradient
from .world import WorldMap

log = logging.getLogger(__name__)

# SeedSequence tags keeping training, evaluation and agent streams disjoint
TRAIN_TAG = 1
AGENT_TAG = 2
EVAL_TAG = 3


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions."""

    def __init__(self, capacity: int, n_features: int = N_FEATURES):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, n_features))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, n_features))
        self.terminals = np.zeros(capacity, dtype=bool)
        self._head = 0  # next write slot
        self._size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self._size

    def push(self, exp: Experience) -> None:
        i = self._head
        self.states[i] = exp.state
        self.actions[i] = exp.action
        self.rewards[i] = exp.reward
        self.next_states[i] = exp.next_state
        self.terminals[i] = exp.terminal
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushed += 1

    def _slot(self, age_index: int) -> int:
        # age_index 0 is the oldest stored entry
        oldest = (self._head - self._size) % self.capacity
        return (oldest + age_index) % self.capacity

    def __getitem__(self, age_index: int) -> Experience:
        if not 0 <= age_index < self._size:
            raise IndexError(age_index)
        i = self._slot(age_index)
        return Experience(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                          self.next_states[i].copy(), bool(self.terminals[i]))

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Distinct storage slots, uniformly without replacement."""
        if n > self._size:
            raise ValueError(f"cannot sample {n} from {self._size}")
        return rng.choice(self._size, size=n, replace=False)

    def batch(self, slots: np.ndarray):
        return (self.states[slots], self.actions[slots], self.rewards[slots],
                self.next_states[slots], self.terminals[slots])


def select_action(q_params: Params, features: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random index with probability ``epsilon``, else the lowest-index argmax."""
    n_actions = q_params[-1][1].shape[0]
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(forward(q_params, features)))


def decay_epsilon(epsilon: float, retention: float = 0.99999, minimum: float = 0.01) -> float:
    return max(minimum, epsilon * retention)


def compute_targets(target_params: Params, rewards, next_states, terminals, gamma: float) -> np.ndarray:
    """Bellman targets ``r + gamma * max_a' Q_target(s', a')``; terminal samples do not bootstrap."""
    rewards = np.asarray(rewards, dtype=np.float64)
    next_q = forward(target_params, np.atleast_2d(next_states)).max(axis=1)
    return rewards + gamma * next_q * (~np.asarray(terminals, dtype=bool))


def train_step(
    q_params: Params,
    target_params: Params,
    memory: ReplayMemory,
    adam: AdamState,
    config: AgentConfig,
    rng: np.random.Generator,
) -> float | None:
    """One Adam step on a uniform minibatch; ``None`` while the memory holds fewer than a batch."""
    if len(memory) < config.batch_size:
        return None
    slots = memory.sample_indices(config.batch_size, rng)
    s, a, r, s2, done = memory.batch(slots)
    targets = compute_targets(target_params, r, s2, done, config.gamma)
    loss, grads = mse_loss_and_gradient(q_params, s, a, targets)
    adam_step(q_params, adam, grads)
    return loss


def sync_target(q_params: Params, target_params: Params, global_epoch: int, period: int) -> Params:
    """Return a fresh clone of the Q-network every ``period``-th global epoch, else ``target_params``."""
    if global_epoch % period == 0:
        return clone_params(q_params)
    return target_params


@dataclass
class DQNLearner:
    """Q-network, target network, optimizer and replay memory bundled for a training run."""

    q_params: Params
    target_params: Params
    adam: AdamState
    memory: ReplayMemory
    config: AgentConfig
    rng: np.random.Generator
    epsilon: float
    global_epoch: int = 0

    @classmethod
    def create(cls, n_features: int, n_actions: int, config: AgentConfig, rng: np.random.Generator) -> DQNLearner:
        q = init_params([n_features, *config.hidden_layers, n_actions], rng)
        adam = AdamState.zeros_like(q, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
        return cls(q, clone_params(q), adam, ReplayMemory(config.memory_size, n_features), config, rng,
                   config.epsilon_start)

    def act(self, features: np.ndarray) -> int:
        return select_action(self.q_params, features, self.epsilon, self.rng)

    def observe(self, exp: Experience) -> float | None:
        """Store, learn, decay epsilon, maybe sync the target: one decision epoch of bookkeeping."""
        self.memory.push(exp)
        loss = train_step(self.q_params, self.target_params, self.memory, self.adam, self.config, self.rng)
        self.epsilon = decay_epsilon(self.epsilon, self.config.epsilon_decay, self.config.epsilon_min)
        self.global_epoch += 1
        self.target_params = sync_target(self.q_params, self.target_params, self.global_epoch,
                                         self.config.target_sync)
        return loss


@dataclass
class TrainingResult:
    params: Params
    episode_rewards: list[float] = field(default_factory=list)
    episode_losses: list[float] = field(default_factory=list)
    episode_epsilons: list[float] = field(default_factory=list)
    episode_totals: list[EpisodeTotals] = field(default_factory=list)
    adam: AdamState | None = None
    fingerprint: str = ""

    @property
    def cumulative_average(self) -> list[float]:
        out, acc = [], 0.0
        for i, r in enumerate(self.episode_rewards, 1):
            acc += r
            out.append(acc / i)
        return out

    def checkpoint(self, meta: dict | None = None) -> Checkpoint:
        return Checkpoint(clone_params(self.params), self.fingerprint, self.adam, dict(meta or {}))


def episode_seed(master_seed: int, tag: int, *index: int) -> list[int]:
    return [int(master_seed), tag, *map(int, index)]


def train(
    env_config: EpisodeConfig,
    agent_config: AgentConfig,
    seed: int,
    world: WorldMap | None = None,
    schedule: OfflineSchedule | None = None,
    on_episode: Callable[[int, TrainingResult], None] | None = None,
) -> TrainingResult:
    """Run ``agent_config.episodes`` training episodes; bit-reproducible for a fixed seed."""
    env = ShiftExtensionEnv(env_config, world, schedule)
    env.check_invariants = False  # catalog expansions are feasible by construction
    rng = np.random.default_rng(np.random.SeedSequence(episode_seed(seed, AGENT_TAG)))
    learner = DQNLearner.create(N_FEATURES, env.n_actions, agent_config, rng)
    result = TrainingResult(learner.q_params, adam=learner.adam,
                            fingerprint=catalog_fingerprint(env_config.extension.max_notified))
    scale = agent_config.reward_scale
    for ep in range(agent_config.episodes):
        state = env.reset(episode_seed(seed, TRAIN_TAG, ep))
        feats = env.observe(state)
        losses = []
        while not is_terminal(state):
            a = learner.act(feats)
            out = env.apply_action(a)
            next_feats = env.observe(out.next_state)
            loss = learner.observe(Experience(feats, a, out.reward * scale, next_feats, out.done))
            if loss is not None:
                losses.append(loss)
            state, feats = out.next_state, next_feats
        result.params = learner.q_params
        result.episode_rewards.append(env.totals.reward)
        result.episode_losses.append(float(np.mean(losses)) if losses else math.nan)
        result.episode_epsilons.append(learner.epsilon)
        result.episode_totals.append(env.totals)
        log.debug("episode %d reward %.2f loss %.4g eps %.4f", ep, env.totals.reward,
                  result.episode_losses[-1], learner.epsilon)
        if on_episode is not None:
            on_episode(ep, result)
    result.params = learner.q_params
    return result
