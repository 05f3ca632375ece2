"""Evaluation policies and the replicated evaluation harness."""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .agent import EVAL_TAG, episode_seed
from .config import EpisodeConfig
from .entities import OfflineSchedule
from .environment import ShiftExtensionEnv, SystemState, is_terminal, reward_breakdown
from .matching import RULES, CompositeAction, action_catalog, catalog_fingerprint, expand
from .neuralnet import Checkpoint, Params, forward
from .world import WorldMap


class Policy:
    name = "policy"

    def reset(self, run_index: int) -> None:
        """Called at the start of every evaluation run."""

    def decide(self, features: np.ndarray, state: SystemState, config: EpisodeConfig) -> CompositeAction:
        raise NotImplementedError


class TrainedDqnPolicy(Policy):
    """Greedy (epsilon = 0) argmax over a frozen Q-network."""

    name = "dqn"

    def __init__(self, params: Params, fingerprint: str, max_notified: int):
        expected = catalog_fingerprint(max_notified)
        if fingerprint != expected:
            raise ValueError(f"checkpoint catalog {fingerprint} does not match evaluation catalog {expected}")
        self.params = params
        self.catalog = action_catalog(max_notified)
        if params[-1][1].shape[0] != len(self.catalog):
            raise ValueError("network output width does not match the action catalog")

    @classmethod
    def from_checkpoint(cls, path: str | Path, max_notified: int) -> TrainedDqnPolicy:
        ckpt = Checkpoint.load(path, expected_fingerprint=catalog_fingerprint(max_notified))
        return cls(ckpt.params, ckpt.catalog_fingerprint, max_notified)

    def decide(self, features, state, config):
        return self.catalog[int(np.argmax(forward(self.params, features)))]


class NoExtensionPolicy(Policy):
    """Baseline: never notify; pick the assignment rule with the best one-epoch reward."""

    name = "no_extension"

    def decide(self, features, state, config):
        best, best_value = None, -math.inf
        for rule in RULES:
            action = CompositeAction(0, rule)
            value = reward_breakdown(state, expand(state, action, config), config).total
            if value > best_value:
                best, best_value = action, value
        return best


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.reset(0)

    def reset(self, run_index: int) -> None:
        self.rng = np.random.default_rng([self.seed, run_index])

    def decide(self, features, state, config):
        catalog = action_catalog(config.extension.max_notified)
        return catalog[int(self.rng.integers(len(catalog)))]


class FixedPolicy(Policy):
    """Always the same catalog entry; a reference point for equivalence checks."""

    def __init__(self, action: CompositeAction):
        self.action = action
        self.name = f"fixed_{action}"

    def decide(self, features, state, config):
        return self.action


@dataclass
class RunMetrics:
    """Per-run averages over that run's episodes."""

    policy: str
    run: int
    episodes: int
    total_reward: float
    lost_cost: float
    lost_requests: float
    lost_pct: float
    extension_cost: float
    extensions: float
    extension_periods: float
    notifications: float
    served_committed: float
    served_occasional: float
    arrivals: float
    unresolved: float

    @staticmethod
    def columns() -> list[str]:
        return [f.name for f in fields(RunMetrics)]

    def row(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def run_policy_episodes(
    policy: Policy,
    env_config: EpisodeConfig,
    run: int,
    episodes: int,
    seed: int,
    world: WorldMap | None = None,
    schedule: OfflineSchedule | None = None,
) -> RunMetrics:
    env = ShiftExtensionEnv(env_config, world, schedule)
    env.check_invariants = False
    policy.reset(run)
    acc: dict[str, float] = {}
    keys = ("reward", "lost_cost", "lost", "extension_cost", "extensions", "extension_periods", "notifications",
            "served_committed", "served_occasional", "arrivals", "unresolved")
    for k in keys:
        acc[k] = 0.0
    for ep in range(episodes):
        state = env.reset(episode_seed(seed, EVAL_TAG, run, ep))
        while not is_terminal(state):
            action = policy.decide(env.observe(state), state, env_config)
            state = env.apply_action(action).next_state
        tot = env.totals
        for k in keys:
            acc[k] += getattr(tot, k)
    m = {k: v / episodes for k, v in acc.items()}
    return RunMetrics(
        policy=policy.name,
        run=run,
        episodes=episodes,
        total_reward=m["reward"],
        lost_cost=m["lost_cost"],
        lost_requests=m["lost"],
        lost_pct=100.0 * m["lost"] / m["arrivals"] if m["arrivals"] else 0.0,
        extension_cost=m["extension_cost"],
        extensions=m["extensions"],
        extension_periods=m["extension_periods"],
        notifications=m["notifications"],
        served_committed=m["served_committed"],
        served_occasional=m["served_occasional"],
        arrivals=m["arrivals"],
        unresolved=m["unresolved"],
    )


def _run_job(args) -> RunMetrics:
    return run_policy_episodes(*args)


SUMMARY_METRICS = ("total_reward", "lost_cost", "lost_requests", "lost_pct", "extension_cost", "extensions",
                   "extension_periods", "served_committed", "served_occasional", "arrivals")


def summarize(runs: list[RunMetrics]) -> dict:
    out = {"runs": len(runs)}
    for name in SUMMARY_METRICS:
        vals = [getattr(r, name) for r in runs]
        q = np.quantile(vals, [0.05, 0.25, 0.5, 0.75, 0.95]).tolist()
        out[name] = {
            "mean": statistics.fmean(vals),
            "median": statistics.median(vals),
            "std": statistics.stdev(vals) if len(vals) > 1 else 0.0,
            "min": min(vals),
            "max": max(vals),
            "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), q)),
            "values": vals,
        }
    return out


def evaluate(
    policy: Policy,
    env_config: EpisodeConfig,
    n_runs: int,
    episodes_per_run: int,
    seed: int,
    workers: int = 1,
    world: WorldMap | None = None,
    schedule: OfflineSchedule | None = None,
) -> list[RunMetrics]:
    """Seed-aligned replications: run ``r``, episode ``e`` always sees the same exogenous streams."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    jobs = [(policy, env_config, r, episodes_per_run, seed, world, schedule) for r in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_run_job, jobs))
    else:
        runs = [_run_job(j) for j in jobs]
    return sorted(runs, key=lambda r: r.run)
