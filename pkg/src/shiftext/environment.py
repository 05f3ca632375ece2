"""Sequential decision process engine for committed-courier shift extensions.

One call to :meth:`ShiftExtensionEnv.apply_action` performs, in order:
notification expansion, Bernoulli acceptance draws, assignments, the
per-epoch reward, and the stochastic transition to the next epoch
(arrivals, shift starts/ends, abandonments, busy releases).
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import EpisodeConfig
from .entities import (
    COMMITTED,
    OCCASIONAL,
    ArrivalStreams,
    CommittedCourier,
    OccasionalCourier,
    OfflineSchedule,
    Request,
    generate_offline_schedule,
)
from .matching import (
    CompositeAction,
    ExpandedAction,
    InfeasibleActionError,
    action_catalog,
    check_feasible,
    expand,
)
from .world import WorldMap, distance, generate_world

N_FEATURES = 12

FEATURE_NAMES = (
    "time",
    "present_requests",
    "available_committed",
    "present_occasional",
    "on_shift_committed",
    "ending_next_epoch",
    "mean_slack",
    "min_slack",
    "committed_to_request",
    "occasional_to_request",
    "cumulative_lost",
    "cumulative_extensions",
)


class EpisodeFinishedError(RuntimeError):
    """Raised when acting on a terminal state."""


@dataclass(frozen=True)
class SystemState:
    """Decision-epoch snapshot. Entity objects are copies; mutating them has no effect on the engine."""

    epoch: int
    horizon: int
    present_requests: tuple[Request, ...]
    available_committed: tuple[CommittedCourier, ...]
    present_occasional: tuple[OccasionalCourier, ...]
    on_shift_committed: tuple[CommittedCourier, ...]
    ending_next_epoch: tuple[CommittedCourier, ...]
    cumulative_lost: int = 0
    cumulative_extensions: int = 0

    @property
    def on_shift_count(self) -> int:
        return len(self.on_shift_committed)

    @property
    def extended_on_shift(self) -> tuple[CommittedCourier, ...]:
        return tuple(c for c in self.on_shift_committed if c.in_extension(self.epoch))

    def request(self, rid: int) -> Request:
        for r in self.present_requests:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def courier(self, key) -> CommittedCourier | OccasionalCourier:
        pool = self.available_committed if key[0] == COMMITTED else self.present_occasional
        for c in pool:
            if c.id == key[1]:
                return c
        raise KeyError(key)


@dataclass
class RewardBreakdown:
    revenue: float = 0.0
    wage_pay: float = 0.0
    committed_distance_pay: float = 0.0
    occasional_fee_pay: float = 0.0
    occasional_distance_pay: float = 0.0
    lost_penalty: float = 0.0
    extension_pay: float = 0.0

    @property
    def total(self) -> float:
        return (
            self.revenue
            - self.wage_pay
            - self.committed_distance_pay
            - self.occasional_fee_pay
            - self.occasional_distance_pay
            - self.lost_penalty
            - self.extension_pay
        )


def reward_breakdown(state: SystemState, expanded: ExpandedAction, config: EpisodeConfig) -> RewardBreakdown:
    """Per-epoch profit of applying ``expanded`` in ``state``.

    Depends only on the snapshot and the action: acceptance draws made at this
    epoch extend shifts from the next epoch on, so they never enter this epoch's reward.
    """
    econ = config.economics
    t = state.epoch
    out = RewardBreakdown()
    requests = {r.id: r for r in state.present_requests}
    committed = {c.id: c for c in state.available_committed}
    occasional = {o.id: o for o in state.present_occasional}
    assigned = set()
    for rid, (kind, cid) in expanded.assignment_pairs:
        r = requests[rid]
        assigned.add(rid)
        out.revenue += r.revenue
        if kind == COMMITTED:
            c = committed[cid]
            out.committed_distance_pay += econ.committed_distance_rate * (
                distance(c.location, r.pickup) + distance(r.pickup, r.delivery)
            )
        else:
            out.occasional_fee_pay += econ.occasional_fee
            out.occasional_distance_pay += econ.occasional_distance_rate * distance(r.pickup, r.delivery)
    out.wage_pay = econ.committed_wage * state.on_shift_count
    n_lost = sum(1 for r in state.present_requests if r.id not in assigned and r.deadline_epoch <= t)
    out.lost_penalty = econ.lost_penalty * n_lost
    out.extension_pay = econ.extension_pay * len(state.extended_on_shift)
    return out


@dataclass
class StepDiagnostics:
    epoch: int
    action: str
    assigned_committed: int
    assigned_occasional: int
    lost: int
    notified: int
    accepted: int
    extended_on_shift: int
    on_shift: int
    present_requests: int
    available_committed: int
    present_occasional: int
    arrivals_requests: int
    arrivals_occasional: int
    breakdown: RewardBreakdown

    def component_sum(self) -> float:
        b = self.breakdown
        return (
            b.revenue
            - b.wage_pay
            - b.committed_distance_pay
            - b.occasional_fee_pay
            - b.occasional_distance_pay
            - b.lost_penalty
            - b.extension_pay
        )


@dataclass(frozen=True)
class TransitionSets:
    """Identifier sets moving between epochs, named after the set-update equations."""

    committed_available: frozenset  # M_t^a
    committed_started: frozenset  # M_t^+
    committed_extended: frozenset  # M_t^++
    committed_ended: frozenset  # M_t^-
    committed_assigned: frozenset
    committed_released: frozenset  # busy at t (or assigned at t), free at t+1, still on shift
    occasional_present: frozenset  # N_t^a
    occasional_arrived: frozenset  # N_t^+
    occasional_left: frozenset  # N_t^- (assigned or abandoned)
    requests_present: frozenset  # R_t^a
    requests_arrived: frozenset  # R_t^+
    requests_assigned: frozenset  # R_t^-
    requests_lost: frozenset  # R_t^--


@dataclass
class TransitionOutcome:
    next_state: SystemState
    reward: float
    diagnostics: StepDiagnostics
    sets: TransitionSets
    expanded: ExpandedAction
    done: bool


@dataclass
class EpisodeTotals:
    reward: float = 0.0
    revenue: float = 0.0
    lost: int = 0
    lost_cost: float = 0.0
    extension_cost: float = 0.0
    extensions: int = 0
    extension_periods: int = 0
    notifications: int = 0
    served_committed: int = 0
    served_occasional: int = 0
    arrivals: int = 0
    wage_cost: float = 0.0
    distance_cost: float = 0.0
    occasional_cost: float = 0.0
    unresolved: int = 0  # requests still present when the horizon is reached

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _snapshot(objs: Iterable) -> tuple:
    return tuple(copy.copy(o) for o in objs)


def observe_features(state: SystemState, config: EpisodeConfig, world: WorldMap) -> np.ndarray:
    """Fixed-length min-max scaled observation, every component in [0, 1]."""
    caps = config.features
    t = state.epoch
    window = max(config.assignment_window, 1)
    diag = world.diagonal
    feats = np.zeros(N_FEATURES)
    feats[0] = t / config.horizon if config.horizon > 0 else 1.0
    feats[1] = len(state.present_requests) / caps.requests
    feats[2] = len(state.available_committed) / caps.committed
    feats[3] = len(state.present_occasional) / caps.occasional
    feats[4] = state.on_shift_count / caps.committed
    feats[5] = len(state.ending_next_epoch) / caps.ending
    reqs = state.present_requests
    if reqs:
        slacks = [r.deadline_epoch - t for r in reqs]
        feats[6] = sum(slacks) / len(slacks) / window
        feats[7] = min(slacks) / window
        pickups = [r.pickup for r in reqs]
        if state.available_committed:
            feats[8] = _mean_nearest(state.available_committed, pickups) / diag
        if state.present_occasional:
            feats[9] = _mean_nearest(state.present_occasional, pickups) / diag
    feats[10] = state.cumulative_lost / caps.lost
    feats[11] = state.cumulative_extensions / caps.extensions
    return np.clip(feats, 0.0, 1.0)


def _mean_nearest(couriers, pickups) -> float:
    total = 0.0
    for c in couriers:
        total += min(distance(c.location, p) for p in pickups)
    return total / len(couriers)


def is_terminal(state: SystemState) -> bool:
    return state.epoch >= state.horizon


class ShiftExtensionEnv:
    """Single-threaded episode engine; one instance owns its RNG streams and entity state."""

    def __init__(
        self,
        config: EpisodeConfig | None = None,
        world: WorldMap | None = None,
        schedule: OfflineSchedule | None = None,
    ):
        self.config = config or EpisodeConfig()
        cfg = self.config
        self.world = world or generate_world(cfg.world_seed, cfg.n_pickup, cfg.n_delivery, cfg.map_extent, cfg.speed)
        self.schedule = schedule or generate_offline_schedule(
            cfg.schedule_seed, self.world, cfg.n_couriers, max(cfg.horizon, cfg.shift_length), cfg.shift_length
        )
        self.catalog = action_catalog(cfg.extension.max_notified)
        self.check_invariants = True
        self._state: SystemState | None = None

    @property
    def n_actions(self) -> int:
        return len(self.catalog)

    @property
    def state(self) -> SystemState:
        if self._state is None:
            raise RuntimeError("call reset() first")
        return self._state

    @property
    def epoch(self) -> int:
        return self.state.epoch

    # ------------------------------------------------------------------ episode control
    def reset(self, seed) -> SystemState:
        cfg = self.config
        self.streams = ArrivalStreams(seed)
        self.totals = EpisodeTotals()
        self._all_requests: list[Request] = []
        self._committed: dict[int, CommittedCourier] = {}
        order = sorted(self.schedule.shifts, key=lambda s: (s.shift_start, s.courier_id))
        forced = {s.courier_id for s in order[: cfg.initial_committed]}
        for s in self.schedule.shifts:
            start, end = s.shift_start, s.shift_end
            if s.courier_id in forced and start > 0:
                start, end = 0, end - start
            self._committed[s.courier_id] = CommittedCourier(s.courier_id, start, end, s.location)
        self._requests: dict[int, Request] = {}
        for r in self.streams.fixed_requests(0, cfg.initial_requests, self.world, cfg.assignment_window,
                                             cfg.economics.revenue):
            self._add_request(r)
        self._occasional: dict[int, OccasionalCourier] = {}
        for o in self.streams.fixed_occasional(0, cfg.initial_occasional, self.world, cfg.patience_mean):
            self._occasional[o.id] = o
        self._epoch = 0
        self._cum_lost = 0
        self._cum_ext = 0
        self._state = self._build_state()
        return self._state

    def _add_request(self, r: Request) -> None:
        self._requests[r.id] = r
        self._all_requests.append(r)
        self.totals.arrivals += 1

    def is_terminal(self) -> bool:
        return is_terminal(self.state)

    def observe(self, state: SystemState | None = None) -> np.ndarray:
        return observe_features(state or self.state, self.config, self.world)

    def _build_state(self) -> SystemState:
        t = self._epoch
        on_shift = [c for c in self._committed.values() if c.on_shift(t)]
        available = [c for c in on_shift if not c.is_busy(t)]
        ending = [c for c in available if c.shift_end == t + 1]
        return SystemState(
            epoch=t,
            horizon=self.config.horizon,
            present_requests=_snapshot(self._requests.values()),
            available_committed=_snapshot(available),
            present_occasional=_snapshot(self._occasional.values()),
            on_shift_committed=_snapshot(on_shift),
            ending_next_epoch=_snapshot(ending),
            cumulative_lost=self._cum_lost,
            cumulative_extensions=self._cum_ext,
        )

    @property
    def all_requests(self) -> list[Request]:
        return list(self._all_requests)

    # ------------------------------------------------------------------ transition
    def resolve(self, action) -> tuple[str, ExpandedAction]:
        if isinstance(action, ExpandedAction):
            return "explicit", action
        if isinstance(action, (int, np.integer)):
            action = self.catalog[int(action)]
        if isinstance(action, CompositeAction):
            return str(action), expand(self.state, action, self.config)
        raise TypeError(f"unsupported action {action!r}")

    def apply_action(self, action) -> TransitionOutcome:
        state = self.state
        if is_terminal(state):
            raise EpisodeFinishedError(f"episode finished at epoch {state.epoch}")
        cfg = self.config
        econ = cfg.economics
        t = state.epoch
        label, expanded = self.resolve(action)
        if self.check_invariants or label == "explicit":
            check_feasible(state, expanded, cfg)

        breakdown = reward_breakdown(state, expanded, cfg)

        # acceptance draws for notified couriers, in id order
        extended = []
        for cid in sorted(expanded.notify_set):
            c = self._committed[cid]
            if self.streams.extension_response(cfg.extension.accept_prob):
                if c.extension_start is None:
                    c.extension_start = c.shift_end
                c.shift_end += cfg.extension.periods
                c.extensions_accepted += 1
                extended.append(cid)

        # assignments
        reward = 0.0
        assigned_r, assigned_c, assigned_o = set(), set(), set()
        for rid, (kind, kid) in expanded.assignment_pairs:
            r = self._requests[rid]
            r.assigned_epoch = t
            assigned_r.add(rid)
            trip = distance(r.pickup, r.delivery)
            if kind == COMMITTED:
                c = self._committed[kid]
                lead = distance(c.location, r.pickup)
                c.busy_until = t + (lead + trip) / self.world.speed
                c.location = r.delivery
                assigned_c.add(kid)
                reward += r.revenue - econ.committed_distance_rate * (lead + trip)
            else:
                assigned_o.add(kid)
                reward += r.revenue - econ.occasional_fee - econ.occasional_distance_rate * trip

        lost = [r for r in state.present_requests if r.id not in assigned_r and r.deadline_epoch <= t]
        n_ext = len(state.extended_on_shift)
        reward -= econ.committed_wage * state.on_shift_count
        reward -= econ.lost_penalty * len(lost)
        reward -= econ.extension_pay * n_ext
        if abs(reward - breakdown.total) > 1e-9 * max(1.0, abs(reward)):
            raise AssertionError(f"reward {reward} disagrees with breakdown {breakdown.total} at epoch {t}")

        # transition to t + 1
        t1 = t + 1
        lost_ids = set()
        for r in lost:
            live = self._requests.pop(r.id)
            live.lost = True
            lost_ids.add(r.id)
        for rid in assigned_r:
            del self._requests[rid]

        avail_now = {c.id for c in state.available_committed}
        on_shift_now = {c.id for c in state.on_shift_committed}
        ended = {cid for cid in on_shift_now if self._committed[cid].shift_end <= t1}
        started = {c.id for c in self._committed.values() if c.shift_start == t1}
        released = {
            cid
            for cid in on_shift_now
            if (cid not in avail_now or cid in assigned_c) and not self._committed[cid].is_busy(t1)
        }

        abandoned = {oid for oid, o in self._occasional.items() if oid not in assigned_o and o.abandons_after(t)}
        for oid in assigned_o | abandoned:
            del self._occasional[oid]

        new_reqs = self.streams.draw_requests(t1, cfg.request_rate, self.world, cfg.assignment_window, econ.revenue)
        for r in new_reqs:
            self._add_request(r)
        new_occ = self.streams.draw_occasional(t1, cfg.occasional_rate, self.world, cfg.patience_mean)
        for o in new_occ:
            self._occasional[o.id] = o

        self._epoch = t1
        self._cum_lost += len(lost)
        self._cum_ext += len(extended)
        next_state = self._build_state()
        done = is_terminal(next_state)

        tot = self.totals
        tot.reward += reward
        tot.revenue += breakdown.revenue
        tot.lost += len(lost)
        tot.lost_cost += breakdown.lost_penalty
        tot.extension_cost += breakdown.extension_pay
        tot.extension_periods += n_ext
        tot.extensions += len(extended)
        tot.notifications += len(expanded.notify_set)
        tot.served_committed += len(assigned_c)
        tot.served_occasional += len(assigned_o)
        tot.wage_cost += breakdown.wage_pay
        tot.distance_cost += breakdown.committed_distance_pay + breakdown.occasional_distance_pay
        tot.occasional_cost += breakdown.occasional_fee_pay
        if done:
            tot.unresolved = len(next_state.present_requests)

        diag = StepDiagnostics(
            epoch=t,
            action=label,
            assigned_committed=len(assigned_c),
            assigned_occasional=len(assigned_o),
            lost=len(lost),
            notified=len(expanded.notify_set),
            accepted=len(extended),
            extended_on_shift=n_ext,
            on_shift=state.on_shift_count,
            present_requests=len(state.present_requests),
            available_committed=len(state.available_committed),
            present_occasional=len(state.present_occasional),
            arrivals_requests=len(new_reqs),
            arrivals_occasional=len(new_occ),
            breakdown=breakdown,
        )
        sets = TransitionSets(
            committed_available=frozenset(avail_now),
            committed_started=frozenset(started),
            committed_extended=frozenset(extended),
            committed_ended=frozenset(ended),
            committed_assigned=frozenset(assigned_c),
            committed_released=frozenset(released),
            occasional_present=frozenset(o.id for o in state.present_occasional),
            occasional_arrived=frozenset(o.id for o in new_occ),
            occasional_left=frozenset(assigned_o | abandoned),
            requests_present=frozenset(r.id for r in state.present_requests),
            requests_arrived=frozenset(r.id for r in new_reqs),
            requests_assigned=frozenset(assigned_r),
            requests_lost=frozenset(lost_ids),
        )
        self._state = next_state
        return TransitionOutcome(next_state, reward, diag, sets, expanded, done)


TRACE_HEADER = (
    "epoch",
    "action",
    "reward",
    "revenue",
    "wage_pay",
    "committed_distance_pay",
    "occasional_fee_pay",
    "occasional_distance_pay",
    "lost_penalty",
    "extension_pay",
    "present_requests",
    "available_committed",
    "present_occasional",
    "on_shift",
    "assigned_committed",
    "assigned_occasional",
    "lost",
    "notified",
    "accepted",
)


def trace_row(outcome: TransitionOutcome) -> list:
    d = outcome.diagnostics
    b = d.breakdown
    return [
        d.epoch,
        d.action,
        repr(outcome.reward),
        repr(b.revenue),
        repr(b.wage_pay),
        repr(b.committed_distance_pay),
        repr(b.occasional_fee_pay),
        repr(b.occasional_distance_pay),
        repr(b.lost_penalty),
        repr(b.extension_pay),
        d.present_requests,
        d.available_committed,
        d.present_occasional,
        d.on_shift,
        d.assigned_committed,
        d.assigned_occasional,
        d.lost,
        d.notified,
        d.accepted,
    ]


def write_episode_trace(path: str | Path, outcomes: list[TransitionOutcome]) -> None:
    """Per-epoch CSV with reward components, followed by a ``total`` row."""
    rows = [trace_row(o) for o in outcomes]
    total = ["total", ""] + [repr(math.fsum(float(r[i]) for r in rows)) for i in range(2, 10)]
    total += [sum(int(r[i]) for r in rows) for i in range(10, len(TRACE_HEADER))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        w.writerows(rows)
        w.writerow(total)


def run_episode(env: ShiftExtensionEnv, choose, seed, record: bool = False):
    """Roll one episode with ``choose(state, features) -> action``; returns (totals, outcomes)."""
    state = env.reset(seed)
    outcomes = []
    while not is_terminal(state):
        action = choose(state, env.observe(state))
        out = env.apply_action(action)
        if record:
            outcomes.append(out)
        state = out.next_state
    return env.totals, outcomes


__all__ = [
    "EpisodeFinishedError",
    "EpisodeTotals",
    "FEATURE_NAMES",
    "InfeasibleActionError",
    "N_FEATURES",
    "RewardBreakdown",
    "ShiftExtensionEnv",
    "StepDiagnostics",
    "SystemState",
    "TransitionOutcome",
    "TransitionSets",
    "is_terminal",
    "observe_features",
    "reward_breakdown",
    "run_episode",
    "write_episode_trace",
]
