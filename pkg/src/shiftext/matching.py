"""Discrete action catalog and its expansion into notifications and assignments.

A catalog entry pairs an extension count ``k`` with one of four assignment
rules. Catalog index ``i`` maps to ``k = i // 4`` and rule ``RULES[i % 4]``;
this ordering is part of the checkpoint format and must not change.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

from .entities import COMMITTED, OCCASIONAL, CourierKey
from .world import distance

if TYPE_CHECKING:
    from .config import EpisodeConfig
    from .environment import SystemState


class AssignmentRule(enum.Enum):
    GLOBAL_GREEDY = "GlobalGreedy"
    COMMITTED_FIRST = "CommittedFirst"
    OCCASIONAL_FIRST = "OccasionalFirst"
    DEFER_ALL = "DeferAll"


RULES: tuple[AssignmentRule, ...] = tuple(AssignmentRule)


@dataclass(frozen=True)
class CompositeAction:
    extension_count: int
    assignment_rule: AssignmentRule

    def __str__(self) -> str:
        return f"k{self.extension_count}:{self.assignment_rule.value}"


@dataclass(frozen=True)
class ExpandedAction:
    notify_set: tuple[int, ...] = ()
    assignment_pairs: tuple[tuple[int, CourierKey], ...] = ()


class InfeasibleActionError(ValueError):
    """An expanded action violates the notification or matching constraints."""


def action_catalog(max_notified: int) -> list[CompositeAction]:
    return [CompositeAction(k, rule) for k in range(max_notified + 1) for rule in RULES]


def catalog_fingerprint(max_notified: int) -> str:
    text = ",".join(str(a) for a in action_catalog(max_notified))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def action_index(action: CompositeAction) -> int:
    return action.extension_count * len(RULES) + RULES.index(action.assignment_rule)


def eligible_for_extension(state: SystemState, allow_repeat: bool = True) -> list[int]:
    ids = [c.id for c in state.ending_next_epoch if allow_repeat or c.extension_start is None]
    return sorted(ids)


def _committed_cost(courier, request, econ) -> float:
    return econ.committed_distance_rate * (
        distance(courier.location, request.pickup) + distance(request.pickup, request.delivery)
    )


def _occasional_cost(courier, request, econ) -> float:
    return econ.occasional_fee + econ.occasional_distance_rate * distance(request.pickup, request.delivery)


def serving_cost(courier_key: CourierKey, courier, request, econ) -> float:
    if courier_key[0] == COMMITTED:
        return _committed_cost(courier, request, econ)
    return _occasional_cost(courier, request, econ)


def _scan(candidates: Iterable[tuple], used_r: set, used_k: set, pairs: list) -> None:
    for *_, rid, key in candidates:
        if rid in used_r or key in used_k:
            continue
        used_r.add(rid)
        used_k.add(key)
        pairs.append((rid, key))


def _profitable(request, cost, econ) -> bool:
    return request.revenue - cost > -econ.lost_penalty


def _global_greedy(state, econ) -> list:
    cands = []
    for r in state.present_requests:
        for c in state.available_committed:
            cost = _committed_cost(c, r, econ)
            if _profitable(r, cost, econ):
                cands.append((cost - r.revenue, r.id, 0, c.id, r.id, c.key))
        for o in state.present_occasional:
            cost = _occasional_cost(o, r, econ)
            if _profitable(r, cost, econ):
                cands.append((cost - r.revenue, r.id, 1, o.id, r.id, o.key))
    cands.sort()
    pairs: list = []
    _scan(cands, set(), set(), pairs)
    return pairs


def _nearest(state, econ, couriers, cost_fn, used_r, used_k, pairs) -> None:
    cands = []
    for r in state.present_requests:
        if r.id in used_r:
            continue
        for c in couriers:
            if _profitable(r, cost_fn(c, r, econ), econ):
                cands.append((distance(c.location, r.pickup), r.id, c.id, r.id, c.key))
    cands.sort()
    _scan(cands, used_r, used_k, pairs)


def _tiered(state, econ, committed_first: bool) -> list:
    used_r: set = set()
    used_k: set = set()
    pairs: list = []
    tiers = [
        (state.available_committed, _committed_cost),
        (state.present_occasional, _occasional_cost),
    ]
    if not committed_first:
        tiers.reverse()
    for couriers, cost_fn in tiers:
        _nearest(state, econ, couriers, cost_fn, used_r, used_k, pairs)
    return pairs


def assign(state: SystemState, rule: AssignmentRule, config: EpisodeConfig) -> list[tuple[int, CourierKey]]:
    econ = config.economics
    if rule is AssignmentRule.DEFER_ALL:
        return []
    if rule is AssignmentRule.GLOBAL_GREEDY:
        return _global_greedy(state, econ)
    return _tiered(state, econ, committed_first=rule is AssignmentRule.COMMITTED_FIRST)


def expand(state: SystemState, action: CompositeAction, config: EpisodeConfig) -> ExpandedAction:
    """Deterministically turn a catalog entry into concrete notifications and assignments.

    Notifications go to the ``k`` eligible couriers with the smallest ids
    (clamped to the budget and to the number eligible).
    """
    ext = config.extension
    k = max(0, min(action.extension_count, ext.max_notified))
    notify = tuple(eligible_for_extension(state, ext.allow_repeat)[:k])
    pairs = assign(state, action.assignment_rule, config)
    return ExpandedAction(notify, tuple(pairs))


def check_feasible(state: SystemState, expanded: ExpandedAction, config: EpisodeConfig) -> None:
    """Raise ``InfeasibleActionError`` unless the notification budget and matching constraints hold."""
    ext = config.extension
    notify = list(expanded.notify_set)
    if len(set(notify)) != len(notify):
        raise InfeasibleActionError("courier notified twice")
    if len(notify) > ext.max_notified:
        raise InfeasibleActionError(f"{len(notify)} notifications exceed budget {ext.max_notified}")
    eligible = set(eligible_for_extension(state, ext.allow_repeat))
    bad = [m for m in notify if m not in eligible]
    if bad:
        raise InfeasibleActionError(f"couriers {bad} are not available with shift ending next epoch")
    present_r = {r.id for r in state.present_requests}
    present_k = {c.key for c in state.available_committed} | {o.key for o in state.present_occasional}
    seen_r: set = set()
    seen_k: set = set()
    for rid, key in expanded.assignment_pairs:
        key = (key[0], key[1])
        if rid not in present_r:
            raise InfeasibleActionError(f"request {rid} is not present")
        if key not in present_k:
            raise InfeasibleActionError(f"courier {key} is not available")
        if rid in seen_r:
            raise InfeasibleActionError(f"request {rid} assigned twice")
        if key in seen_k:
            raise InfeasibleActionError(f"courier {key} assigned twice")
        seen_r.add(rid)
        seen_k.add(key)


__all__ = [
    "AssignmentRule",
    "CompositeAction",
    "ExpandedAction",
    "InfeasibleActionError",
    "RULES",
    "COMMITTED",
    "OCCASIONAL",
    "action_catalog",
    "action_index",
    "catalog_fingerprint",
    "check_feasible",
    "eligible_for_extension",
    "expand",
    "serving_cost",
]
