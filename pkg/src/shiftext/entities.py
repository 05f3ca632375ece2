"""Requests, couriers, the synthetic offline schedule and the stochastic arrival streams."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .world import ConfigError, Location, WorldMap

COMMITTED = "committed"
OCCASIONAL = "occasional"

CourierKey = tuple[str, int]


@dataclass(slots=True)
class Request:
    id: int
    arrival_epoch: int
    deadline_epoch: int
    pickup: Location
    delivery: Location
    revenue: float = 60.0
    lost: bool = False
    assigned_epoch: int | None = None

    def slack(self, epoch: int) -> int:
        return self.deadline_epoch - epoch


@dataclass(slots=True)
class CommittedCourier:
    id: int
    shift_start: int
    shift_end: int
    location: Location
    busy_until: float = 0.0
    # First epoch of the (possibly chained) extension period; None if never extended.
    extension_start: int | None = None
    extensions_accepted: int = 0

    @property
    def key(self) -> CourierKey:
        return (COMMITTED, self.id)

    def on_shift(self, epoch: int) -> bool:
        return self.shift_start <= epoch < self.shift_end

    def is_busy(self, epoch: float) -> bool:
        return self.busy_until > epoch

    def in_extension(self, epoch: int) -> bool:
        return self.extension_start is not None and self.extension_start <= epoch < self.shift_end

    @property
    def extension_active(self) -> bool:
        return self.extension_start is not None

    @property
    def extension_end(self) -> int | None:
        return self.shift_end if self.extension_start is not None else None


@dataclass(slots=True)
class OccasionalCourier:
    id: int
    arrival_epoch: int
    location: Location
    patience_periods: int

    @property
    def key(self) -> CourierKey:
        return (OCCASIONAL, self.id)

    def abandons_after(self, epoch: int) -> bool:
        """True when the courier leaves during the period following ``epoch`` if still idle."""
        return epoch - self.arrival_epoch >= self.patience_periods


@dataclass(frozen=True)
class Shift:
    courier_id: int
    shift_start: int
    shift_end: int
    location: Location


@dataclass(frozen=True)
class OfflineSchedule:
    shifts: tuple[Shift, ...]
    horizon: int

    def __len__(self) -> int:
        return len(self.shifts)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "shifts": [
                {
                    "courier_id": s.courier_id,
                    "shift_start": s.shift_start,
                    "shift_end": s.shift_end,
                    "location": s.location.to_list(),
                }
                for s in self.shifts
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> OfflineSchedule:
        shifts = tuple(
            Shift(int(s["courier_id"]), int(s["shift_start"]), int(s["shift_end"]), Location(*map(float, s["location"])))
            for s in data["shifts"]
        )
        return cls(tuple(sorted(shifts, key=lambda s: s.courier_id)), int(data["horizon"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> OfflineSchedule:
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_offline_schedule(
    seed: int,
    world: WorldMap,
    n_couriers: int = 50,
    horizon: int = 200,
    shift_length: int = 40,
) -> OfflineSchedule:
    """Equal-length shifts with starts evenly staggered over ``[0, horizon - shift_length]``.

    Courier ``i`` starts at ``round(i * (horizon - shift_length) / (n_couriers - 1))``
    and begins at a pickup point drawn uniformly from the world pool.
    """
    if n_couriers < 0:
        raise ConfigError("n_couriers must be >= 0")
    if shift_length <= 0:
        raise ConfigError("shift_length must be positive")
    if shift_length > horizon:
        raise ConfigError(f"shift_length {shift_length} exceeds horizon {horizon}")
    rng = np.random.default_rng(seed)
    span = horizon - shift_length
    shifts = []
    for i in range(n_couriers):
        start = 0 if n_couriers == 1 else int(math.floor(i * span / (n_couriers - 1) + 0.5))
        loc = world.pickup_points[int(rng.integers(len(world.pickup_points)))]
        shifts.append(Shift(i, start, start + shift_length, loc))
    return OfflineSchedule(tuple(shifts), horizon)


def sample_request_arrivals(
    rng: np.random.Generator,
    epoch: int,
    rate: float,
    world: WorldMap,
    assignment_window: int = 5,
    revenue: float = 60.0,
    first_id: int = 0,
) -> list[Request]:
    n = int(rng.poisson(rate)) if rate > 0 else 0
    out = []
    for j in range(n):
        p = world.pickup_points[int(rng.integers(len(world.pickup_points)))]
        d = world.delivery_points[int(rng.integers(len(world.delivery_points)))]
        out.append(Request(first_id + j, epoch, epoch + assignment_window, p, d, revenue))
    return out


def sample_occasional_arrivals(
    rng: np.random.Generator,
    epoch: int,
    rate: float,
    world: WorldMap,
    patience_mean: float = 1.0,
    first_id: int = 0,
) -> list[OccasionalCourier]:
    n = int(rng.poisson(rate)) if rate > 0 else 0
    out = []
    for j in range(n):
        x, y = rng.uniform(0.0, world.map_extent, size=2)
        patience = int(rng.poisson(patience_mean))
        out.append(OccasionalCourier(first_id + j, epoch, Location(float(x), float(y)), patience))
    return out


def sample_extension_response(rng: np.random.Generator, pr: float) -> bool:
    # one uniform draw per notification keeps the stream aligned across pr values
    return bool(rng.random() < pr)


class ArrivalStreams:
    """Independent per-episode substreams for requests, occasional couriers and extension replies.

    All three are spawned from one master seed, so replaying the seed reproduces
    every draw regardless of how the policy behaves.
    """

    def __init__(self, master_seed: int | Iterable[int]):
        ss = np.random.SeedSequence(master_seed)
        req, occ, acc, init = ss.spawn(4)
        self.requests = np.random.default_rng(req)
        self.occasional = np.random.default_rng(occ)
        self.acceptance = np.random.default_rng(acc)
        self.initial = np.random.default_rng(init)
        self._next_request_id = 0
        self._next_occasional_id = 0

    def draw_requests(self, epoch, rate, world, window, revenue, rng=None) -> list[Request]:
        batch = sample_request_arrivals(
            rng or self.requests, epoch, rate, world, window, revenue, self._next_request_id
        )
        self._next_request_id += len(batch)
        return batch

    def draw_occasional(self, epoch, rate, world, patience_mean, rng=None) -> list[OccasionalCourier]:
        batch = sample_occasional_arrivals(
            rng or self.occasional, epoch, rate, world, patience_mean, self._next_occasional_id
        )
        self._next_occasional_id += len(batch)
        return batch

    def fixed_requests(self, epoch, count, world, window, revenue) -> list[Request]:
        """Exactly ``count`` requests from the initial-state stream."""
        rng = self.initial
        out = []
        for _ in range(count):
            p = world.pickup_points[int(rng.integers(len(world.pickup_points)))]
            d = world.delivery_points[int(rng.integers(len(world.delivery_points)))]
            out.append(Request(self._next_request_id, epoch, epoch + window, p, d, revenue))
            self._next_request_id += 1
        return out

    def fixed_occasional(self, epoch, count, world, patience_mean) -> list[OccasionalCourier]:
        rng = self.initial
        out = []
        for _ in range(count):
            x, y = rng.uniform(0.0, world.map_extent, size=2)
            out.append(
                OccasionalCourier(
                    self._next_occasional_id, epoch, Location(float(x), float(y)), int(rng.poisson(patience_mean))
                )
            )
            self._next_occasional_id += 1
        return out

    def extension_response(self, pr: float) -> bool:
        return sample_extension_response(self.acceptance, pr)


TRACE_COLUMNS = ("epoch", "kind", "id", "x", "y", "x2", "y2", "deadline_or_patience")


def arrival_trace_rows(requests: Iterable[Request], occasional: Iterable[OccasionalCourier]) -> list[tuple]:
    rows = [
        (r.arrival_epoch, "request", r.id, r.pickup.x, r.pickup.y, r.delivery.x, r.delivery.y, r.deadline_epoch)
        for r in requests
    ]
    rows += [
        (o.arrival_epoch, "occasional", o.id, o.location.x, o.location.y, "", "", o.patience_periods)
        for o in occasional
    ]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def write_arrival_trace(path: str | Path, requests: Iterable[Request], occasional: Iterable[OccasionalCourier]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(arrival_trace_rows(requests, occasional))
