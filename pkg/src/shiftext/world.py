"""Service-area geometry: pickup/delivery point pools, distances, travel times."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration value is out of its valid range."""


@dataclass(frozen=True, slots=True)
class Location:
    x: float
    y: float

    def to_list(self) -> list[float]:
        return [self.x, self.y]


def distance(a: Location, b: Location) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def travel_time(a: Location, b: Location, speed: float) -> float:
    """Travel time in periods between two points at ``speed`` units/period."""
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    return distance(a, b) / speed


@dataclass(frozen=True)
class WorldMap:
    pickup_points: tuple[Location, ...]
    delivery_points: tuple[Location, ...]
    map_extent: float = 100.0
    speed: float = 100.0

    def __post_init__(self):
        if self.speed <= 0:
            raise ConfigError(f"speed must be > 0, got {self.speed}")
        if self.map_extent <= 0:
            raise ConfigError(f"map_extent must be > 0, got {self.map_extent}")
        if not self.pickup_points or not self.delivery_points:
            raise ConfigError("point pools must be non-empty")

    @property
    def diagonal(self) -> float:
        return self.map_extent * math.sqrt(2.0)

    def travel_time(self, a: Location, b: Location) -> float:
        return distance(a, b) / self.speed

    def to_dict(self) -> dict:
        return {
            "map_extent": self.map_extent,
            "speed": self.speed,
            "pickup_points": [p.to_list() for p in self.pickup_points],
            "delivery_points": [p.to_list() for p in self.delivery_points],
        }

    @classmethod
    def from_dict(cls, data: dict) -> WorldMap:
        return cls(
            pickup_points=tuple(Location(float(x), float(y)) for x, y in data["pickup_points"]),
            delivery_points=tuple(Location(float(x), float(y)) for x, y in data["delivery_points"]),
            map_extent=float(data["map_extent"]),
            speed=float(data["speed"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> WorldMap:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _uniform_points(rng: np.random.Generator, n: int, extent: float) -> tuple[Location, ...]:
    xy = rng.uniform(0.0, extent, size=(n, 2))
    return tuple(Location(float(x), float(y)) for x, y in xy)


def generate_world(
    seed: int,
    n_pickup: int = 40,
    n_delivery: int = 40,
    map_extent: float = 100.0,
    speed: float = 100.0,
) -> WorldMap:
    """Sample pickup and delivery pools uniformly on ``[0, map_extent]^2``.

    The two pools are independent draws; coincident points are not removed.
    """
    if n_pickup <= 0 or n_delivery <= 0:
        raise ConfigError("point counts must be positive")
    if map_extent <= 0:
        raise ConfigError("map_extent must be positive")
    rng = np.random.default_rng(seed)
    pickups = _uniform_points(rng, n_pickup, map_extent)
    deliveries = _uniform_points(rng, n_delivery, map_extent)
    return WorldMap(pickups, deliveries, map_extent, speed)
