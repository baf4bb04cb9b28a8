"""State, observation and layout types shared by both environments."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..geometry import rot, to_body, wrap_angle  # noqa: F401  (re-exported)

MAX_LAYOUT_TRIES = 100
# index of the time indicator in Observation.vector()
TIME_COLUMN = 6


@dataclass(frozen=True)
class Box:
    """Axis-aligned square obstacle."""

    center: tuple[float, float]
    width: float
    blocking: bool

    def contains(self, p) -> bool:
        half = self.width / 2
        return abs(p[0] - self.center[0]) < half and abs(p[1] - self.center[1]) < half

    def to_dict(self) -> dict:
        return {"center": list(self.center), "width": self.width, "blocking": self.blocking}


@dataclass(frozen=True)
class Layout:
    obstacles: tuple[Box, ...]
    spawn: tuple[float, float]
    spawn_heading: float
    target: tuple[float, float]
    target_heading: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "obstacles": [b.to_dict() for b in self.obstacles],
                "spawn": list(self.spawn),
                "spawn_heading": self.spawn_heading,
                "target": list(self.target),
                "target_heading": self.target_heading,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Layout":
        d = json.loads(text)
        boxes = tuple(Box(tuple(b["center"]), b["width"], b["blocking"]) for b in d["obstacles"])
        return cls(boxes, tuple(d["spawn"]), d["spawn_heading"], tuple(d["target"]), d["target_heading"])


@dataclass
class EnvState:
    position: np.ndarray
    velocity: np.ndarray
    heading: float
    target_position: np.ndarray
    target_heading: float
    obstacles: tuple[Box, ...]
    time_step: int
    horizon: int
    previous_action: np.ndarray
    done: bool = False
    # gridworld bookkeeping: index of the last discrete action
    last_action: int = 0
    blocked: bool = False


@dataclass
class Observation:
    target_in_body: np.ndarray
    heading_error: float
    own_velocity_in_body_frame: np.ndarray
    time_indicator: float
    previous_action: np.ndarray
    local_occupancy: np.ndarray
    position_scale: float = 1.0
    noise: np.ndarray | None = field(default=None, repr=False)

    def vector(self) -> np.ndarray:
        v = np.concatenate(
            [
                self.target_in_body / self.position_scale,
                [math.sin(self.heading_error), math.cos(self.heading_error)],
                self.own_velocity_in_body_frame,
                [self.time_indicator],
                self.previous_action,
                self.local_occupancy,
            ]
        )
        if self.noise is not None:
            v = v + self.noise
        return v


def reachable(free: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> int | None:
    """Breadth-first flood fill on a boolean grid indexed [x, y]; returns path length or None."""
    if not free[start] or not free[goal]:
        return None
    nx, ny = free.shape
    dist = np.full(free.shape, -1, dtype=int)
    dist[start] = 0
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        if (x, y) == goal:
            return int(dist[x, y])
        for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            u, v = x + dx, y + dy
            if 0 <= u < nx and 0 <= v < ny and free[u, v] and dist[u, v] < 0:
                dist[u, v] = dist[x, y] + 1
                queue.append((u, v))
    return None


def box_class(cfg, rng: np.random.Generator) -> bool:
    """True for a blocking box."""
    if cfg.obstacle_class == "blocking":
        return True
    if cfg.obstacle_class == "traversable":
        return False
    return bool(rng.random() < cfg.blocking_prob)


def check_layout_budget(tries: int) -> None:
    if tries >= MAX_LAYOUT_TRIES:
        raise ConfigError(f"no reachable layout found after {MAX_LAYOUT_TRIES} samples")
