"""Tabular gridworld with a four-valued heading and five discrete moves."""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np

from ..config import EnvConfig, RewardConfig
from ..errors import UsageError
from ..rewards import RawSignals, RewardParams, group_rewards
from .common import (
    MAX_LAYOUT_TRIES,
    Box,
    EnvState,
    Layout,
    Observation,
    box_class,
    check_layout_budget,
    reachable,
    to_body,
    wrap_angle,
)

STAY, EAST, NORTH, WEST, SOUTH = range(5)
ACTION_NAMES = ("stay", "east", "north", "west", "south")
MOVES = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
# heading index (multiples of pi/2) adopted by each move
ACTION_HEADING = (None, 0, 1, 2, 3)
# previous-action kinds used by the tabular state encoding
KIND_STAY, KIND_MOVED, KIND_BLOCKED = range(3)

GRID_ACTION_RANGE = 2.0


def heading_angle(h: int) -> float:
    return wrap_angle(h * math.pi / 2)


def heading_index(theta: float) -> int:
    return int(round(theta / (math.pi / 2))) % 4


class GridWorld:
    """Deterministic gridworld; one agent, fixed horizon, cell-aligned boxes."""

    kind = "gridworld"
    num_actions = 5
    action_dim = 2  # actions enter rewards and features as unit move vectors
    action_range = GRID_ACTION_RANGE
    discrete = True

    def __init__(self, cfg: EnvConfig, reward_cfg: RewardConfig | None = None):
        if cfg.kind != "gridworld":
            raise UsageError(f"GridWorld needs a gridworld config, got {cfg.kind!r}")
        self.cfg = cfg
        self.n = int(round(cfg.size))
        self.horizon = cfg.resolved_horizon()
        self.task_window = cfg.resolved_task_window()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.reward_params = RewardParams.from_config(
            self.reward_cfg, self.action_range, cfg.arena_scale, cfg.traversal_cost
        )
        self._maps: dict[tuple[Box, ...], np.ndarray] = {}
        self._noise_rng = np.random.default_rng(0)

    # ------------------------------------------------------------ layouts

    def cell_map(self, obstacles: tuple[Box, ...]) -> np.ndarray:
        """(n, n) occupancy indexed [x, y]: 0 free, 0.5 traversable, 1 blocking."""
        m = self._maps.get(obstacles)
        if m is None:
            m = np.zeros((self.n, self.n))
            for x in range(self.n):
                for y in range(self.n):
                    for b in obstacles:
                        if b.contains((x, y)):
                            m[x, y] = max(m[x, y], 1.0 if b.blocking else 0.5)
            self._maps[obstacles] = m
        return m

    def _sample_box(self, rng: np.random.Generator) -> Box:
        lo, hi = self.cfg.box_length
        w = int(np.floor(rng.uniform(lo, hi) * self.cfg.arena_scale + 0.5))
        w = min(max(w, 1), self.n - 2)
        x0 = int(rng.integers(0, self.n - w + 1))
        y0 = int(rng.integers(0, self.n - w + 1))
        c = (x0 + (w - 1) / 2, y0 + (w - 1) / 2)
        return Box(c, float(w), box_class(self.cfg, rng))

    def sample_layout(self, seed: int) -> Layout:
        rng = np.random.default_rng(seed)
        n = self.n
        for tries in range(MAX_LAYOUT_TRIES):
            boxes = tuple(self._sample_box(rng) for _ in range(self.cfg.num_boxes))
            m = self.cell_map(boxes)
            free_cells = np.argwhere(m == 0)
            if len(free_cells) < 2:
                continue
            i, j = rng.choice(len(free_cells), size=2, replace=False)
            spawn, target = tuple(free_cells[i]), tuple(free_cells[j])
            sh, th = (int(v) for v in rng.integers(0, 4, size=2))
            dist = reachable(m < 1.0, spawn, target)
            if dist is not None and dist <= self.horizon - self.task_window:
                return Layout(boxes, (float(spawn[0]), float(spawn[1])), heading_angle(sh),
                              (float(target[0]), float(target[1])), heading_angle(th))
        check_layout_budget(MAX_LAYOUT_TRIES)
        raise AssertionError("unreachable")  # pragma: no cover

    def scenario_layout(self) -> Layout:
        """Square box centred between a left spawn and a right target, both facing +x."""
        n = self.n
        mid = n // 2
        spawn, target = (1, mid), (n - 2, mid)
        w = min(max(int(np.floor(1.4 * self.cfg.arena_scale + 0.5)), 1), n - 4)
        cx = (spawn[0] + target[0]) / 2
        x0 = int(np.floor(cx - (w - 1) / 2 + 0.5))
        y0 = int(np.floor(mid - (w - 1) / 2 + 0.5))
        rng = np.random.default_rng(self.cfg.layout_seed)
        box = Box((x0 + (w - 1) / 2, y0 + (w - 1) / 2), float(w), box_class(self.cfg, rng))
        boxes = (box,) if self.cfg.num_boxes > 0 else ()
        return Layout(boxes, (float(spawn[0]), float(spawn[1])), 0.0, (float(target[0]), float(target[1])), 0.0)

    @cached_property
    def fixed_layout(self) -> Layout | None:
        if self.cfg.layout == "fixed":
            return self.sample_layout(self.cfg.layout_seed)
        if self.cfg.layout == "scenario":
            return self.scenario_layout()
        return None

    def layout_for(self, seed: int) -> Layout:
        return self.fixed_layout if self.fixed_layout is not None else self.sample_layout(seed)

    # ------------------------------------------------------------ dynamics

    def reset(self, seed: int = 0, layout: Layout | None = None) -> tuple[EnvState, Observation]:
        layout = layout or self.layout_for(seed)
        self._noise_rng = np.random.default_rng([seed, 7])
        state = EnvState(
            position=np.array(layout.spawn, dtype=float),
            velocity=np.zeros(2),
            heading=layout.spawn_heading,
            target_position=np.array(layout.target, dtype=float),
            target_heading=layout.target_heading,
            obstacles=layout.obstacles,
            time_step=0,
            horizon=self.horizon,
            previous_action=np.zeros(2),
        )
        return state, self.observe(state)

    def _clip_action(self, action) -> tuple[int, bool]:
        a = int(np.asarray(action).reshape(-1)[0]) if np.ndim(action) else int(action)
        clipped = not 0 <= a < self.num_actions
        return min(max(a, 0), self.num_actions - 1), clipped

    def transition(self, state: EnvState, action) -> tuple[EnvState, RawSignals]:
        if state.done or state.time_step >= state.horizon:
            raise UsageError("step called on a finished episode")
        a, clipped = self._clip_action(action)
        m = self.cell_map(state.obstacles)
        pos = state.position
        heading = state.heading
        contact = blocked = False
        velocity = np.zeros(2)
        if a != STAY:
            heading = heading_angle(ACTION_HEADING[a])
            cand = pos + MOVES[a]
            x, y = int(cand[0]), int(cand[1])
            if not (0 <= x < self.n and 0 <= y < self.n) or m[x, y] >= 1.0:
                contact = blocked = True
            else:
                pos = cand
                velocity = MOVES[a].copy()
        t_next = state.time_step + 1
        new = dataclasses.replace(
            state,
            position=pos.copy(),
            velocity=velocity,
            heading=heading,
            time_step=t_next,
            previous_action=MOVES[a].copy(),
            done=t_next == state.horizon,
            last_action=a,
            blocked=blocked,
        )
        offset = new.target_position - pos
        signals = RawSignals(
            target_in_body=to_body(offset, heading),
            heading_error=wrap_angle(state.target_heading - heading),
            speed=float(np.linalg.norm(velocity)),
            action=MOVES[a].copy(),
            previous_action=np.asarray(state.previous_action, dtype=float).copy(),
            contact_flag=contact,
            action_clipped=clipped,
            in_task_window=state.time_step >= state.horizon - self.task_window,
            distance_to_target=float(np.linalg.norm(offset)),
            velocity_body=to_body(velocity, heading),
            on_obstacle=bool(m[int(pos[0]), int(pos[1])] == 0.5),
        )
        return new, signals

    def step(self, state: EnvState, action):
        new, signals = self.transition(state, action)
        return new, self.observe(new), signals, new.done

    def rewards(self, signals: RawSignals, params: RewardParams | None = None) -> np.ndarray:
        return group_rewards(signals, params or self.reward_params)

    # ------------------------------------------------------------ sensing

    def occupancy(self, state: EnvState) -> np.ndarray:
        m = self.cell_map(state.obstacles)
        r = self.cfg.occupancy_radius
        h = heading_index(state.heading)
        fwd = MOVES[1 + h]
        left = MOVES[1 + (h + 1) % 4]
        out = np.empty((2 * r + 1) ** 2)
        k = 0
        x0, y0 = int(state.position[0]), int(state.position[1])
        for i in range(-r, r + 1):
            for j in range(-r, r + 1):
                x = x0 + int(i * fwd[0] + j * left[0])
                y = y0 + int(i * fwd[1] + j * left[1])
                out[k] = m[x, y] if 0 <= x < self.n and 0 <= y < self.n else 1.0
                k += 1
        return out

    def observe(self, state: EnvState) -> Observation:
        obs = Observation(
            target_in_body=to_body(state.target_position - state.position, state.heading),
            heading_error=wrap_angle(state.target_heading - state.heading),
            own_velocity_in_body_frame=to_body(state.velocity, state.heading),
            time_indicator=state.time_step / state.horizon,
            previous_action=np.asarray(state.previous_action, dtype=float).copy(),
            local_occupancy=self.occupancy(state),
            position_scale=float(self.n),
        )
        if self.cfg.obs_noise > 0:
            obs.noise = self.cfg.obs_noise * self._noise_rng.standard_normal(self.obs_dim)
        return obs

    @property
    def obs_dim(self) -> int:
        return 2 + 2 + 2 + 1 + self.action_dim + (2 * self.cfg.occupancy_radius + 1) ** 2

    def trajectory_point(self, state: EnvState) -> tuple[float, float, float]:
        return float(state.position[0]), float(state.position[1]), float(state.heading)
