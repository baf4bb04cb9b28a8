"""Continuous point mass with heading, driven by body-frame acceleration and turn rate."""

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
    rot,
    to_body,
    wrap_angle,
)

FLOOD_RESOLUTION = 0.25  # meters per flood-fill cell at arena scale 1


class PointMass:
    """Explicit-Euler point mass in a square arena ``[0, size]^2``.

    Actions are normalised to ``[-1, 1]^3``: forward and lateral acceleration
    (scaled by ``max_accel``) and yaw rate (scaled by ``max_turn_rate``).
    """

    kind = "pointmass"
    num_actions = None
    action_dim = 3
    action_range = 1.0
    discrete = False

    def __init__(self, cfg: EnvConfig, reward_cfg: RewardConfig | None = None):
        if cfg.kind != "pointmass":
            raise UsageError(f"PointMass needs a pointmass config, got {cfg.kind!r}")
        self.cfg = cfg
        self.size = float(cfg.size)
        self.horizon = cfg.resolved_horizon()
        self.task_window = cfg.resolved_task_window()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.reward_params = RewardParams.from_config(
            self.reward_cfg, self.action_range, cfg.arena_scale, cfg.traversal_cost
        )
        self._noise_rng = np.random.default_rng(0)

    # ------------------------------------------------------------ layouts

    def _sample_box(self, rng: np.random.Generator) -> Box:
        lo, hi = self.cfg.box_length
        w = rng.uniform(lo, hi) * self.cfg.arena_scale
        c = rng.uniform(w / 2, self.size - w / 2, size=2)
        return Box((float(c[0]), float(c[1])), float(w), box_class(self.cfg, rng))

    def _flood_grid(self, boxes) -> tuple[np.ndarray, float]:
        res = FLOOD_RESOLUTION * self.cfg.arena_scale
        k = max(2, int(math.ceil(self.size / res)))
        centers = (np.arange(k) + 0.5) * (self.size / k)
        free = np.ones((k, k), dtype=bool)
        for b in boxes:
            if not b.blocking:
                continue
            half = b.width / 2
            # inflate by half a cell so corridors the discretisation cannot resolve count as closed
            pad = self.size / k / 2
            inx = np.abs(centers - b.center[0]) < half + pad
            iny = np.abs(centers - b.center[1]) < half + pad
            free[np.ix_(inx, iny)] = False
        return free, self.size / k

    def _inside_any(self, p, boxes, blocking_only=False) -> bool:
        return any(b.contains(p) and (b.blocking or not blocking_only) for b in boxes)

    def sample_layout(self, seed: int) -> Layout:
        rng = np.random.default_rng(seed)
        margin = 0.3 * self.cfg.arena_scale
        for _ in range(MAX_LAYOUT_TRIES):
            boxes = tuple(self._sample_box(rng) for _ in range(self.cfg.num_boxes))
            spawn = rng.uniform(margin, self.size - margin, size=2)
            target = rng.uniform(margin, self.size - margin, size=2)
            sh, th = rng.uniform(-math.pi, math.pi, size=2)
            if self._inside_any(spawn, boxes) or self._inside_any(target, boxes, blocking_only=True):
                continue
            free, cell = self._flood_grid(boxes)
            s = tuple(np.minimum((spawn / cell).astype(int), free.shape[0] - 1))
            g = tuple(np.minimum((target / cell).astype(int), free.shape[0] - 1))
            if reachable(free, s, g) is not None:
                return Layout(boxes, (float(spawn[0]), float(spawn[1])), float(sh),
                              (float(target[0]), float(target[1])), float(th))
        check_layout_budget(MAX_LAYOUT_TRIES)
        raise AssertionError("unreachable")  # pragma: no cover

    def scenario_layout(self) -> Layout:
        mid = self.size / 2
        spawn = (0.15 * self.size, mid)
        target = (0.85 * self.size, mid)
        w = 1.4 * self.cfg.arena_scale
        rng = np.random.default_rng(self.cfg.layout_seed)
        box = Box(((spawn[0] + target[0]) / 2, mid), w, box_class(self.cfg, rng))
        boxes = (box,) if self.cfg.num_boxes > 0 else ()
        return Layout(boxes, spawn, 0.0, target, 0.0)

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
            heading=float(layout.spawn_heading),
            target_position=np.array(layout.target, dtype=float),
            target_heading=float(layout.target_heading),
            obstacles=layout.obstacles,
            time_step=0,
            horizon=self.horizon,
            previous_action=np.zeros(self.action_dim),
        )
        return state, self.observe(state)

    def _resolve_collisions(self, prev: np.ndarray, pos: np.ndarray, vel: np.ndarray, obstacles):
        contact = False
        for b in obstacles:
            if not (b.blocking and b.contains(pos)):
                continue
            contact = True
            half = b.width / 2
            lo = np.array(b.center) - half
            hi = np.array(b.center) + half
            # push back through the face that was crossed this step
            for ax in (0, 1):
                if prev[ax] <= lo[ax]:
                    pos[ax] = lo[ax]
                    vel[ax] = min(vel[ax], 0.0)
                elif prev[ax] >= hi[ax]:
                    pos[ax] = hi[ax]
                    vel[ax] = max(vel[ax], 0.0)
        for ax in (0, 1):
            if pos[ax] < 0.0 or pos[ax] > self.size:
                contact = True
                pos[ax] = min(max(pos[ax], 0.0), self.size)
                vel[ax] = 0.0
        return pos, vel, contact

    def transition(self, state: EnvState, action) -> tuple[EnvState, RawSignals]:
        if state.done or state.time_step >= state.horizon:
            raise UsageError("step called on a finished episode")
        raw = np.asarray(action, dtype=float).reshape(-1)
        if raw.shape != (self.action_dim,):
            raise UsageError(f"action must have {self.action_dim} entries")
        a = np.clip(raw, -1.0, 1.0)
        clipped = bool(np.any(a != raw))
        dt = self.cfg.dt
        accel = rot(state.heading) @ (a[:2] * self.cfg.max_accel)
        vel = state.velocity + dt * (accel - self.cfg.drag * state.velocity)
        speed = float(np.linalg.norm(vel))
        if speed > self.cfg.max_speed:
            vel = vel * (self.cfg.max_speed / speed)
        heading = wrap_angle(state.heading + dt * a[2] * self.cfg.max_turn_rate)
        pos, vel, contact = self._resolve_collisions(state.position, state.position + dt * vel, vel.copy(), state.obstacles)
        t_next = state.time_step + 1
        new = dataclasses.replace(
            state,
            position=pos,
            velocity=vel,
            heading=heading,
            time_step=t_next,
            previous_action=a.copy(),
            done=t_next == state.horizon,
            blocked=contact,
        )
        offset = state.target_position - pos
        signals = RawSignals(
            target_in_body=to_body(offset, heading),
            heading_error=wrap_angle(state.target_heading - heading),
            speed=float(np.linalg.norm(vel)),
            action=a.copy(),
            previous_action=np.asarray(state.previous_action, dtype=float).copy(),
            contact_flag=contact,
            action_clipped=clipped,
            in_task_window=state.time_step >= state.horizon - self.task_window,
            distance_to_target=float(np.linalg.norm(offset)),
            velocity_body=to_body(vel, heading),
            on_obstacle=self._inside_any(pos, state.obstacles) and not self._inside_any(pos, state.obstacles, True),
        )
        return new, signals

    def step(self, state: EnvState, action):
        new, signals = self.transition(state, action)
        return new, self.observe(new), signals, new.done

    def rewards(self, signals: RawSignals, params: RewardParams | None = None) -> np.ndarray:
        return group_rewards(signals, params or self.reward_params)

    # ------------------------------------------------------------ sensing

    def occupancy(self, state: EnvState) -> np.ndarray:
        r = self.cfg.occupancy_radius
        sp = self.cfg.occupancy_spacing * self.cfg.arena_scale
        R = rot(state.heading)
        out = np.empty((2 * r + 1) ** 2)
        k = 0
        for i in range(-r, r + 1):
            for j in range(-r, r + 1):
                p = state.position + R @ np.array([i * sp, j * sp])
                if not (0 <= p[0] <= self.size and 0 <= p[1] <= self.size):
                    out[k] = 1.0
                else:
                    v = 0.0
                    for b in state.obstacles:
                        if b.contains(p):
                            v = max(v, 1.0 if b.blocking else 0.5)
                    out[k] = v
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
            position_scale=self.size,
        )
        if self.cfg.obs_noise > 0:
            obs.noise = self.cfg.obs_noise * self._noise_rng.standard_normal(self.obs_dim)
        return obs

    @property
    def obs_dim(self) -> int:
        return 2 + 2 + 2 + 1 + self.action_dim + (2 * self.cfg.occupancy_radius + 1) ** 2

    def trajectory_point(self, state: EnvState) -> tuple[float, float, float]:
        return float(state.position[0]), float(state.position[1]), float(state.heading)
