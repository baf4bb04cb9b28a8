"""Grouped extrinsic rewards: task, regularizer and style.

Every term except the two task trackers is an exponential kernel
``exp(-|x / sigma|^2)``; the regularizer and style groups are products of
kernels, so both lie in (0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RewardConfig
from .errors import DomainError

TASK, REGULARIZER, STYLE = 0, 1, 2
NUM_GROUPS = 3


@dataclass(frozen=True)
class RawSignals:
    target_in_body: np.ndarray
    heading_error: float
    speed: float
    action: np.ndarray
    previous_action: np.ndarray
    contact_flag: bool = False
    action_clipped: bool = False
    in_task_window: bool = False
    distance_to_target: float = 0.0
    velocity_body: np.ndarray = field(default_factory=lambda: np.zeros(2))
    on_obstacle: bool = False


@dataclass(frozen=True)
class RewardParams:
    """Resolved kernel scales (all in the environment's units)."""

    sigma_action_rate: float = 0.5
    sigma_torque: float = 0.7
    sigma_rest: float = 0.7
    sigma_facing: float = math.pi / 2
    sigma_toward: float = 0.5
    sigma_stall: float = 0.2
    v_min: float = 0.3
    d_far: float = 0.5
    c_contact: float = math.exp(-1.0)
    yaw_gate: float = 0.25
    traversal_cost: float = 0.0
    rest_action: tuple[float, ...] | None = None

    @classmethod
    def from_config(
        cls,
        cfg: RewardConfig,
        action_range: float = 1.0,
        arena_scale: float = 1.0,
        traversal_cost: float = 0.0,
    ) -> "RewardParams":
        return cls(
            sigma_action_rate=cfg.sigma_action_rate if cfg.sigma_action_rate is not None else 0.5 * action_range,
            sigma_torque=cfg.sigma_torque if cfg.sigma_torque is not None else 0.7 * action_range,
            sigma_rest=cfg.sigma_rest if cfg.sigma_rest is not None else 0.7 * action_range,
            sigma_facing=cfg.sigma_facing,
            sigma_toward=cfg.sigma_toward,
            sigma_stall=cfg.sigma_stall,
            v_min=cfg.v_min,
            d_far=cfg.d_far,
            c_contact=cfg.c_contact,
            yaw_gate=cfg.yaw_gate * arena_scale,
            traversal_cost=traversal_cost,
            rest_action=tuple(cfg.rest_action) if cfg.rest_action is not None else None,
        )


DEFAULT_PARAMS = RewardParams()


def exp_kernel(x, sigma_x: float) -> float:
    if not sigma_x > 0:
        raise DomainError(f"kernel scale must be positive, got {sigma_x}")
    mag = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return math.exp(-((mag / sigma_x) ** 2))


def task_reward(s: RawSignals, params: RewardParams = DEFAULT_PARAMS) -> float:
    if not s.in_task_window:
        return 0.0
    dist = float(np.linalg.norm(s.target_in_body))
    r_pos = 1.0 / (1.0 + dist)
    r_yaw = 1.0 / (1.0 + abs(s.heading_error)) if dist <= params.yaw_gate else 0.0
    return r_pos + r_yaw


def regularizer_reward(s: RawSignals, params: RewardParams = DEFAULT_PARAMS) -> float:
    action = np.asarray(s.action, dtype=float)
    r_rate = exp_kernel(action - np.asarray(s.previous_action, dtype=float), params.sigma_action_rate)
    r_contact = params.c_contact if s.contact_flag else 1.0
    r_torque = exp_kernel(action, params.sigma_torque)
    if s.distance_to_target > params.d_far:
        r_stall = exp_kernel(max(0.0, params.v_min - s.speed), params.sigma_stall)
    else:
        r_stall = 1.0
    r_traverse = math.exp(-params.traversal_cost) if s.on_obstacle else 1.0
    return r_rate * r_contact * r_torque * r_stall * r_traverse


def facing_error(target_in_body: np.ndarray) -> float:
    """Angle between the heading and the bearing to the target (0 at the target)."""
    if np.linalg.norm(target_in_body) < 1e-9:
        return 0.0
    return abs(math.atan2(target_in_body[1], target_in_body[0]))


def velocity_toward_target(velocity_body: np.ndarray, target_in_body: np.ndarray) -> float:
    dist = float(np.linalg.norm(target_in_body))
    if dist < 1e-9:
        return 0.0
    return float(np.dot(velocity_body, target_in_body) / dist)


def style_reward(s: RawSignals, params: RewardParams = DEFAULT_PARAMS) -> float:
    action = np.asarray(s.action, dtype=float)
    rest = np.zeros_like(action) if params.rest_action is None else np.asarray(params.rest_action, dtype=float)
    r_face = exp_kernel(facing_error(np.asarray(s.target_in_body, dtype=float)), params.sigma_facing)
    toward = velocity_toward_target(np.asarray(s.velocity_body, dtype=float), np.asarray(s.target_in_body, dtype=float))
    r_move = exp_kernel(max(0.0, -toward), params.sigma_toward)
    r_pose = exp_kernel(action - rest, params.sigma_rest)
    return r_face * r_move * r_pose


def group_rewards(s: RawSignals, params: RewardParams = DEFAULT_PARAMS) -> np.ndarray:
    return np.array([task_reward(s, params), regularizer_reward(s, params), style_reward(s, params)])
