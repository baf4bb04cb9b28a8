"""Run configuration: typed sections, strict YAML loading, dotted overrides, hashing."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

GROUP_NAMES = ("task", "regularizer", "style")


@dataclass
class EnvConfig:
    kind: str = "gridworld"  # gridworld | pointmass
    size: float = 9.0  # cells (gridworld) or meters (pointmass)
    horizon: int | None = None  # gridworld 24, pointmass 60
    dt: float = 0.1  # pointmass integration step
    task_window: int | None = None  # default: last sixth of the horizon
    num_boxes: int = 1
    box_length: list[float] = field(default_factory=lambda: [0.8, 2.0])
    reference_size: float = 8.0  # arena size the box lengths are quoted for
    obstacle_class: str = "traversable"  # traversable | blocking | random
    blocking_prob: float = 0.5
    traversal_cost: float = 1.0
    layout: str = "fixed"  # random | fixed | scenario
    layout_seed: int = 0
    occupancy_radius: int = 2
    occupancy_spacing: float = 0.4
    max_accel: float = 2.0
    max_turn_rate: float = 2.0
    max_speed: float = 1.5
    drag: float = 1.0
    obs_noise: float = 0.0

    @property
    def arena_scale(self) -> float:
        return self.size / self.reference_size

    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return 24 if self.kind == "gridworld" else 60

    def resolved_task_window(self) -> int:
        if self.task_window is not None:
            return self.task_window
        return max(1, self.resolved_horizon() // 6)


@dataclass
class RewardConfig:
    sigma_action_rate: float | None = None  # default 0.5 * action_range
    sigma_torque: float | None = None  # default 0.7 * action_range
    sigma_rest: float | None = None  # default 0.7 * action_range
    sigma_facing: float = math.pi / 2
    sigma_toward: float = 0.5
    sigma_stall: float = 0.2
    v_min: float = 0.3
    d_far: float = 0.5
    c_contact: float = math.exp(-1.0)
    yaw_gate: float = 0.25  # scaled by the arena ratio
    rest_action: list[float] | None = None


@dataclass
class FeaturesConfig:
    mode: str = "vel-pose"  # vel-dir | vel-pose
    beta_psi: float = 0.99


@dataclass
class DiversityConfig:
    kind: str = "vdw"  # repulsive | vdw
    ell0: float = 3.0


@dataclass
class LagrangeConfig:
    alpha: list[float] = field(default_factory=lambda: [0.9, 0.8, 0.7])
    lr_mu: float = 0.05
    avg_coeff: float = 0.9
    mu_init: float = 2.0
    mu_max: float = 20.0
    expert_values: list[float] | None = None
    expert_checkpoint: str | None = None
    expert_from_oracle: bool = False


@dataclass
class ApproxConfig:
    hidden: list[int] = field(default_factory=lambda: [128, 128])
    mask_prob: float = 0.5
    separate_networks: bool = True
    init_log_std: float = -0.5


@dataclass
class TrainerConfig:
    n_skills: int = 4
    iterations: int = 300
    warm_start_iters: int = 100
    steps_per_iter: int = 48
    num_envs: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ppo_clip: float = 0.2
    epochs: int = 4
    minibatches: int = 8
    entropy_coeff: float = 0.005
    lr: float = 3e-4
    lr_schedule: str = "constant"  # constant | linear
    value_coeff: float = 0.5
    sf_coeff: float = 0.5
    max_grad_norm: float = 1.0
    target_kl: float | None = None  # stop the epoch loop early past this approximate KL
    checkpoint_every: int = 50
    curriculum: bool = True
    fast_tabular: bool = True
    expert_iterations: int = 150
    expert_num_envs: int = 64
    expert_eval_episodes: int = 256
    eval_episodes: int = 16


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    diversity: DiversityConfig = field(default_factory=DiversityConfig)
    lagrange: LagrangeConfig = field(default_factory=LagrangeConfig)
    approx: ApproxConfig = field(default_factory=ApproxConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    seed: int = 0
    output_dir: str = "runs"
    run_id: str = "run"

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        # output location does not change results
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("run_id")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def copy(self) -> "RunConfig":
        return copy.deepcopy(self)


def validate(cfg: RunConfig) -> None:
    e, t = cfg.env, cfg.trainer
    checks = [
        (e.kind in ("gridworld", "pointmass"), "env.kind must be gridworld or pointmass"),
        (e.size > 0, "env.size must be positive"),
        (e.resolved_horizon() > 0, "env.horizon must be positive"),
        (0 < e.resolved_task_window() <= e.resolved_horizon(), "env.task_window must lie in [1, horizon]"),
        (e.num_boxes >= 0, "env.num_boxes must be non-negative"),
        (len(e.box_length) == 2 and 0 < e.box_length[0] <= e.box_length[1], "env.box_length must be [lo, hi] with 0 < lo <= hi"),
        (e.box_length[1] * e.arena_scale < e.size, "env.box_length exceeds the arena"),
        (e.obstacle_class in ("traversable", "blocking", "random"), "env.obstacle_class invalid"),
        (e.layout in ("random", "fixed", "scenario"), "env.layout invalid"),
        (e.dt > 0, "env.dt must be positive"),
        (e.traversal_cost >= 0, "env.traversal_cost must be non-negative"),
        (e.obs_noise >= 0, "env.obs_noise must be non-negative"),
        (cfg.features.mode in ("vel-dir", "vel-pose"), "features.mode must be vel-dir or vel-pose"),
        (0 <= cfg.features.beta_psi <= 1, "features.beta_psi must lie in [0, 1]"),
        (cfg.diversity.kind in ("repulsive", "vdw"), "diversity.kind must be repulsive or vdw"),
        (cfg.diversity.ell0 > 0, "diversity.ell0 must be positive"),
        (len(cfg.lagrange.alpha) == 3 and all(0 <= a <= 1 for a in cfg.lagrange.alpha), "lagrange.alpha must be three ratios in [0, 1]"),
        (0 <= cfg.lagrange.avg_coeff <= 1, "lagrange.avg_coeff must lie in [0, 1]"),
        (cfg.lagrange.mu_max > 0, "lagrange.mu_max must be positive"),
        (0 < cfg.approx.mask_prob <= 1, "approx.mask_prob must lie in (0, 1]"),
        (len(cfg.approx.hidden) >= 1 and all(h >= 1 for h in cfg.approx.hidden), "approx.hidden sizes must be >= 1"),
        (t.n_skills >= 1, "trainer.n_skills must be >= 1"),
        (t.iterations >= 1, "trainer.iterations must be >= 1"),
        (0 <= t.warm_start_iters <= t.iterations, "trainer.warm_start_iters must lie in [0, iterations]"),
        (t.steps_per_iter >= 1 and t.num_envs >= 1, "trainer.steps_per_iter and num_envs must be >= 1"),
        (0 < t.gamma < 1, "trainer.gamma must lie in (0, 1)"),
        (0 <= t.gae_lambda <= 1, "trainer.gae_lambda must lie in [0, 1]"),
        (t.epochs >= 1 and t.minibatches >= 1, "trainer.epochs and minibatches must be >= 1"),
        (t.lr > 0, "trainer.lr must be positive"),
        (t.lr_schedule in ("constant", "linear"), "trainer.lr_schedule must be constant or linear"),
        (t.eval_episodes >= 1 and t.expert_eval_episodes >= 1, "trainer evaluation episode counts must be >= 1"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


# ---------------------------------------------------------------- loading


def _line_index(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based source lines."""
    lines: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, "")
    return lines


def _coerce(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {tp}")


def _build(cls, data: dict, prefix: str, lines: dict[str, int]):
    if not isinstance(data, dict):
        raise ConfigError(_where(prefix, lines) + f"section '{prefix}' must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in names:
            raise ConfigError(_where(path, lines) + f"unknown key '{path}'")
        tp = hints[key]
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, path, lines)
        else:
            try:
                kwargs[key] = _coerce(value, tp, path)
            except ConfigError as exc:
                raise ConfigError(_where(path, lines) + str(exc)) from None
    return cls(**kwargs)


def _where(path: str, lines: dict[str, int]) -> str:
    line = lines.get(path)
    return f"line {line}: " if line is not None else ""


def config_from_dict(data: dict, lines: dict[str, int] | None = None) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "", lines or {})
    validate(cfg)
    return cfg


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override '{item}' must look like key.path=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def apply_overrides(data: dict, overrides: dict[str, Any]) -> dict:
    data = copy.deepcopy(data or {})
    for key, value in overrides.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{key}': '{p}' is not a section")
        node[parts[-1]] = value
    return data


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    lines = _line_index(text)
    try:
        return config_from_dict(apply_overrides(data, overrides or {}), lines)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
