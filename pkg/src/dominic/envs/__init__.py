"""Desk-scale local-navigation environments."""

from ..config import EnvConfig, RewardConfig
from ..errors import ConfigError
from .common import Box, EnvState, Layout, Observation, reachable
from .gridworld import GridWorld
from .pointmass import PointMass
from .tabular import GridCodec, TabularMdp, tabularize


def make_env(cfg: EnvConfig, reward_cfg: RewardConfig | None = None):
    if cfg.kind == "gridworld":
        return GridWorld(cfg, reward_cfg)
    if cfg.kind == "pointmass":
        return PointMass(cfg, reward_cfg)
    raise ConfigError(f"unknown environment kind {cfg.kind!r}")


def reset(cfg: EnvConfig, seed: int, reward_cfg: RewardConfig | None = None):
    return make_env(cfg, reward_cfg).reset(seed)


__all__ = [
    "Box",
    "EnvState",
    "GridCodec",
    "GridWorld",
    "Layout",
    "Observation",
    "PointMass",
    "TabularMdp",
    "make_env",
    "reachable",
    "reset",
    "tabularize",
]
