"""Sigmoid-bounded Lagrange multipliers, one per (constraint group, skill)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UsageError

SIGMOID_EPS = 1e-12


def bounded_multiplier(mu):
    """Logistic sigmoid clamped to [eps, 1 - eps]; accepts scalars or arrays."""
    mu = np.asarray(mu, dtype=float)
    out = np.where(mu >= 0, 1.0 / (1.0 + np.exp(-np.abs(mu))), np.exp(-np.abs(mu)) / (1.0 + np.exp(-np.abs(mu))))
    out = np.clip(out, SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return float(out) if out.ndim == 0 else out


def aggregate_advantage(a_i, a_e, sig):
    """Mix one intrinsic and m extrinsic advantages.

    ``a_e`` and ``sig`` carry the group axis last; the intrinsic weight is
    ``1 - max_j sig_j`` so intrinsic reward only matters once every group's
    multiplier has relaxed.
    """
    a_e = np.asarray(a_e, dtype=float)
    sig = np.asarray(sig, dtype=float)
    if a_e.shape[-1] != sig.shape[-1]:
        raise UsageError(f"advantage and multiplier vectors differ in length ({a_e.shape[-1]} vs {sig.shape[-1]})")
    intrinsic_weight = 1.0 - sig.max(axis=-1)
    out = intrinsic_weight * np.asarray(a_i, dtype=float) + (sig * a_e).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ConstraintGroup:
    group_id: int
    alpha: float
    expert_value: float
    mu: np.ndarray  # (n_skills,)
    vbar: np.ndarray  # (n_skills,), NaN until the first observation
    avg_coeff: float = 0.9
    lr_mu: float = 0.05
    mu_max: float = 20.0

    @classmethod
    def create(cls, group_id: int, alpha: float, expert_value: float, n_skills: int,
               mu_init: float = 2.0, **kw) -> "ConstraintGroup":
        return cls(group_id, alpha, expert_value, np.full(n_skills, float(mu_init)),
                   np.full(n_skills, np.nan), **kw)

    @property
    def threshold(self) -> float:
        return self.alpha * self.expert_value

    @property
    def sigma(self) -> np.ndarray:
        return bounded_multiplier(self.mu)

    def copy(self) -> "ConstraintGroup":
        return replace(self, mu=self.mu.copy(), vbar=self.vbar.copy())


def update_moving_average(group: ConstraintGroup, z: int, v_new: float) -> ConstraintGroup:
    """EMA of skill ``z``'s group value; the first observation seeds the average."""
    out = group.copy()
    if math.isnan(out.vbar[z]):
        out.vbar[z] = v_new
    else:
        out.vbar[z] = group.avg_coeff * group.vbar[z] + (1.0 - group.avg_coeff) * v_new
    return out


def update_multipliers(groups: list[ConstraintGroup]) -> list[ConstraintGroup]:
    """One ascent step: a violated constraint raises its multiplier, a satisfied one lowers it."""
    out = []
    for g in groups:
        if np.any(np.isnan(g.vbar)):
            raise UsageError(f"group {g.group_id} has skills without a moving-average value")
        new = g.copy()
        new.mu = np.clip(g.mu + g.lr_mu * (g.threshold - g.vbar), -g.mu_max, g.mu_max)
        out.append(new)
    return out


def sigma_matrix(groups: list[ConstraintGroup]) -> np.ndarray:
    """(n_skills, m) bounded multipliers."""
    return np.stack([g.sigma for g in groups], axis=-1)


def satisfied(groups: list[ConstraintGroup], returns: np.ndarray, slack: float = 0.0) -> np.ndarray:
    """(n_skills, m) flags: return >= alpha v* - slack v*."""
    thr = np.array([g.threshold - slack * g.expert_value for g in groups])
    return np.asarray(returns) >= thr


@dataclass
class LagrangeState:
    """The m groups plus helpers the trainer needs."""

    groups: list[ConstraintGroup] = field(default_factory=list)

    @classmethod
    def create(cls, alphas, expert_values, n_skills: int, mu_init: float = 2.0,
               avg_coeff: float = 0.9, lr_mu: float = 0.05, mu_max: float = 20.0) -> "LagrangeState":
        return cls([
            ConstraintGroup.create(j, float(a), float(v), n_skills, mu_init,
                                   avg_coeff=avg_coeff, lr_mu=lr_mu, mu_max=mu_max)
            for j, (a, v) in enumerate(zip(alphas, expert_values))
        ])

    @property
    def mu(self) -> np.ndarray:
        return np.stack([g.mu for g in self.groups])

    @property
    def vbar(self) -> np.ndarray:
        return np.stack([g.vbar for g in self.groups])

    def sigma(self) -> np.ndarray:
        return sigma_matrix(self.groups)
