"""State features, successor-feature TD targets and per-skill feature expectations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError
from .geometry import to_body

FEATURE_MODES = ("vel-dir", "vel-pose")


def feature_dim(mode: str, action_dim: int) -> int:
    if mode == "vel-dir":
        return 2
    if mode == "vel-pose":
        return 2 + action_dim
    raise ConfigError(f"unknown feature mode {mode!r}")


def phi_from_parts(velocity_body: np.ndarray, previous_action: np.ndarray, mode: str) -> np.ndarray:
    if mode == "vel-dir":
        speed = float(np.linalg.norm(velocity_body))
        if speed < 1e-6:
            return np.zeros(2)
        return np.asarray(velocity_body, dtype=float) / speed
    if mode == "vel-pose":
        return np.concatenate([velocity_body, previous_action]).astype(float)
    raise ConfigError(f"unknown feature mode {mode!r}")


def phi(state, mode: str) -> np.ndarray:
    """Feature vector of an environment state (velocity expressed in the body frame)."""
    return phi_from_parts(to_body(state.velocity, state.heading), np.asarray(state.previous_action), mode)


def sf_td_targets(phi_s, sf_next, dones, gamma: float, skills=None, next_skills=None) -> np.ndarray:
    """One-step successor-feature targets ``phi(s) + gamma * psi(s')``, zero bootstrap at terminals.

    ``phi_s`` and ``sf_next`` are (T, ..., d); ``dones`` is (T, ...). When skill ids
    are given, every non-terminal pair must stay within one skill.
    """
    phi_s = np.asarray(phi_s, dtype=float)
    sf_next = np.asarray(sf_next, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if phi_s.shape != sf_next.shape or dones.shape != phi_s.shape[:-1]:
        raise UsageError("phi, next-state SF predictions and done flags are misaligned")
    if skills is not None:
        skills = np.asarray(skills)
        nxt = skills if next_skills is None else np.asarray(next_skills)
        if np.any((skills != nxt) & ~dones):
            raise UsageError("TD batch mixes skills across a non-terminal transition")
    if not 0 <= gamma < 1:
        raise UsageError(f"discount must lie in [0, 1), got {gamma}")
    return phi_s + gamma * (~dones)[..., None] * sf_next


@dataclass
class FeatureExpectation:
    psi: np.ndarray  # (n_skills, d)
    beta: float = 0.99

    @classmethod
    def zeros(cls, n: int, d: int, beta: float = 0.99) -> "FeatureExpectation":
        return cls(np.zeros((n, d)), beta)

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    def copy(self) -> "FeatureExpectation":
        return FeatureExpectation(self.psi.copy(), self.beta)


def update_feature_expectation(fe: FeatureExpectation, z: int, initial_sf) -> FeatureExpectation:
    """Exponential moving average of skill ``z``'s initial-state SF prediction."""
    out = fe.copy()
    out.psi[z] = fe.beta * fe.psi[z] + (1.0 - fe.beta) * np.asarray(initial_sf, dtype=float)
    return out
