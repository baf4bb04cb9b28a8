"""Nearest-neighbour diversity objectives over skill feature expectations.

Two objectives are supported: the repulsive one, half the sum of squared
nearest-neighbour distances, and the Van der Waals (VDW) one, whose per-skill
term ``0.5 l^2 - 0.2 l^5 / l0^3`` peaks at ``l = l0``. The matching intrinsic
rewards are their gradients with the nearest neighbour held fixed.
"""

from __future__ import annotations

import numpy as np

from .config import DiversityConfig
from .errors import DomainError, UsageError


def _psi(fe) -> np.ndarray:
    return np.asarray(getattr(fe, "psi", fe), dtype=float)


def pairwise_distances(psi: np.ndarray) -> np.ndarray:
    diff = psi[:, None, :] - psi[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def nearest_neighbors(fe) -> tuple[np.ndarray, np.ndarray]:
    """(z_star, ell) for every skill; ties break toward the lowest index."""
    psi = _psi(fe)
    n = psi.shape[0]
    if n < 2:
        raise UsageError("nearest neighbours need at least two skills")
    d = pairwise_distances(psi)
    d[np.arange(n), np.arange(n)] = np.inf
    z_star = np.argmin(d, axis=1)
    return z_star, d[np.arange(n), z_star]


def nearest_neighbor(z: int, fe) -> tuple[int | None, float]:
    psi = _psi(fe)
    if psi.shape[0] < 2:
        return None, 0.0
    d = np.sqrt(((psi - psi[z]) ** 2).sum(axis=1))
    d[z] = np.inf
    k = int(np.argmin(d))
    return k, float(d[k])


def repulsive_term(ell: float) -> float:
    return 0.5 * ell**2


def vdw_term(ell: float, ell0: float) -> float:
    return 0.5 * ell**2 - 0.2 * ell**5 / ell0**3


def repulsive_objective(fe) -> float:
    _, ell = nearest_neighbors(fe)
    return float(0.5 * np.sum(ell**2))


def vdw_objective(fe, ell0: float) -> float:
    if not ell0 > 0:
        raise DomainError("ell0 must be positive")
    _, ell = nearest_neighbors(fe)
    return float(np.sum(0.5 * ell**2 - 0.2 * ell**5 / ell0**3))


def objective(fe, cfg: DiversityConfig) -> float:
    if cfg.kind == "repulsive":
        return repulsive_objective(fe)
    return vdw_objective(fe, cfg.ell0)


def reward_directions(fe, cfg: DiversityConfig) -> np.ndarray:
    """Per-skill vectors ``c_z (psi^z - psi^z*)`` whose inner product with phi(s) is the reward."""
    psi = _psi(fe)
    n = psi.shape[0]
    if n < 2:
        return np.zeros_like(psi)
    z_star, ell = nearest_neighbors(psi)
    direction = psi - psi[z_star]
    if cfg.kind == "vdw":
        direction = (1.0 - (ell / cfg.ell0) ** 3)[:, None] * direction
    elif cfg.kind != "repulsive":
        raise UsageError(f"unknown diversity kind {cfg.kind!r}")
    return direction


def intrinsic_reward(phi_s, z: int, fe, cfg: DiversityConfig) -> float:
    psi = _psi(fe)
    if psi.shape[0] < 2:
        return 0.0
    k, ell = nearest_neighbor(z, psi)
    r = float(np.dot(phi_s, psi[z] - psi[k]))
    if cfg.kind == "vdw":
        r *= 1.0 - (ell / cfg.ell0) ** 3
    return r


def intrinsic_rewards(phi_batch, skills, fe, cfg: DiversityConfig) -> np.ndarray:
    """Vectorised ``intrinsic_reward`` over a batch of (phi(s), z) pairs."""
    directions = reward_directions(fe, cfg)
    skills = np.asarray(skills)
    return np.einsum("...d,...d->...", np.asarray(phi_batch, dtype=float), directions[skills])


def diversity_metric(fe) -> float:
    """Mean nearest-neighbour distance between skills."""
    _, ell = nearest_neighbors(fe)
    return float(np.mean(ell))
