"""Action distributions: categorical over logits and tanh-squashed diagonal Gaussian.

For the Gaussian, rollouts store the pre-squash sample ``u``; PPO ratios use
``log N(u)`` because the tanh Jacobian term cancels between old and new
policies.
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2 * math.pi)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_sample(logits: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    logp = log_softmax(logits)
    p = np.exp(logp)
    u = rng.random(len(p))[:, None]
    a = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), p.shape[1] - 1)
    return a, logp[np.arange(len(a)), a]


def categorical_logp(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return log_softmax(logits)[np.arange(len(actions)), actions]


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def gaussian_sample(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator):
    """Returns (pre-squash u, squashed action, log N(u))."""
    u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return u, np.tanh(u), gaussian_logp(mean, log_std, u)


def gaussian_logp(mean: np.ndarray, log_std: np.ndarray, u: np.ndarray) -> np.ndarray:
    z = (u - mean) / np.exp(log_std)
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=-1)


def squashed_logp(mean, log_std, u) -> np.ndarray:
    """Log-density of ``tanh(u)`` including the Jacobian correction."""
    return gaussian_logp(mean, log_std, u) - np.log(1.0 - np.tanh(u) ** 2 + 1e-12).sum(axis=-1)


def gaussian_entropy(log_std: np.ndarray, batch: int) -> np.ndarray:
    return np.full(batch, float(np.sum(log_std + 0.5 + 0.5 * LOG_2PI)))
