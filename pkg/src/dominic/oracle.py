"""Exact tabular solvers used as ground truth for every learned quantity."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diversity import nearest_neighbor, repulsive_term, vdw_term
from .envs.tabular import TabularMdp
from .errors import DomainError, TieInstabilityError, UsageError

RESIDUAL_TOL = 1e-10


def check_policy(mdp: TabularMdp, pi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (mdp.num_states, mdp.num_actions):
        raise UsageError(f"policy table must be (S, A) = {(mdp.num_states, mdp.num_actions)}")
    if pi.min() < 0 or np.max(np.abs(pi.sum(axis=1) - 1.0)) > tol:
        raise UsageError("policy rows must be probability vectors")
    return pi


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.num_states, mdp.num_actions), 1.0 / mdp.num_actions)


def _solve(mdp: TabularMdp, pi: np.ndarray, rhs: np.ndarray, gamma: float) -> np.ndarray:
    """Solve (I - gamma P_pi) x = rhs; absorbing states are pinned to zero."""
    if not 0 <= gamma <= 1:
        raise DomainError(f"discount must lie in [0, 1], got {gamma}")
    P = mdp.policy_matrix(pi)
    live = ~mdp.absorbing
    if gamma == 1.0 and not mdp.absorbing.any():
        raise DomainError("undiscounted evaluation needs absorbing states")
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    if squeeze:
        rhs = rhs[:, None]
    if np.any(np.abs(rhs[mdp.absorbing]) > 0):
        raise UsageError("absorbing states must carry zero reward/features")
    idx = np.flatnonzero(live)
    A = sp.identity(len(idx), format="csc") - gamma * P[idx][:, idx].tocsc()
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise DomainError(f"singular evaluation system: {exc}") from None
    x_live = lu.solve(rhs[idx])
    if not np.all(np.isfinite(x_live)):
        raise DomainError("singular evaluation system")
    out = np.zeros_like(rhs)
    out[idx] = x_live
    resid = np.max(np.abs(A @ x_live - rhs[idx])) if len(idx) else 0.0
    if resid > RESIDUAL_TOL * max(1.0, np.max(np.abs(rhs))):
        raise DomainError(f"linear solve residual {resid:.2e} exceeds tolerance")
    return out[:, 0] if squeeze else out


def exact_value(mdp: TabularMdp, pi, group: int = 0, gamma: float | None = None,
                normalized: bool = False, reward: np.ndarray | None = None) -> np.ndarray:
    """Per-state value of ``pi`` for reward group ``group`` (or an explicit (S, A) table)."""
    pi = check_policy(mdp, pi)
    gamma = mdp.discount if gamma is None else gamma
    r = mdp.group_rewards[group] if reward is None else np.asarray(reward, dtype=float)
    v = _solve(mdp, pi, (pi * r).sum(axis=1), gamma)
    return (1.0 - gamma) * v if normalized else v


def exact_occupancy(mdp: TabularMdp, pi) -> np.ndarray:
    """Normalised discounted state-action occupancy d(s, a)."""
    pi = check_policy(mdp, pi)
    gamma = mdp.discount
    if not 0 <= gamma < 1:
        raise DomainError("occupancy needs a discount in [0, 1)")
    P = mdp.policy_matrix(pi)
    A = (sp.identity(mdp.num_states, format="csc") - gamma * P.tocsc()).T.tocsc()
    x = spla.spsolve(A, mdp.initial_distribution)
    resid = np.max(np.abs(A @ x - mdp.initial_distribution))
    if not np.all(np.isfinite(x)) or resid > RESIDUAL_TOL:
        raise DomainError(f"occupancy solve failed (residual {resid:.2e})")
    return (1.0 - gamma) * x[:, None] * pi


def exact_sf(mdp: TabularMdp, pi, phi_table, gamma: float | None = None) -> np.ndarray:
    """Successor features psi(s) = E[sum_t gamma^t phi(s_t) | s_0 = s], one column per feature."""
    pi = check_policy(mdp, pi)
    gamma = mdp.discount if gamma is None else gamma
    phi_table = np.asarray(phi_table, dtype=float)
    if phi_table.shape[0] != mdp.num_states:
        raise UsageError("feature table must have one row per state")
    return _solve(mdp, pi, phi_table, gamma)


def value_iteration(mdp: TabularMdp, weights=None, gamma: float | None = None,
                    tol: float = 1e-10, max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal value and greedy deterministic policy for the weighted group reward.

    Ties among actions resolve to the lowest action index.
    """
    gamma = mdp.discount if gamma is None else gamma
    w = np.ones(mdp.num_groups) if weights is None else np.asarray(weights, dtype=float)
    r = np.tensordot(w, mdp.group_rewards, axes=1)  # (S, A)
    if gamma >= 1 and not mdp.absorbing.any():
        raise DomainError("undiscounted value iteration needs absorbing states")
    v = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        q = r + gamma * np.stack([p @ v for p in mdp.transitions], axis=1)
        q[mdp.absorbing] = 0.0
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta < tol:
            break
    else:
        raise DomainError("value iteration did not converge")
    q = r + gamma * np.stack([p @ v for p in mdp.transitions], axis=1)
    q[mdp.absorbing] = 0.0
    greedy = np.zeros((mdp.num_states, mdp.num_actions))
    greedy[np.arange(mdp.num_states), np.argmax(q, axis=1)] = 1.0
    return v, greedy


def episode_returns(mdp: TabularMdp, pi) -> np.ndarray:
    """Expected undiscounted per-group return from the initial distribution."""
    return np.array([mdp.initial_distribution @ exact_value(mdp, pi, j, gamma=1.0) for j in range(mdp.num_groups)])


def optimal_group_returns(mdp: TabularMdp, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-group undiscounted returns of the undiscounted-optimal greedy policy."""
    _, greedy = value_iteration(mdp, weights, gamma=1.0)
    return episode_returns(mdp, greedy), greedy


def fd_diversity_gradient(psi, kind: str, ell0: float | None, z: int, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of skill ``z``'s diversity term w.r.t. its feature expectation.

    The nearest neighbour is frozen at its unperturbed assignment; if any probe
    would change it the call refuses rather than differentiate across a kink.
    """
    psi = np.array(psi, dtype=float)
    z_star, _ = nearest_neighbor(z, psi)
    if z_star is None:
        raise UsageError("diversity gradient needs at least two skills")
    if kind == "repulsive":
        term = repulsive_term
    elif kind == "vdw":
        if ell0 is None or ell0 <= 0:
            raise DomainError("VDW gradient needs a positive ell0")
        term = lambda ell: vdw_term(ell, ell0)  # noqa: E731
    else:
        raise UsageError(f"unknown diversity kind {kind!r}")
    grad = np.zeros(psi.shape[1])
    for i in range(psi.shape[1]):
        vals = []
        for sign in (1.0, -1.0):
            p = psi.copy()
            p[z, i] += sign * eps
            if nearest_neighbor(z, p)[0] != z_star:
                raise TieInstabilityError(f"nearest neighbour of skill {z} flips under perturbation")
            vals.append(term(float(np.linalg.norm(p[z] - p[z_star]))))
        grad[i] = (vals[0] - vals[1]) / (2 * eps)
    return grad
