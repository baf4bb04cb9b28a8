"""Explicit tabular MDPs and exact enumeration of the gridworld."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..config import EnvConfig, RewardConfig
from ..errors import ConfigError, UsageError
from ..features import phi_from_parts
from .common import TIME_COLUMN, EnvState, Layout, to_body
from .gridworld import (
    KIND_BLOCKED,
    KIND_MOVED,
    KIND_STAY,
    MOVES,
    GridWorld,
    heading_angle,
    heading_index,
)


@dataclass
class TabularMdp:
    """Finite MDP with one sparse (S, S) transition matrix per action.

    ``absorbing`` marks zero-reward self-loop states; they make finite-horizon
    problems well posed at discount 1.
    """

    transitions: list[sp.csr_matrix]
    group_rewards: np.ndarray  # (m, S, A)
    initial_distribution: np.ndarray  # (S,)
    discount: float
    absorbing: np.ndarray | None = None
    next_state: np.ndarray | None = None  # (S, A) for deterministic MDPs
    observations: np.ndarray | None = None
    traversal_mask: np.ndarray | None = None  # (S, A) steps ending on a traversable box
    codec: "GridCodec | None" = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.transitions = [sp.csr_matrix(p, dtype=float) for p in self.transitions]
        self.group_rewards = np.asarray(self.group_rewards, dtype=float)
        if self.group_rewards.ndim == 2:
            self.group_rewards = self.group_rewards[None]
        self.initial_distribution = np.asarray(self.initial_distribution, dtype=float)
        if self.absorbing is None:
            self.absorbing = np.zeros(self.num_states, dtype=bool)

    @classmethod
    def from_dense(cls, P, rewards, rho, discount: float, **kw) -> "TabularMdp":
        """``P`` indexed [s, a, s'] as in the usual textbook layout."""
        P = np.asarray(P, dtype=float)
        return cls([P[:, a, :] for a in range(P.shape[1])], rewards, rho, discount, **kw)

    @property
    def num_states(self) -> int:
        return self.transitions[0].shape[0]

    @property
    def num_actions(self) -> int:
        return len(self.transitions)

    @property
    def num_groups(self) -> int:
        return self.group_rewards.shape[0]

    def dense_transitions(self) -> np.ndarray:
        return np.stack([p.toarray() for p in self.transitions], axis=1)

    def policy_matrix(self, pi: np.ndarray) -> sp.csr_matrix:
        pi = np.asarray(pi, dtype=float)
        out = sp.csr_matrix((self.num_states, self.num_states))
        for a, p in enumerate(self.transitions):
            out = out + sp.diags(pi[:, a]) @ p
        return sp.csr_matrix(out)

    def check(self, tol: float = 1e-12) -> None:
        for a, p in enumerate(self.transitions):
            if p.nnz and p.data.min() < 0:
                raise UsageError(f"negative transition probability under action {a}")
            s = np.asarray(p.sum(axis=1)).ravel()
            if np.max(np.abs(s - 1.0)) > tol:
                raise UsageError(f"transition rows under action {a} do not sum to 1")
        if abs(self.initial_distribution.sum() - 1.0) > tol or self.initial_distribution.min() < 0:
            raise UsageError("initial distribution is not a probability vector")

    def feature_table(self, mode: str) -> np.ndarray:
        if self.codec is None:
            raise UsageError("feature tables need a gridworld codec")
        key = f"phi:{mode}"
        if key not in self.extras:
            self.extras[key] = self.codec.feature_table(mode)
        return self.extras[key]


class GridCodec:
    """Bijection between tabular indices and gridworld states for one layout.

    Index layout: ``(((t * n + x) * n + y) * 4 + heading) * 3 + kind``; the
    last index is the absorbing post-horizon state.
    """

    def __init__(self, env: GridWorld, layout: Layout):
        self.env = env
        self.layout = layout
        self.n = env.n
        self.horizon = env.horizon
        self.num_states = self.horizon * self.n * self.n * 12 + 1
        self.absorbing_index = self.num_states - 1

    def encode_parts(self, t, x, y, h, kind):
        return (((t * self.n + x) * self.n + y) * 4 + h) * 3 + kind

    def encode(self, state: EnvState) -> int:
        if state.done or state.time_step >= self.horizon:
            return self.absorbing_index
        x, y = int(state.position[0]), int(state.position[1])
        h = heading_index(state.heading)
        if not np.any(state.previous_action):
            kind = KIND_STAY
        else:
            kind = KIND_BLOCKED if state.blocked else KIND_MOVED
        return self.encode_parts(state.time_step, x, y, h, kind)

    def decode(self, idx: int) -> EnvState:
        if idx == self.absorbing_index:
            raise UsageError("the absorbing state has no environment counterpart")
        kind = idx % 3
        rest = idx // 3
        h = rest % 4
        rest //= 4
        y = rest % self.n
        rest //= self.n
        x = rest % self.n
        t = rest // self.n
        heading = heading_angle(h)
        prev = np.zeros(2) if kind == KIND_STAY else MOVES[1 + h].copy()
        vel = MOVES[1 + h].copy() if kind == KIND_MOVED else np.zeros(2)
        return EnvState(
            position=np.array([float(x), float(y)]),
            velocity=vel,
            heading=heading,
            target_position=np.array(self.layout.target, dtype=float),
            target_heading=self.layout.target_heading,
            obstacles=self.layout.obstacles,
            time_step=int(t),
            horizon=self.horizon,
            previous_action=prev,
            last_action=0 if kind == KIND_STAY else 1 + h,
            blocked=kind == KIND_BLOCKED,
        )

    def feature_table(self, mode: str) -> np.ndarray:
        rows = []
        for idx in range(self.num_states - 1):
            s = self.decode(idx)
            rows.append(phi_from_parts(to_body(s.velocity, s.heading), s.previous_action, mode))
        rows.append(np.zeros_like(rows[0]))
        return np.array(rows)


def tabularize(cfg: EnvConfig, reward_cfg: RewardConfig | None = None, discount: float = 0.99) -> TabularMdp:
    """Enumerate a fixed-layout gridworld into an exact tabular MDP."""
    if cfg.kind != "gridworld":
        raise ConfigError("tabularize supports gridworld configs only")
    if cfg.layout == "random":
        raise ConfigError("tabularize needs a fixed or scenario layout")
    if cfg.obs_noise > 0:
        raise ConfigError("tabularize needs noise-free observations")
    env = GridWorld(cfg, reward_cfg)
    layout = env.fixed_layout
    codec = GridCodec(env, layout)
    n, T, A = env.n, env.horizon, env.num_actions
    S = codec.num_states
    m = 3
    next_state = np.full((S, A), codec.absorbing_index, dtype=np.int64)
    rewards = np.zeros((m, S, A))
    trav = np.zeros((S, A), dtype=bool)
    obs_dim = env.obs_dim
    observations = np.zeros((S, obs_dim))
    window_start = T - env.task_window
    for x in range(n):
        for y in range(n):
            for h in range(4):
                for kind in range(3):
                    base = codec.decode(codec.encode_parts(0, x, y, h, kind))
                    obs0 = env.observe(base).vector()
                    for t in range(T):
                        idx = codec.encode_parts(t, x, y, h, kind)
                        o = obs0.copy()
                        o[TIME_COLUMN] = t / T
                        observations[idx] = o
                    for a in range(A):
                        nxt, sig = env.transition(base, a)
                        r_out = env.rewards(sig)
                        r_in = env.rewards(dataclasses.replace(sig, in_task_window=True))
                        nxt_base = codec.encode(dataclasses.replace(nxt, time_step=0, done=False))
                        for t in range(T):
                            idx = codec.encode_parts(t, x, y, h, kind)
                            rewards[:, idx, a] = r_in if t >= window_start else r_out
                            trav[idx, a] = sig.on_obstacle
                            if t + 1 < T:
                                next_state[idx, a] = nxt_base + codec.encode_parts(t + 1, 0, 0, 0, 0)
    rows = np.arange(S)
    transitions = [sp.csr_matrix((np.ones(S), (rows, next_state[:, a])), shape=(S, S)) for a in range(A)]
    rho = np.zeros(S)
    start, _ = env.reset(0, layout)
    rho[codec.encode(start)] = 1.0
    absorbing = np.zeros(S, dtype=bool)
    absorbing[codec.absorbing_index] = True
    return TabularMdp(
        transitions,
        rewards,
        rho,
        discount,
        absorbing=absorbing,
        next_state=next_state,
        observations=observations,
        traversal_mask=trav,
        codec=codec,
        extras={"traversal_cost": cfg.traversal_cost},
    )
