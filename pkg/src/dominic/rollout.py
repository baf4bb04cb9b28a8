"""Lock-step environment batches and on-policy rollout collection."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import diversity
from .approx import MaskedApproximator
from .config import DiversityConfig, RunConfig
from .distributions import categorical_sample, gaussian_sample
from .envs import make_env
from .envs.tabular import TabularMdp
from .features import FeatureExpectation, phi

# ------------------------------------------------------------------ batches


class LiveVecEnv:
    """k independent environment instances stepped in lock-step, merged by index."""

    def __init__(self, cfg: RunConfig, k: int, rng: np.random.Generator):
        self.envs = [make_env(cfg.env, cfg.rewards) for _ in range(k)]
        self.k = k
        self.mode = cfg.features.mode
        self.rng = rng
        self.params = self.envs[0].reward_params
        self.states = [None] * k
        self._obs = np.zeros((k, self.envs[0].obs_dim))
        for i in range(k):
            self._reset(i)

    @property
    def env(self):
        return self.envs[0]

    def set_traversal_cost(self, cost: float) -> None:
        self.params = dataclasses.replace(self.params, traversal_cost=cost)

    def _reset(self, i: int) -> None:
        seed = int(self.rng.integers(2**31))
        state, obs = self.envs[i].reset(seed)
        self.states[i] = state
        self._obs[i] = obs.vector()

    def observations(self) -> np.ndarray:
        return self._obs.copy()

    def features(self) -> np.ndarray:
        return np.array([phi(s, self.mode) for s in self.states])

    def step(self, actions) -> tuple[np.ndarray, np.ndarray]:
        """Advance every instance; finished episodes restart automatically."""
        rewards = np.zeros((self.k, 3))
        dones = np.zeros(self.k, dtype=bool)
        for i, env in enumerate(self.envs):
            new, obs, signals, done = env.step(self.states[i], actions[i])
            rewards[i] = env.rewards(signals, self.params)
            dones[i] = done
            if done:
                self._reset(i)
            else:
                self.states[i] = new
                self._obs[i] = obs.vector()
        return rewards, dones


class TabularVecEnv:
    """Fast path for fixed-layout gridworlds: steps by table lookup.

    Equivalent to ``LiveVecEnv`` by construction of ``tabularize``.
    """

    def __init__(self, mdp: TabularMdp, mode: str, k: int, rng: np.random.Generator):
        self.mdp = mdp
        self.k = k
        self.rng = rng
        self.phi_table = mdp.feature_table(mode)
        self.final_cost = mdp.extras.get("traversal_cost", 0.0)
        self.rewards_table = np.moveaxis(mdp.group_rewards, 0, -1).copy()  # (S, A, m)
        self._base = self.rewards_table.copy()
        self.states = np.array([self._sample_start() for _ in range(k)], dtype=np.int64)

    def _sample_start(self) -> int:
        rho = self.mdp.initial_distribution
        return int(np.searchsorted(np.cumsum(rho), self.rng.random(), side="right").clip(0, len(rho) - 1))

    def set_traversal_cost(self, cost: float) -> None:
        table = self._base.copy()
        mask = self.mdp.traversal_mask
        table[mask, 1] *= math.exp(self.final_cost - cost)
        self.rewards_table = table

    def observations(self) -> np.ndarray:
        return self.mdp.observations[self.states]

    def features(self) -> np.ndarray:
        return self.phi_table[self.states]

    def step(self, actions) -> tuple[np.ndarray, np.ndarray]:
        actions = np.asarray(actions, dtype=np.int64)
        rewards = self.rewards_table[self.states, actions]
        nxt = self.mdp.next_state[self.states, actions]
        dones = self.mdp.absorbing[nxt]
        for i in np.flatnonzero(dones):
            nxt[i] = self._sample_start()
        self.states = nxt
        return rewards, dones


# ------------------------------------------------------------------ rollouts


@dataclass
class Rollout:
    obs: np.ndarray  # (T, E, obs_dim)
    skills: np.ndarray  # (T, E)
    actions: np.ndarray  # (T, E) ints or (T, E, A) pre-squash samples
    log_probs: np.ndarray  # (T, E)
    phi: np.ndarray  # (T, E, d)
    ext_rewards: np.ndarray  # (T, E, m)
    int_rewards: np.ndarray  # (T, E)
    ext_values: np.ndarray  # (T, E, m)
    int_values: np.ndarray  # (T, E)
    sf: np.ndarray  # (T, E, d)
    dones: np.ndarray  # (T, E)
    last_obs: np.ndarray
    last_skills: np.ndarray
    last_ext_values: np.ndarray
    last_int_values: np.ndarray
    last_sf: np.ndarray
    episodes: list  # (skill, undiscounted group returns, initial observation) in completion order

    @property
    def size(self) -> int:
        return self.dones.size


class RolloutWorker:
    """Owns a vectorised environment plus per-instance skill and episode bookkeeping."""

    def __init__(self, vec, n_skills: int, discrete: bool, rng: np.random.Generator):
        self.vec = vec
        self.n_skills = n_skills
        self.discrete = discrete
        self.rng = rng
        k = vec.k
        self.skills = self.rng.integers(n_skills, size=k)
        self.returns = np.zeros((k, 3))
        self.init_obs = vec.observations()

    def collect(self, appr: MaskedApproximator, fe: FeatureExpectation, div_cfg: DiversityConfig,
                steps: int) -> Rollout:
        """Run ``steps`` lock-step transitions with frozen parameters and a frozen ``fe`` snapshot."""
        vec = self.vec
        k = vec.k
        directions = diversity.reward_directions(fe, div_cfg)
        buf = {name: [] for name in ("obs", "skills", "actions", "log_probs", "phi", "ext_rewards",
                                     "int_rewards", "ext_values", "int_values", "sf", "dones")}
        episodes = []
        for _ in range(steps):
            obs = vec.observations()
            feats = vec.features()
            skills = self.skills.copy()
            out = appr.forward(obs, skills)
            if self.discrete:
                actions, logp = categorical_sample(out.policy, self.rng)
                env_actions = actions
            else:
                actions, env_actions, logp = gaussian_sample(out.policy, out.log_std, self.rng)
            r_int = np.einsum("ed,ed->e", feats, directions[skills])
            r_ext, dones = vec.step(env_actions)
            self.returns += r_ext
            for i in np.flatnonzero(dones):
                episodes.append((int(skills[i]), self.returns[i].copy(), self.init_obs[i].copy()))
                self.returns[i] = 0.0
                self.skills[i] = self.rng.integers(self.n_skills)
            if dones.any():
                fresh = vec.observations()
                self.init_obs[dones] = fresh[dones]
            for name, val in (("obs", obs), ("skills", skills), ("actions", actions), ("log_probs", logp),
                              ("phi", feats), ("ext_rewards", r_ext), ("int_rewards", r_int),
                              ("ext_values", out.ext_values), ("int_values", out.int_value), ("sf", out.sf),
                              ("dones", dones)):
                buf[name].append(val)
        last_obs = vec.observations()
        last = appr.forward(last_obs, self.skills, heads=("ext_values", "int_value", "sf"))
        arrays = {name: np.stack(vals) for name, vals in buf.items()}
        return Rollout(
            **arrays,
            last_obs=last_obs,
            last_skills=self.skills.copy(),
            last_ext_values=last.ext_values,
            last_int_values=last.int_value,
            last_sf=last.sf,
            episodes=episodes,
        )
