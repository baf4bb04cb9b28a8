"""Training loop: warm start, rollouts, PPO, feature expectations, multipliers, evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diversity, lagrange, oracle
from .approx import Adam, MaskedApproximator, sample_masks
from .checkpoint import load_arrays, save_arrays, write_atomic
from .config import GROUP_NAMES, RunConfig, config_from_dict, dump_config
from .envs import make_env
from .envs.tabular import tabularize
from .errors import ConfigError
from .features import FeatureExpectation, feature_dim, phi, update_feature_expectation
from .ppo import build_batch, ppo_update
from .rollout import LiveVecEnv, RolloutWorker, TabularVecEnv


INTRINSIC_SCALE_DECAY = 0.9


def _clean(x):
    """JSON-ready copy: arrays to lists, NaN to None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def uses_tabular(cfg: RunConfig) -> bool:
    e = cfg.env
    return cfg.trainer.fast_tabular and e.kind == "gridworld" and e.layout != "random" and e.obs_noise == 0


def curriculum_cost(cfg: RunConfig, iteration: int) -> float:
    """Traversal cost ramps linearly from 0 to its final value over the warm start."""
    final = cfg.env.traversal_cost
    warm = cfg.trainer.warm_start_iters
    if not cfg.trainer.curriculum or warm == 0:
        return final
    return final * min(1.0, iteration / warm)


class Trainer:
    """Holds every piece of learner state; ``step`` runs one iteration of the loop."""

    def __init__(self, cfg: RunConfig, expert_values=None, mdp=None):
        self.cfg = cfg
        t = cfg.trainer
        ss = np.random.SeedSequence(cfg.seed)
        mask_ss, init_ss, rollout_ss, update_ss, env_ss = ss.spawn(5)
        self.env = make_env(cfg.env, cfg.rewards)
        self.discrete = self.env.discrete
        self.sf_dim = feature_dim(cfg.features.mode, self.env.action_dim)
        masks = sample_masks(t.n_skills, cfg.approx.hidden, cfg.approx.mask_prob,
                             int(mask_ss.generate_state(1)[0]))
        n_actions = self.env.num_actions if self.discrete else self.env.action_dim
        self.appr = MaskedApproximator(
            self.env.obs_dim, n_actions, self.discrete, len(GROUP_NAMES), self.sf_dim, masks,
            hidden=tuple(cfg.approx.hidden), separate_networks=cfg.approx.separate_networks,
            init_log_std=cfg.approx.init_log_std, seed=int(init_ss.generate_state(1)[0]),
        )
        self.opt = Adam(self.appr.params, t.lr)
        self.fe = FeatureExpectation.zeros(t.n_skills, self.sf_dim, cfg.features.beta_psi)
        values = [math.nan] * len(GROUP_NAMES) if expert_values is None else list(expert_values)
        lg = cfg.lagrange
        self.lagrange = lagrange.LagrangeState.create(lg.alpha, values, t.n_skills, lg.mu_init,
                                                      lg.avg_coeff, lg.lr_mu, lg.mu_max)
        self.update_rng = np.random.default_rng(update_ss)
        self._rollout_ss = rollout_ss
        self._env_ss = env_ss
        self._mdp = mdp
        self._worker = None
        self.iteration = 0
        self.intrinsic_scale = 0.0  # running std of per-step intrinsic rewards; 0 until first seen

    # ------------------------------------------------------------ helpers

    @property
    def expert_values(self) -> np.ndarray:
        return np.array([g.expert_value for g in self.lagrange.groups])

    @property
    def worker(self) -> RolloutWorker:
        if self._worker is None:
            t = self.cfg.trainer
            env_rng = np.random.default_rng(self._env_ss)
            if uses_tabular(self.cfg):
                if self._mdp is None:
                    self._mdp = tabularize(self.cfg.env, self.cfg.rewards, t.gamma)
                vec = TabularVecEnv(self._mdp, self.cfg.features.mode, t.num_envs, env_rng)
            else:
                vec = LiveVecEnv(self.cfg, t.num_envs, env_rng)
            self._worker = RolloutWorker(vec, t.n_skills, self.discrete, np.random.default_rng(self._rollout_ss))
        return self._worker

    def in_warm_start(self, iteration: int | None = None) -> bool:
        it = self.iteration if iteration is None else iteration
        return it < self.cfg.trainer.warm_start_iters

    def _learning_rate(self) -> float:
        t = self.cfg.trainer
        if t.lr_schedule == "linear":
            return t.lr * max(0.0, 1.0 - self.iteration / t.iterations)
        return t.lr

    # ------------------------------------------------------------ one iteration

    def step(self) -> dict:
        cfg, t = self.cfg, self.cfg.trainer
        warm = self.in_warm_start()
        if not warm and not np.all(np.isfinite(self.expert_values)):
            raise ConfigError("expert values are required once the warm start ends")
        cost = curriculum_cost(cfg, self.iteration)
        worker = self.worker
        worker.vec.set_traversal_cost(cost)

        # snapshots: parameters are untouched during collection, fe and sigma are copies
        fe_snapshot = self.fe.copy()
        sigma = None if warm else self.lagrange.sigma()
        ro = worker.collect(self.appr, fe_snapshot, cfg.diversity, t.steps_per_iter)
        raw_intrinsic = float(ro.int_rewards.mean())
        # keeps intrinsic value targets O(1) while the VDW factor swings cubically in distance
        spread = float(ro.int_rewards.std())
        if spread > 0:
            self.intrinsic_scale = spread if self.intrinsic_scale == 0 else \
                INTRINSIC_SCALE_DECAY * self.intrinsic_scale + (1 - INTRINSIC_SCALE_DECAY) * spread
        if self.intrinsic_scale > 0:
            ro.int_rewards = ro.int_rewards / self.intrinsic_scale

        self.opt.lr = self._learning_rate()
        batch = build_batch(ro, t.gamma, t.gae_lambda)
        losses = ppo_update(
            self.appr, self.opt, batch, sigma, clip=t.ppo_clip, epochs=t.epochs, minibatches=t.minibatches,
            entropy_coeff=t.entropy_coeff, value_coeff=t.value_coeff, sf_coeff=t.sf_coeff,
            max_grad_norm=t.max_grad_norm, rng=self.update_rng, target_kl=t.target_kl,
        )

        # feature expectations from the updated SF head at each finished episode's start
        returns = np.full((t.n_skills, len(GROUP_NAMES)), np.nan)
        counts = np.zeros(t.n_skills, dtype=int)
        if ro.episodes:
            skills = np.array([e[0] for e in ro.episodes])
            init_obs = np.stack([e[2] for e in ro.episodes])
            init_sf = self.appr.forward(init_obs, skills, heads=("sf",)).sf
            for z, sf0 in zip(skills, init_sf):
                self.fe = update_feature_expectation(self.fe, int(z), sf0)
            ep_returns = np.stack([e[1] for e in ro.episodes])
            for z in range(t.n_skills):
                sel = skills == z
                counts[z] = int(sel.sum())
                if counts[z]:
                    returns[z] = ep_returns[sel].mean(axis=0)

        groups = self.lagrange.groups
        for z in range(t.n_skills):
            if counts[z]:
                groups = [lagrange.update_moving_average(g, z, returns[z, j]) for j, g in enumerate(groups)]
        multipliers_updated = False
        if not warm and not np.any(np.isnan(np.stack([g.vbar for g in groups]))):
            groups = lagrange.update_multipliers(groups)
            multipliers_updated = True
        self.lagrange = lagrange.LagrangeState(groups)

        record = {
            "iteration": self.iteration,
            "warm_start": warm,
            "traversal_cost": cost,
            "lr": self.opt.lr,
            "episodes": counts,
            "episode_return": returns,
            "vbar": self.lagrange.vbar.T,
            "mu": self.lagrange.mu.T,
            "sigma": self.lagrange.sigma(),
            "multipliers_updated": multipliers_updated,
            "psi": self.fe.psi,
            "intrinsic_reward": raw_intrinsic,
            "intrinsic_scale": self.intrinsic_scale,
            "diversity_metric": diversity.diversity_metric(self.fe) if t.n_skills > 1 else None,
            "objective": diversity.objective(self.fe, cfg.diversity) if t.n_skills > 1 else None,
            "loss": losses,
            "advantage_std": np.append(batch.ext_adv.std(axis=0), batch.int_adv.std()),
            "config_hash": cfg.config_hash(),
        }
        self.iteration += 1
        return _clean(record)

    # ------------------------------------------------------------ persistence

    def save(self, path: str | Path, **extra) -> None:
        arrays = self.appr.state_dict()
        arrays.update(self.opt.state_dict())
        arrays["lagrange/mu"] = self.lagrange.mu
        arrays["lagrange/vbar"] = self.lagrange.vbar
        arrays["lagrange/expert_values"] = self.expert_values
        arrays["fe/psi"] = self.fe.psi
        arrays["scale/intrinsic"] = np.array(self.intrinsic_scale)
        meta = {"config": self.cfg.to_dict(), "config_hash": self.cfg.config_hash(), "iteration": self.iteration}
        meta.update(_clean(extra))
        save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path: str | Path) -> tuple["Trainer", dict]:
        arrays, meta = load_arrays(path)
        cfg = config_from_dict(meta["config"])
        tr = cls(cfg, arrays["lagrange/expert_values"])
        tr.appr.load_state_dict(arrays)
        tr.opt.load_state_dict(arrays)
        for j, g in enumerate(tr.lagrange.groups):
            g.mu = arrays["lagrange/mu"][j].copy()
            g.vbar = arrays["lagrange/vbar"][j].copy()
        tr.fe.psi = arrays["fe/psi"].copy()
        tr.intrinsic_scale = float(arrays["scale/intrinsic"])
        tr.iteration = int(meta["iteration"])
        return tr, meta


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    returns: np.ndarray  # (n_skills, m) mean undiscounted group returns
    psi: np.ndarray  # (n_skills, d) Monte Carlo discounted feature sums
    diversity_metric: float | None
    expert_values: np.ndarray
    alpha: np.ndarray
    trajectories: list = field(default_factory=list)  # (skill, episode, t, x, y, heading)

    @property
    def fractions(self) -> np.ndarray:
        return self.returns / self.expert_values

    @property
    def satisfied(self) -> np.ndarray:
        return self.returns >= self.alpha * self.expert_values

    def to_dict(self) -> dict:
        return _clean({
            "groups": list(GROUP_NAMES),
            "returns": self.returns,
            "fractions": self.fractions,
            "satisfied": self.satisfied,
            "psi": self.psi,
            "diversity_metric": self.diversity_metric,
            "expert_values": self.expert_values,
            "alpha": self.alpha,
        })


def evaluate(trainer: Trainer, episodes: int, env_cfg=None, seed: int | None = None) -> EvalReport:
    """Deterministic (distribution-mode) rollouts of every skill on live environments."""
    cfg = trainer.cfg
    env_cfg = env_cfg or cfg.env
    appr = trainer.appr
    gamma = cfg.trainer.gamma
    n = cfg.trainer.n_skills
    envs = [make_env(env_cfg, cfg.rewards) for _ in range(episodes)]
    if envs[0].obs_dim != appr.obs_dim or envs[0].discrete != appr.discrete:
        raise ConfigError(f"environment observation size {envs[0].obs_dim} does not match the checkpoint ({appr.obs_dim})")
    seeds = np.random.default_rng(np.random.SeedSequence([cfg.seed if seed is None else seed, 7919])).integers(
        2**31, size=episodes)
    returns = np.zeros((n, len(GROUP_NAMES)))
    psi = np.zeros((n, trainer.sf_dim))
    trajectories = []
    for z in range(n):
        states = []
        for e, env in enumerate(envs):
            s, _ = env.reset(int(seeds[e]))
            states.append(s)
        live = np.ones(episodes, dtype=bool)
        step = 0
        while live.any():
            idx = np.flatnonzero(live)
            obs = np.stack([envs[i].observe(states[i]).vector() for i in idx])
            out = appr.forward(obs, np.full(len(idx), z), heads=("policy",))
            actions = out.policy.argmax(axis=1) if appr.discrete else np.tanh(out.policy)
            for k, i in enumerate(idx):
                s = states[i]
                psi[z] += gamma**step * phi(s, cfg.features.mode) / episodes
                trajectories.append((z, int(i), step) + envs[i].trajectory_point(s))
                new, _, signals, done = envs[i].step(s, actions[k])
                returns[z] += envs[i].rewards(signals) / episodes
                states[i] = new
                if done:
                    live[i] = False
            step += 1
    metric = diversity.diversity_metric(psi) if n > 1 else None
    return EvalReport(returns, psi, metric, trainer.expert_values, np.asarray(cfg.lagrange.alpha, dtype=float),
                      trajectories)


# ---------------------------------------------------------------- drivers


def oracle_expert_values(cfg: RunConfig) -> np.ndarray:
    """Per-group undiscounted returns of the policy that is optimal for the summed reward."""
    mdp = tabularize(cfg.env, cfg.rewards, discount=1.0)
    values, _ = oracle.optimal_group_returns(mdp)
    return values


def resolve_expert_values(cfg: RunConfig) -> np.ndarray | None:
    lg = cfg.lagrange
    if lg.expert_values is not None:
        return np.asarray(lg.expert_values, dtype=float)
    if lg.expert_checkpoint is not None:
        _, meta = load_arrays(lg.expert_checkpoint)
        if "measured_values" not in meta:
            raise ConfigError(f"{lg.expert_checkpoint} is not an expert checkpoint")
        return np.asarray(meta["measured_values"], dtype=float)
    if lg.expert_from_oracle:
        return oracle_expert_values(cfg)
    return None


def expert_config(cfg: RunConfig) -> RunConfig:
    """Single skill, multipliers saturated at 1 for the whole run, no cost curriculum."""
    e = cfg.copy()
    t = e.trainer
    t.n_skills = 1
    t.iterations = t.expert_iterations
    t.warm_start_iters = t.expert_iterations
    t.num_envs = t.expert_num_envs
    t.curriculum = False
    return e


class MetricsWriter:
    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w")

    def write(self, record: dict) -> None:
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def train(cfg: RunConfig, out_dir: str | Path | None = None, expert_values=None, log=None) -> Trainer:
    """Full loop; writes metrics.jsonl, checkpoints/ and config.yaml under ``out_dir`` when given."""
    if expert_values is None:
        expert_values = resolve_expert_values(cfg)
    if expert_values is None and cfg.trainer.iterations > cfg.trainer.warm_start_iters:
        raise ConfigError("no expert values: set lagrange.expert_values, expert_checkpoint or expert_from_oracle")
    trainer = Trainer(cfg, expert_values)
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_atomic(out_dir / "config.yaml", dump_config(cfg).encode())
        writer = MetricsWriter(out_dir / "metrics.jsonl")
    try:
        every = cfg.trainer.checkpoint_every
        while trainer.iteration < cfg.trainer.iterations:
            record = trainer.step()
            if writer:
                writer.write(record)
                if every > 0 and trainer.iteration % every == 0:
                    trainer.save(out_dir / "checkpoints" / f"iter_{trainer.iteration:05d}.npz")
            if log:
                log(record)
        if out_dir is not None:
            trainer.save(out_dir / "checkpoints" / "final.npz")
    finally:
        if writer:
            writer.close()
    return trainer


def pretrain_expert(cfg: RunConfig, out_dir: str | Path | None = None, log=None) -> tuple[Trainer, np.ndarray]:
    """Train the single-skill expert and measure its per-group values v*."""
    ecfg = expert_config(cfg)
    expert = train(ecfg, out_dir, expert_values=np.full(len(GROUP_NAMES), np.nan), log=log)
    report = evaluate(expert, ecfg.trainer.expert_eval_episodes)
    values = report.returns[0].copy()
    for g, v in zip(expert.lagrange.groups, values):
        g.expert_value = float(v)
    if out_dir is not None:
        expert.save(Path(out_dir) / "expert.npz", measured_values=values)
    return expert, values
