"""GAE and the clipped-surrogate update with hand-derived head gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .approx import Adam, MaskedApproximator, clip_grad_norm
from .distributions import categorical_entropy, gaussian_logp, log_softmax
from .errors import TrainingAbort, UsageError
from .features import sf_td_targets
from .lagrange import aggregate_advantage
from .rollout import Rollout

STD_FLOOR = 1e-6


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value=None):
    """Generalised advantage estimates along axis 0; extra trailing axes are independent streams.

    ``last_value`` bootstraps the final step when it is not terminal (default 0).
    Returns (advantages, value targets).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != values.shape:
        raise UsageError(f"rewards {rewards.shape} and values {values.shape} are misaligned")
    if dones.shape != rewards.shape[: dones.ndim] or dones.ndim == 0:
        raise UsageError(f"done flags {dones.shape} do not align with rewards {rewards.shape}")
    extra = rewards.ndim - dones.ndim
    not_done = (~dones).astype(float).reshape(dones.shape + (1,) * extra)
    if last_value is None:
        last_value = np.zeros(rewards.shape[1:])
    last_value = np.asarray(last_value, dtype=float)
    if last_value.shape != rewards.shape[1:]:
        raise UsageError(f"bootstrap value {last_value.shape} does not match {rewards.shape[1:]}")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in reversed(range(T)):
        next_v = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_v * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        adv[t] = running
    return adv, adv + values


def normalize(x: np.ndarray, axis=0) -> np.ndarray:
    return (x - x.mean(axis=axis, keepdims=True)) / np.maximum(x.std(axis=axis, keepdims=True), STD_FLOOR)


@dataclass
class Batch:
    """Flattened training data for one update phase."""

    obs: np.ndarray
    skills: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    ext_adv: np.ndarray  # (N, m)
    int_adv: np.ndarray  # (N,)
    ext_targets: np.ndarray  # (N, m)
    int_targets: np.ndarray  # (N,)
    sf_targets: np.ndarray  # (N, d)

    def __len__(self) -> int:
        return len(self.skills)

    def take(self, idx) -> "Batch":
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def build_batch(ro: Rollout, gamma: float, lam: float) -> Batch:
    ext_adv, ext_targets = compute_gae(ro.ext_rewards, ro.ext_values, ro.dones, gamma, lam, ro.last_ext_values)
    int_adv, int_targets = compute_gae(ro.int_rewards, ro.int_values, ro.dones, gamma, lam, ro.last_int_values)
    sf_next = np.concatenate([ro.sf[1:], ro.last_sf[None]], axis=0)
    next_skills = np.concatenate([ro.skills[1:], ro.last_skills[None]], axis=0)
    sf_targets = sf_td_targets(ro.phi, sf_next, ro.dones, gamma, ro.skills, next_skills)

    def flat(x):
        return x.reshape((-1,) + x.shape[2:])

    return Batch(flat(ro.obs), flat(ro.skills), flat(ro.actions), flat(ro.log_probs), flat(ext_adv),
                 flat(int_adv), flat(ext_targets), flat(int_targets), flat(sf_targets))


@dataclass
class LossTerms:
    policy: float
    value: float
    sf: float
    entropy: float
    approx_kl: float
    clip_fraction: float

    @property
    def total(self) -> float:
        return self.policy + self.value + self.sf - self.entropy


def mixed_advantage(mb: Batch, sigma: np.ndarray | None) -> np.ndarray:
    """Per-stream normalisation followed by the multiplier-weighted mix.

    ``sigma`` is (n_skills, m); ``None`` means warm start (every weight 1,
    intrinsic weight 0).
    """
    a_e = normalize(mb.ext_adv)
    a_i = normalize(mb.int_adv)
    if sigma is None:
        sig = np.ones_like(a_e)
    else:
        sig = np.asarray(sigma)[mb.skills]
    return aggregate_advantage(a_i, a_e, sig)


def loss_and_grads(appr: MaskedApproximator, mb: Batch, sigma, clip: float, entropy_coeff: float,
                   value_coeff: float, sf_coeff: float) -> tuple[LossTerms, dict[str, np.ndarray]]:
    B = len(mb)
    adv = mixed_advantage(mb, sigma)
    out = appr.forward(mb.obs, mb.skills)
    if appr.discrete:
        logp_all = log_softmax(out.policy)
        logp = logp_all[np.arange(B), mb.actions]
    else:
        logp = gaussian_logp(out.policy, out.log_std, mb.actions)
    log_ratio = logp - mb.log_probs
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1 - clip, 1 + clip)
    surrogate = np.minimum(ratio * adv, clipped * adv)
    policy_loss = -float(surrogate.mean())
    # the min picks the clipped branch (zero gradient) only when the ratio moved past the bound
    active = ~(((adv > 0) & (ratio > 1 + clip)) | ((adv < 0) & (ratio < 1 - clip)))
    dlogp = -(adv * ratio * active) / B

    grads: dict[str, np.ndarray] = {}
    if appr.discrete:
        p = np.exp(logp_all)
        onehot = np.zeros_like(p)
        onehot[np.arange(B), mb.actions] = 1.0
        g_logits = dlogp[:, None] * (onehot - p)
        ent = categorical_entropy(out.policy)
        # dH/dlogit_k = -p_k (log p_k + H)
        g_logits += entropy_coeff * (p * (logp_all + ent[:, None])) / B
        grads["policy"] = g_logits
        entropy = float(ent.mean())
    else:
        std = np.exp(out.log_std)
        z = (mb.actions - out.policy) / std
        grads["policy"] = dlogp[:, None] * z / std
        grads["log_std"] = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - entropy_coeff * np.ones_like(out.log_std)
        entropy = float(np.sum(out.log_std + 0.5 + 0.5 * math.log(2 * math.pi)))

    ext_err = out.ext_values - mb.ext_targets
    int_err = out.int_value - mb.int_targets
    value_loss = value_coeff * 0.5 * float((ext_err**2).sum(axis=1).mean() + (int_err**2).mean())
    grads["ext_values"] = value_coeff * ext_err / B
    grads["int_value"] = value_coeff * int_err / B
    sf_err = out.sf - mb.sf_targets
    sf_loss = sf_coeff * 0.5 * float((sf_err**2).sum(axis=1).mean())
    grads["sf"] = sf_coeff * sf_err / B

    terms = LossTerms(
        policy=policy_loss,
        value=value_loss,
        sf=sf_loss,
        entropy=entropy_coeff * entropy,
        approx_kl=float(((ratio - 1) - log_ratio).mean()),
        clip_fraction=float((np.abs(ratio - 1) > clip).mean()),
    )
    return terms, appr.backward(out, grads)


def ppo_update(appr: MaskedApproximator, opt: Adam, batch: Batch, sigma, *, clip: float, epochs: int,
               minibatches: int, entropy_coeff: float, value_coeff: float, sf_coeff: float,
               max_grad_norm: float, rng: np.random.Generator, target_kl: float | None = None) -> dict[str, float]:
    """Several epochs of shuffled minibatch steps; ``sigma=None`` selects warm-start mixing.

    With ``target_kl`` set, the remaining epochs are skipped once an epoch's mean
    approximate KL to the rollout policy exceeds it.
    """
    N = len(batch)
    size = max(1, N // minibatches)
    sums: dict[str, float] = {}
    count = 0
    for _ in range(epochs):
        order = rng.permutation(N)
        epoch_kl, steps = 0.0, 0
        for start in range(0, N - size + 1, size):
            mb = batch.take(order[start:start + size])
            terms, grads = loss_and_grads(appr, mb, sigma, clip, entropy_coeff, value_coeff, sf_coeff)
            if not math.isfinite(terms.total):
                raise TrainingAbort(f"non-finite loss (policy={terms.policy}, value={terms.value}, sf={terms.sf})")
            norm = max(clip_grad_norm(grads, max_grad_norm, keys) for keys in appr.parameter_groups().values())
            if not math.isfinite(norm):
                raise TrainingAbort("non-finite gradient norm")
            opt.step(appr.params, grads)
            appr.bump()
            for k, v in vars(terms).items():
                sums[k] = sums.get(k, 0.0) + v
            sums["grad_norm"] = sums.get("grad_norm", 0.0) + norm
            count += 1
            epoch_kl += terms.approx_kl
            steps += 1
        if target_kl is not None and epoch_kl / steps > target_kl:
            break
    return {k: v / count for k, v in sums.items()}
