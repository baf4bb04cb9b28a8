"""Skill-conditioned MLPs with fixed binary layer masks and a hand-written backward pass.

One network evaluates every function the trainer needs: the policy head
(categorical logits or Gaussian means with state-independent log-scales),
m extrinsic value heads, the intrinsic value head and the successor-feature
head. Hidden units of every trunk are multiplied by the skill's mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

HEADS = ("policy", "ext_values", "int_value", "sf")
HEAD_TRUNK_SEPARATE = {"policy": "policy", "ext_values": "value", "int_value": "value", "sf": "sf"}


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class MaskSet:
    masks: list[np.ndarray]  # per hidden layer, (n_skills, width) of 0/1
    p: float

    @property
    def n_skills(self) -> int:
        return self.masks[0].shape[0]


def sample_masks(n: int, layer_sizes, p: float, seed: int) -> MaskSet:
    """Independent Bernoulli(p) unit masks; an all-zero layer row is redrawn."""
    if not 0 < p <= 1:
        raise UsageError("mask probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    masks = []
    for width in layer_sizes:
        m = (rng.random((n, width)) < p).astype(float)
        for z in range(n):
            while not m[z].any():
                m[z] = (rng.random(width) < p).astype(float)
        masks.append(m)
    return MaskSet(masks, p)


@dataclass
class ForwardResult:
    policy: np.ndarray  # logits (B, K) or Gaussian means (B, A)
    log_std: np.ndarray | None
    ext_values: np.ndarray  # (B, m)
    int_value: np.ndarray  # (B,)
    sf: np.ndarray  # (B, d)
    cache: dict
    version: int


class MaskedApproximator:
    def __init__(self, obs_dim: int, n_actions: int, discrete: bool, n_values: int, sf_dim: int,
                 masks: MaskSet, hidden=(128, 128), separate_networks: bool = False,
                 init_log_std: float = -0.5, seed: int = 0):
        if len(masks.masks) != len(hidden) or any(m.shape[1] != h for m, h in zip(masks.masks, hidden)):
            raise UsageError("mask widths must match the hidden layer sizes")
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.discrete = discrete
        self.n_values = n_values
        self.sf_dim = sf_dim
        self.masks = masks
        self.hidden = tuple(hidden)
        self.separate_networks = separate_networks
        self.trunks = ("policy", "value", "sf") if separate_networks else ("shared",)
        self.version = 0
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        for trunk in self.trunks:
            fan_in = obs_dim
            for i, width in enumerate(self.hidden):
                self.params[f"{trunk}/W{i}"] = rng.standard_normal((fan_in, width)) * math.sqrt(1.0 / fan_in)
                self.params[f"{trunk}/b{i}"] = np.zeros(width)
                fan_in = width
        out_dims = {"policy": n_actions, "ext_values": n_values, "int_value": 1, "sf": sf_dim}
        gains = {"policy": 0.01, "ext_values": 1.0, "int_value": 1.0, "sf": 1.0}
        last = self.hidden[-1]
        for head in HEADS:
            self.params[f"head/{head}/W"] = rng.standard_normal((last, out_dims[head])) * gains[head] / math.sqrt(last)
            self.params[f"head/{head}/b"] = np.zeros(out_dims[head])
        if not discrete:
            self.params["policy/log_std"] = np.full(n_actions, float(init_log_std))

    @property
    def n_skills(self) -> int:
        return self.masks.n_skills

    def trunk_of(self, head: str) -> str:
        return HEAD_TRUNK_SEPARATE[head] if self.separate_networks else "shared"

    def parameter_groups(self) -> dict[str, list[str]]:
        """Parameter names per network; gradients are clipped group by group."""
        groups: dict[str, list[str]] = {t: [] for t in self.trunks}
        for name in self.params:
            if name.startswith("head/"):
                groups[self.trunk_of(name.split("/")[1])].append(name)
            elif name == "policy/log_std":
                groups[self.trunk_of("policy")].append(name)
            else:
                groups[name.split("/")[0]].append(name)
        return groups

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def bump(self) -> None:
        """Mark parameters as changed; outstanding forward caches become stale."""
        self.version += 1

    def _skill_masks(self, skills, batch: int) -> list[np.ndarray]:
        skills = np.asarray(skills)
        if skills.ndim == 0:
            skills = np.full(batch, int(skills))
        if skills.shape != (batch,):
            raise UsageError("one skill id per observation is required")
        if skills.min() < 0 or skills.max() >= self.n_skills:
            raise UsageError("skill id out of range")
        return [m[skills] for m in self.masks.masks]

    def forward(self, obs, skills, heads=HEADS) -> ForwardResult:
        obs = np.asarray(obs, dtype=float)
        if obs.ndim == 1:
            obs = obs[None]
        if obs.shape[1] != self.obs_dim:
            raise UsageError(f"observation dimension {obs.shape[1]} != {self.obs_dim}")
        B = obs.shape[0]
        masks = self._skill_masks(skills, B)
        cache: dict = {"obs": obs, "masks": masks}
        feats = {}
        needed = {self.trunk_of(h) for h in heads}
        for trunk in self.trunks:
            if trunk not in needed:
                continue
            x = obs
            pre, post = [], []
            for i in range(len(self.hidden)):
                zi = x @ self.params[f"{trunk}/W{i}"] + self.params[f"{trunk}/b{i}"]
                x = elu(zi) * masks[i]
                pre.append(zi)
                post.append(x)
            cache[trunk] = (pre, post)
            feats[trunk] = x
        outs = {}
        for head in heads:
            h = feats[self.trunk_of(head)]
            outs[head] = h @ self.params[f"head/{head}/W"] + self.params[f"head/{head}/b"]
        return ForwardResult(
            policy=outs.get("policy"),
            log_std=None if self.discrete else self.params["policy/log_std"].copy(),
            ext_values=outs.get("ext_values"),
            int_value=outs["int_value"][:, 0] if "int_value" in outs else None,
            sf=outs.get("sf"),
            cache=cache | {"heads": tuple(heads)},
            version=self.version,
        )

    def backward(self, result: ForwardResult, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Parameter gradients of ``sum_h <grads[h], output_h>``.

        ``grads`` maps head names to arrays shaped like the head outputs
        (``int_value`` may be (B,)); ``log_std`` maps straight to its parameter.
        """
        if result.version != self.version:
            raise UsageError("forward cache is stale: parameters changed since the forward pass")
        cache = result.cache
        out = {k: np.zeros_like(v) for k, v in self.params.items()}
        trunk_grad: dict[str, np.ndarray] = {}
        for head, g in grads.items():
            if head == "log_std":
                if self.discrete:
                    raise UsageError("categorical policies have no log_std")
                out["policy/log_std"] += g
                continue
            if head not in cache["heads"]:
                raise UsageError(f"head {head!r} was not evaluated in the forward pass")
            g = np.asarray(g, dtype=float)
            if g.ndim == 1:
                g = g[:, None]
            trunk = self.trunk_of(head)
            pre, post = cache[trunk]
            h = post[-1]
            out[f"head/{head}/W"] += h.T @ g
            out[f"head/{head}/b"] += g.sum(axis=0)
            dh = g @ self.params[f"head/{head}/W"].T
            trunk_grad[trunk] = trunk_grad.get(trunk, 0.0) + dh
        masks = cache["masks"]
        for trunk, dh in trunk_grad.items():
            pre, post = cache[trunk]
            for i in reversed(range(len(self.hidden))):
                dz = dh * masks[i] * elu_grad(pre[i])
                x_in = cache["obs"] if i == 0 else post[i - 1]
                out[f"{trunk}/W{i}"] += x_in.T @ dz
                out[f"{trunk}/b{i}"] += dz.sum(axis=0)
                if i > 0:
                    dh = dz @ self.params[f"{trunk}/W{i}"].T
        return out

    # ---------------------------------------------------------------- state

    def state_dict(self) -> dict[str, np.ndarray]:
        d = {f"param/{k}": v.copy() for k, v in self.params.items()}
        for i, m in enumerate(self.masks.masks):
            d[f"mask/{i}"] = m.copy()
        return d

    def load_state_dict(self, d: dict[str, np.ndarray]) -> None:
        for k in self.params:
            arr = np.asarray(d[f"param/{k}"], dtype=float)
            if arr.shape != self.params[k].shape:
                raise UsageError(f"parameter {k} has shape {arr.shape}, expected {self.params[k].shape}")
            self.params[k] = arr.copy()
        self.masks = MaskSet([np.asarray(d[f"mask/{i}"], dtype=float) for i in range(len(self.hidden))], self.masks.p)
        self.bump()


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self) -> dict[str, np.ndarray]:
        d = {f"adam/m/{k}": v for k, v in self.m.items()}
        d.update({f"adam/v/{k}": v for k, v in self.v.items()})
        d["adam/t"] = np.array(self.t)
        return d

    def load_state_dict(self, d: dict[str, np.ndarray]) -> None:
        for k in self.m:
            self.m[k] = np.asarray(d[f"adam/m/{k}"], dtype=float).copy()
            self.v[k] = np.asarray(d[f"adam/v/{k}"], dtype=float).copy()
        self.t = int(d["adam/t"])


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float, keys=None) -> float:
    """Rescale ``grads[keys]`` in place to at most ``max_norm``; returns the pre-clip norm."""
    keys = list(grads) if keys is None else keys
    total = math.sqrt(sum(float(np.sum(grads[k] * grads[k])) for k in keys))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in keys:
            grads[k] *= scale
    return total
