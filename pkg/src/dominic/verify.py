"""Oracle-backed invariant checks, run by ``dominic verify``.

Each check returns ``(ok, detail)``. Checks call library functions through
their modules so that a monkeypatched implementation is what gets verified.
"""

from __future__ import annotations

import dataclasses
import math
import tempfile
from pathlib import Path

import numpy as np

from . import approx, diversity, features, lagrange, oracle, rewards
from .checkpoint import load_arrays, save_arrays
from .config import RunConfig, config_from_dict
from .envs import make_env
from .envs.tabular import TabularMdp, tabularize
from .features import FeatureExpectation, phi_from_parts
from .ppo import compute_gae
from .rewards import RawSignals, RewardParams

# ---------------------------------------------------------------- fixtures


def small_grid_config(size: int = 3, horizon: int = 4, boxes: int = 0) -> RunConfig:
    cfg = RunConfig()
    cfg.env.size = float(size)
    cfg.env.horizon = horizon
    cfg.env.num_boxes = boxes
    cfg.env.layout = "fixed"
    return cfg


def random_mdp(rng: np.random.Generator, S: int = 6, A: int = 3, m: int = 2, gamma: float = 0.9) -> TabularMdp:
    P = rng.random((S, A, S)) ** 3
    P /= P.sum(axis=2, keepdims=True)
    rho = rng.random(S)
    return TabularMdp.from_dense(P, rng.standard_normal((m, S, A)), rho / rho.sum(), gamma)


def random_policy(rng: np.random.Generator, S: int, A: int) -> np.ndarray:
    pi = rng.random((S, A)) + 0.05
    return pi / pi.sum(axis=1, keepdims=True)


def random_signals(rng: np.random.Generator) -> RawSignals:
    action = rng.uniform(-2, 2, size=2)
    return RawSignals(
        target_in_body=rng.uniform(-5, 5, size=2) * rng.choice([0.0, 0.05, 1.0]),
        heading_error=float(rng.uniform(-math.pi, math.pi)),
        speed=float(rng.uniform(0, 2)),
        action=action,
        previous_action=rng.uniform(-2, 2, size=2),
        contact_flag=bool(rng.random() < 0.3),
        action_clipped=bool(rng.random() < 0.1),
        in_task_window=bool(rng.random() < 0.5),
        distance_to_target=float(rng.uniform(0, 5)),
        velocity_body=rng.uniform(-1.5, 1.5, size=2),
        on_obstacle=bool(rng.random() < 0.3),
    )


def td_iterate_sf(mdp: TabularMdp, pi: np.ndarray, phi_table: np.ndarray, tol: float = 1e-13,
                  max_iter: int = 100_000) -> np.ndarray:
    """Tabular successor features by repeated expected TD backups."""
    P = mdp.policy_matrix(pi)
    psi = np.zeros_like(phi_table)
    for _ in range(max_iter):
        new = phi_table + mdp.discount * (P @ psi)
        new[mdp.absorbing] = 0.0
        if np.max(np.abs(new - psi)) < tol:
            return new
        psi = new
    raise RuntimeError("TD iteration did not converge")


def fit_sf_head(mdp: TabularMdp, pi: np.ndarray, phi_table: np.ndarray, hidden=(64, 64), rounds: int = 12,
                steps: int = 1000, lr: float = 3e-3, seed: int = 0) -> np.ndarray:
    """Fit the approximator's SF head to its own expected TD targets; returns predictions per state."""
    live = np.flatnonzero(~mdp.absorbing)
    obs = mdp.observations[live]
    masks = approx.sample_masks(1, hidden, 1.0, seed)
    appr = approx.MaskedApproximator(obs.shape[1], mdp.num_actions, True, 3, phi_table.shape[1], masks,
                                     hidden=hidden, seed=seed)
    opt = approx.Adam(appr.params, lr)
    P = mdp.policy_matrix(pi)[live]
    skills = np.zeros(len(live), dtype=int)

    def predict_all():
        pred = np.zeros_like(phi_table)
        pred[live] = appr.forward(obs, skills, heads=("sf",)).sf
        return pred

    for r in range(rounds):
        targets = phi_table[live] + mdp.discount * (P @ predict_all())
        for k in range(steps):
            opt.lr = lr * (0.1 if k > steps * 0.7 else 1.0) * (0.3 if r >= rounds // 2 else 1.0)
            out = appr.forward(obs, skills, heads=("sf",))
            grads = appr.backward(out, {"sf": (out.sf - targets) / len(live)})
            opt.step(appr.params, grads)
            appr.bump()
    return predict_all()


# ---------------------------------------------------------------- envs


def check_env_determinism():
    rng = np.random.default_rng(0)
    for kind in ("gridworld", "pointmass"):
        cfg = RunConfig()
        cfg.env.kind = kind
        cfg.env.layout = "random"
        env = make_env(cfg.env)
        actions = (rng.integers(0, 5, size=env.horizon) if kind == "gridworld"
                   else rng.uniform(-1, 1, size=(env.horizon, 3)))
        runs = []
        for _ in range(2):
            s, o = env.reset(123)
            trace = [np.concatenate([o.vector(), np.zeros(3)])]
            for a in actions:
                s, o, sig, done = env.step(s, a)
                trace.append(np.concatenate([o.vector(), env.rewards(sig)]))
            runs.append(np.stack(trace))
        if not np.array_equal(runs[0], runs[1]):
            return False, f"{kind}: trajectories differ"
    return True, "gridworld and point-mass replay bitwise"


def check_env_conservation():
    mdp = tabularize(small_grid_config(5, 8, 1).env)
    mdp.check(1e-12)
    return True, f"{mdp.num_states} states, rows sum to 1"


def check_tabularize_fidelity():
    cfg = small_grid_config(5, 8, 1)
    mdp = tabularize(cfg.env, cfg.rewards)
    env = make_env(cfg.env, cfg.rewards)
    rng = np.random.default_rng(1)
    live = np.flatnonzero(~mdp.absorbing)
    for _ in range(1000):
        s = int(rng.choice(live))
        a = int(rng.integers(mdp.num_actions))
        state = mdp.codec.decode(s)
        new, sig = env.transition(state, a)
        if mdp.codec.encode(new) != mdp.next_state[s, a]:
            return False, f"successor mismatch at state {s}, action {a}"
        if not np.array_equal(env.rewards(sig), mdp.group_rewards[:, s, a]):
            return False, f"reward mismatch at state {s}, action {a}"
        if not np.array_equal(env.observe(state).vector(), mdp.observations[s]):
            return False, f"observation mismatch at state {s}"
    return True, "1000 random (s, a) pairs agree"


def check_episode_length():
    rng = np.random.default_rng(2)
    for kind in ("gridworld", "pointmass"):
        cfg = RunConfig()
        cfg.env.kind = kind
        cfg.env.layout = "random"
        env = make_env(cfg.env)
        for seed in range(3):
            s, _ = env.reset(seed)
            steps, done = 0, False
            while not done:
                a = rng.integers(0, 5) if kind == "gridworld" else rng.uniform(-1.5, 1.5, size=3)
                s, _, _, done = env.step(s, a)
                steps += 1
            if steps != env.horizon:
                return False, f"{kind} episode lasted {steps} != {env.horizon}"
    return True, "every episode ends at the horizon"


# ---------------------------------------------------------------- rewards


def check_reward_bounds():
    rng = np.random.default_rng(3)
    params = RewardParams.from_config(RunConfig().rewards, 2.0, 1.0, 1.0)
    for _ in range(10_000):
        s = random_signals(rng)
        t, r, st = rewards.group_rewards(s, params)
        if not (0 < r <= 1 and 0 < st <= 1 and 0 <= t <= 2):
            return False, f"out of range: {t, r, st}"
        if not s.in_task_window and t != 0:
            return False, "task reward outside the window"
    return True, "10^4 probes in range"


def check_reward_monotonicity():
    d = np.linspace(0, 10, 200)
    r_pos = [rewards.task_reward(RawSignals(np.array([x, 0.0]), 0.0, 0.0, np.zeros(2), np.zeros(2),
                                            in_task_window=True), RewardParams(yaw_gate=-1.0)) for x in d]
    k = [rewards.exp_kernel(x, 0.7) for x in np.linspace(0, 2, 200)]
    ok = np.all(np.diff(r_pos) < 0) and np.all(np.diff(k) < 0)
    return bool(ok), "position reward and kernel strictly decreasing"


def check_yaw_gate():
    rng = np.random.default_rng(4)
    params = RewardParams(yaw_gate=0.25)
    for _ in range(10_000):
        s = dataclasses.replace(random_signals(rng), in_task_window=True)
        dist = float(np.linalg.norm(s.target_in_body))
        r_yaw = rewards.task_reward(s, params) - 1.0 / (1.0 + dist)
        if r_yaw > 0 and dist > params.yaw_gate:
            return False, f"yaw reward {r_yaw} at distance {dist}"
    return True, "yaw term only inside the gate"


def check_reward_purity():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        s = random_signals(rng)
        if not np.array_equal(rewards.group_rewards(s), rewards.group_rewards(s)):
            return False, "repeated evaluation differs"
    return True, "10^4 probes repeatable"


# ---------------------------------------------------------------- features


def check_vel_dir_norm():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        v = rng.standard_normal(2) * rng.choice([0.0, 1e-8, 1.0, 100.0])
        n = np.linalg.norm(phi_from_parts(v, np.zeros(2), "vel-dir"))
        if not (n == 0 or abs(n - 1) <= 1e-9):
            return False, f"norm {n}"
    return True, "norms in {0, 1}"


def _sf_problem():
    cfg = small_grid_config(3, 4, 0)
    mdp = tabularize(cfg.env, cfg.rewards, discount=0.99)
    pi = oracle.uniform_policy(mdp)
    return mdp, pi, mdp.feature_table("vel-pose")


def check_sf_fixed_point_tabular():
    mdp, pi, table = _sf_problem()
    err = np.max(np.abs(td_iterate_sf(mdp, pi, table) - oracle.exact_sf(mdp, pi, table)))
    return bool(err <= 1e-6), f"max abs error {err:.2e} over {mdp.num_states} states"


def check_sf_fixed_point_approx():
    mdp, pi, table = _sf_problem()
    err = np.max(np.abs(fit_sf_head(mdp, pi, table) - oracle.exact_sf(mdp, pi, table)))
    return bool(err <= 1e-2), f"max abs error {err:.2e}"


def check_ema_contraction():
    rng = np.random.default_rng(7)
    fe = FeatureExpectation(rng.standard_normal((3, 4)), 0.9)
    c = rng.standard_normal(4)
    d0 = np.linalg.norm(fe.psi[1] - c)
    for k in range(1, 50):
        fe = features.update_feature_expectation(fe, 1, c)
        if np.linalg.norm(fe.psi[1] - c) > 0.9**k * d0 * (1 + 1e-12):
            return False, f"contraction violated at step {k}"
    return True, "distance shrinks by beta per update"


# ---------------------------------------------------------------- diversity


def check_diversity_gradient():
    rng = np.random.default_rng(8)
    worst = 0.0
    for kind, ell0 in (("repulsive", None), ("vdw", 2.0)):
        cfg = RunConfig().diversity
        cfg.kind = kind
        cfg.ell0 = ell0 or 1.0
        for _ in range(50):
            psi = rng.standard_normal((4, 3)) * 2
            z = int(rng.integers(4))
            fd = oracle.fd_diversity_gradient(psi, kind, ell0, z)
            an = diversity.reward_directions(psi, cfg)[z]
            worst = max(worst, np.max(np.abs(fd - an)) / max(np.max(np.abs(an)), 1e-12))
    # expected intrinsic reward under an occupancy equals the inner product with the occupancy-mean feature
    mdp, pi, table = _sf_problem()
    occ = oracle.exact_occupancy(mdp, pi).sum(axis=1)
    psi = rng.standard_normal((3, table.shape[1]))
    dcfg = RunConfig().diversity
    per_state = diversity.intrinsic_rewards(table, np.zeros(len(table), dtype=int), psi, dcfg)
    direct = occ @ per_state
    via_mean = (occ @ table) @ diversity.reward_directions(psi, dcfg)[0]
    gap = abs(direct - via_mean)
    ok = worst <= 1e-6 and gap <= 1e-10
    return bool(ok), f"relative gradient error {worst:.1e}, occupancy identity gap {gap:.1e}"


def check_vdw_sign_law():
    rng = np.random.default_rng(9)
    rep, vdw = RunConfig().diversity, RunConfig().diversity
    rep.kind = "repulsive"
    for _ in range(2000):
        psi = rng.standard_normal((4, 3)) * 3
        vdw.ell0 = float(rng.uniform(0.5, 5))
        z = int(rng.integers(4))
        phi_s = rng.standard_normal(3)
        _, ell = diversity.nearest_neighbor(z, psi)
        if abs(ell - vdw.ell0) < 1e-9:
            continue
        r13 = diversity.intrinsic_reward(phi_s, z, psi, rep)
        r14 = diversity.intrinsic_reward(phi_s, z, psi, vdw)
        if np.sign(r14) != np.sign(r13) * np.sign(vdw.ell0 - ell):
            return False, f"sign mismatch at ell={ell}, ell0={vdw.ell0}"
    return True, "2000 probes obey the sign law"


def check_permutation_equivariance():
    rng = np.random.default_rng(10)
    for _ in range(200):
        psi = rng.standard_normal((5, 3))
        perm = rng.permutation(5)
        _, ell = diversity.nearest_neighbors(psi)
        _, ell_p = diversity.nearest_neighbors(psi[perm])
        if not np.allclose(ell[perm], ell_p, rtol=0, atol=1e-14):
            return False, "distances not permuted consistently"
    return True, "200 relabelings"


def check_vdw_stationarity():
    worst = 0.0
    for ell0 in (0.5, 1.0, 3.0, 10.0):
        deriv = ell0 - ell0**4 / ell0**3
        h = 1e-5 * ell0
        fd = (diversity.vdw_term(ell0 + h, ell0) - diversity.vdw_term(ell0 - h, ell0)) / (2 * h)
        worst = max(worst, abs(deriv), abs(fd) / ell0)
    return bool(worst <= 1e-8), f"max derivative {worst:.1e}"


# ---------------------------------------------------------------- lagrange


def _group(rng, n=4, vbar=None):
    g = lagrange.ConstraintGroup.create(0, float(rng.uniform(0.1, 1)), float(rng.uniform(0.5, 10)), n,
                                        mu_init=float(rng.uniform(-5, 5)))
    g.vbar = rng.uniform(0, 12, size=n) if vbar is None else vbar
    return g


def check_direction_law():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(10_000):
        g = _group(rng, 1)
        g.mu = np.array([float(rng.uniform(-19, 19))])
        new = lagrange.update_multipliers([g])[0]
        if np.sign(new.mu[0] - g.mu[0]) != np.sign(g.threshold - g.vbar[0]):
            bad += 1
    return bad == 0, f"{bad} violations in 10^4 residuals"


def check_multiplier_bounds():
    rng = np.random.default_rng(12)
    groups = [_group(rng) for _ in range(3)]
    for _ in range(2000):
        for g in groups:
            g.vbar = rng.uniform(-100, 100, size=4)
        groups = lagrange.update_multipliers(groups)
        for g in groups:
            s = g.sigma
            if np.any(np.abs(g.mu) > 20) or np.any(s <= 0) or np.any(s >= 1):
                return False, "multiplier left its bounds"
    return True, "mu in [-20, 20], sigma in (0, 1)"


def check_decoupling():
    rng = np.random.default_rng(13)
    groups = [_group(rng) for _ in range(3)]
    before = np.stack([g.vbar.copy() for g in groups])
    after_groups = list(groups)
    after_groups[1] = lagrange.update_moving_average(groups[1], 2, 99.0)
    after = np.stack([g.vbar for g in after_groups])
    changed = np.argwhere(after != before)
    ok = changed.tolist() == [[1, 2]] and np.array_equal(groups[1].vbar, before[1])
    return bool(ok), "only the targeted (group, skill) entry moves"


def check_single_group_reduction():
    rng = np.random.default_rng(14)
    for _ in range(10_000):
        a_i, a_e, mu = rng.standard_normal(3) * 5
        s = lagrange.bounded_multiplier(mu)
        got = lagrange.aggregate_advantage(a_i, [a_e], [s])
        if got != (1.0 - s) * a_i + s * a_e:
            return False, "m = 1 mix differs from the two-stream form"
    return True, "bit-exact on 10^4 inputs"


def check_monotone_response():
    rng = np.random.default_rng(15)
    for factor, sign in ((0.5, 1), (1.5, -1)):
        g = lagrange.ConstraintGroup.create(0, 0.8, 5.0, 1, mu_init=float(rng.uniform(-2, 2)))
        g.vbar = np.array([factor * g.threshold])
        prev = g.sigma[0]
        for _ in range(100):
            g = lagrange.update_multipliers([g])[0]
            g.vbar = np.array([factor * g.threshold])
            cur = g.sigma[0]
            if sign * (cur - prev) < 0:
                return False, f"sigma moved the wrong way with vbar = {factor} * threshold"
            prev = cur
    return True, "sigma rises below threshold, falls above"


# ---------------------------------------------------------------- approx


def _tiny_appr(discrete=True, separate=False, seed=0, n_skills=3):
    masks = approx.sample_masks(n_skills, (12, 10), 0.6, seed)
    return approx.MaskedApproximator(5, 4 if discrete else 3, discrete, 3, 4, masks, hidden=(12, 10),
                                     separate_networks=separate, seed=seed)


def _scalar_loss(appr, obs, skills, weights):
    out = appr.forward(obs, skills)
    total = sum(float(np.sum(weights[h] * getattr(out, h if h != "int_value" else "int_value")))
                for h in ("policy", "ext_values", "int_value", "sf"))
    if not appr.discrete:
        total += float(np.sum(weights["log_std"] * out.log_std))
    return total, out


def gradient_check(probes: int = 100, seed: int = 16) -> float:
    """Worst relative error between backward and central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in range(probes):
        appr = _tiny_appr(discrete=bool(p % 2), separate=bool(p % 3 == 0), seed=p)
        for k in appr.params:
            appr.params[k] = appr.params[k] + 0.3 * rng.standard_normal(appr.params[k].shape)
        obs = rng.standard_normal((6, 5))
        skills = rng.integers(0, 3, size=6)
        out = appr.forward(obs, skills)
        weights = {"policy": rng.standard_normal(out.policy.shape), "ext_values": rng.standard_normal((6, 3)),
                   "int_value": rng.standard_normal(6), "sf": rng.standard_normal((6, 4))}
        if not appr.discrete:
            weights["log_std"] = rng.standard_normal(3)
        grads = appr.backward(out, {h: w for h, w in weights.items()})
        keys = list(appr.params)
        k = keys[int(rng.integers(len(keys)))]
        idx = tuple(int(rng.integers(s)) for s in appr.params[k].shape)
        eps = 1e-6
        base = appr.params[k][idx]
        appr.params[k][idx] = base + eps
        up, _ = _scalar_loss(appr, obs, skills, weights)
        appr.params[k][idx] = base - eps
        down, _ = _scalar_loss(appr, obs, skills, weights)
        appr.params[k][idx] = base
        fd = (up - down) / (2 * eps)
        an = grads[k][idx]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


def check_gradient():
    worst = gradient_check()
    return bool(worst <= 1e-4), f"worst relative error {worst:.1e} over 100 probes"


def check_mask_isolation():
    rng = np.random.default_rng(17)
    appr = _tiny_appr()
    z = 1
    obs = rng.standard_normal((8, 5))
    out = appr.forward(obs, np.full(8, z))
    grads = appr.backward(out, {"policy": rng.standard_normal(out.policy.shape),
                                "sf": rng.standard_normal(out.sf.shape)})
    m0, m1 = (m[z] for m in appr.masks.masks)
    dead0, dead1 = m0 == 0, m1 == 0
    leaks = [
        np.abs(grads["shared/W0"][:, dead0]).max(initial=0.0),
        np.abs(grads["shared/b0"][dead0]).max(initial=0.0),
        np.abs(grads["shared/W1"][dead0, :]).max(initial=0.0),
        np.abs(grads["shared/W1"][:, dead1]).max(initial=0.0),
        np.abs(grads["head/policy/W"][dead1, :]).max(initial=0.0),
    ]
    return bool(max(leaks) == 0.0), "masked units receive exactly zero gradient"


def check_approx_determinism():
    rng = np.random.default_rng(18)
    obs = rng.standard_normal((7, 5))
    skills = rng.integers(0, 3, size=7)
    results = []
    for _ in range(2):
        appr = _tiny_appr(seed=3)
        out = appr.forward(obs, skills)
        g = appr.backward(out, {"policy": np.ones_like(out.policy), "sf": np.ones_like(out.sf)})
        results.append(np.concatenate([out.policy.ravel(), out.sf.ravel()] + [v.ravel() for v in g.values()]))
    return bool(np.array_equal(*results)), "forward and backward repeat bitwise"


def check_mask_persistence():
    rng = np.random.default_rng(19)
    appr = _tiny_appr(seed=4)
    obs = rng.standard_normal((5, 5))
    skills = rng.integers(0, 3, size=5)
    ref = appr.forward(obs, skills).policy
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ckpt.npz"
        save_arrays(path, appr.state_dict(), {})
        arrays, _ = load_arrays(path)
    other = _tiny_appr(seed=99)
    other.load_state_dict(arrays)
    return bool(np.array_equal(other.forward(obs, skills).policy, ref)), "reloaded network reproduces outputs"


# ---------------------------------------------------------------- trainer


def brute_force_gae(r, v, d, gamma, lam, last):
    T = len(r)
    out = np.zeros(T)
    for t in range(T):
        total, coef = 0.0, 1.0
        for k in range(t, T):
            nv = last if k == T - 1 else v[k + 1]
            delta = r[k] + gamma * nv * (1 - d[k]) - v[k]
            total += coef * delta
            if d[k]:
                break
            coef *= gamma * lam
        out[t] = total
    return out


def check_gae_oracle():
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(200):
        T = int(rng.integers(1, 30))
        r, v = rng.standard_normal(T), rng.standard_normal(T)
        d = rng.random(T) < 0.2
        gamma, lam, last = rng.uniform(0, 1), rng.uniform(0, 1), rng.standard_normal()
        adv, _ = compute_gae(r, v, d, gamma, lam, np.float64(last))
        worst = max(worst, np.max(np.abs(adv - brute_force_gae(r, v, d, gamma, lam, last))))
    return bool(worst <= 1e-12), f"max error {worst:.1e}"


def _tiny_train_config(iterations=3, warm=3):
    cfg = small_grid_config(3, 4, 0)
    cfg.approx.hidden = [16, 16]
    t = cfg.trainer
    t.iterations, t.warm_start_iters = iterations, warm
    t.steps_per_iter, t.num_envs, t.epochs, t.minibatches, t.n_skills = 8, 8, 1, 2, 3
    return cfg


def check_warm_start_freeze():
    from .trainer import Trainer

    cfg = _tiny_train_config(iterations=5, warm=3)
    tr = Trainer(cfg, expert_values=[1.0, 2.0, 3.0])
    mu0 = tr.lagrange.mu.copy()
    for it in range(5):
        tr.step()
        frozen = np.array_equal(tr.lagrange.mu, mu0)
        if it < 3 and not frozen:
            return False, f"multipliers moved during warm-start iteration {it}"
    if np.array_equal(tr.lagrange.mu, mu0):
        return False, "multipliers never moved after the warm start"
    return True, "multipliers frozen for exactly the warm-start iterations"


def check_snapshot_consistency():
    from .trainer import Trainer

    cfg = _tiny_train_config()
    tr = Trainer(cfg)
    tr.fe.psi = np.random.default_rng(21).standard_normal(tr.fe.psi.shape)
    snapshot = tr.fe.copy()
    ro = tr.worker.collect(tr.appr, snapshot, cfg.diversity, 12)
    expected = diversity.intrinsic_rewards(ro.phi, ro.skills, snapshot, cfg.diversity)
    return bool(np.array_equal(ro.int_rewards, expected)), "every intrinsic reward uses the collection snapshot"


# ---------------------------------------------------------------- oracle


def check_solve_residuals():
    rng = np.random.default_rng(22)
    for _ in range(50):
        mdp = random_mdp(rng, S=int(rng.integers(2, 30)))
        pi = random_policy(rng, mdp.num_states, mdp.num_actions)
        oracle.exact_value(mdp, pi, 0)  # raises on residual > 1e-10
        oracle.exact_sf(mdp, pi, rng.standard_normal((mdp.num_states, 3)))
    return True, "all solves within residual tolerance"


def check_duality():
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(100):
        mdp = random_mdp(rng)
        pi = random_policy(rng, mdp.num_states, mdp.num_actions)
        d = oracle.exact_occupancy(mdp, pi)
        lhs = float(np.sum(d * mdp.group_rewards[0]))
        rhs = (1 - mdp.discount) * float(mdp.initial_distribution @ oracle.exact_value(mdp, pi, 0))
        worst = max(worst, abs(lhs - rhs))
    return bool(worst <= 1e-10), f"max gap {worst:.1e} on 100 MDPs"


def check_sf_reduces_to_value():
    rng = np.random.default_rng(24)
    worst = 0.0
    for _ in range(20):
        mdp = random_mdp(rng)
        pi = random_policy(rng, mdp.num_states, mdp.num_actions)
        r_state = rng.standard_normal(mdp.num_states)
        reward = np.repeat(r_state[:, None], mdp.num_actions, axis=1)
        sf = oracle.exact_sf(mdp, pi, r_state[:, None])[:, 0]
        v = oracle.exact_value(mdp, pi, reward=reward)
        worst = max(worst, np.max(np.abs(sf - v)))
    return bool(worst <= 1e-10), f"max gap {worst:.1e}"


# ---------------------------------------------------------------- cli


def check_config_hash_stability():
    base = RunConfig().to_dict()
    shuffled = {k: base[k] for k in reversed(list(base))}
    shuffled["env"] = {k: base["env"][k] for k in sorted(base["env"], reverse=True)}
    a, b = config_from_dict(base), config_from_dict(shuffled)
    c = config_from_dict(dict(base, output_dir="elsewhere", run_id="other"))
    ok = a.config_hash() == b.config_hash() == c.config_hash()
    return ok, "hash ignores key order and output location"


CHECKS = [
    ("envs.determinism", check_env_determinism),
    ("envs.conservation", check_env_conservation),
    ("envs.tabularize_fidelity", check_tabularize_fidelity),
    ("envs.episode_length", check_episode_length),
    ("rewards.boundedness", check_reward_bounds),
    ("rewards.monotonicity", check_reward_monotonicity),
    ("rewards.yaw_gate", check_yaw_gate),
    ("rewards.purity", check_reward_purity),
    ("features.vel_dir_norm", check_vel_dir_norm),
    ("features.sf_fixed_point_tabular", check_sf_fixed_point_tabular),
    ("features.sf_fixed_point_approx", check_sf_fixed_point_approx),
    ("features.ema_contraction", check_ema_contraction),
    ("diversity.gradient_consistency", check_diversity_gradient),
    ("diversity.vdw_sign_law", check_vdw_sign_law),
    ("diversity.permutation_equivariance", check_permutation_equivariance),
    ("diversity.vdw_stationarity", check_vdw_stationarity),
    ("lagrange.direction_law", check_direction_law),
    ("lagrange.boundedness", check_multiplier_bounds),
    ("lagrange.decoupling", check_decoupling),
    ("lagrange.single_group_reduction", check_single_group_reduction),
    ("lagrange.monotone_response", check_monotone_response),
    ("approx.gradient_check", check_gradient),
    ("approx.mask_isolation", check_mask_isolation),
    ("approx.determinism", check_approx_determinism),
    ("approx.mask_persistence", check_mask_persistence),
    ("trainer.gae_oracle", check_gae_oracle),
    ("trainer.warm_start_freeze", check_warm_start_freeze),
    ("trainer.snapshot_consistency", check_snapshot_consistency),
    ("oracle.solve_residuals", check_solve_residuals),
    ("oracle.occupancy_value_duality", check_duality),
    ("oracle.sf_reduces_to_value", check_sf_reduces_to_value),
    ("cli.config_hash_stability", check_config_hash_stability),
]


def run_checks(names=None):
    """Yield (name, ok, detail) for every selected check; exceptions count as failures."""
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
