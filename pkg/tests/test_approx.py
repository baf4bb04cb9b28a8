import numpy as np
import pytest

from dominic import approx
from dominic.checkpoint import load_arrays
from dominic.errors import UsageError
from dominic.verify import check_mask_isolation, check_mask_persistence, gradient_check


def make(discrete=True, n_skills=3, hidden=(16, 16), p=0.5, separate=False, seed=0, obs_dim=8):
    masks = approx.sample_masks(n_skills, hidden, p, seed)
    return approx.MaskedApproximator(obs_dim, 5 if discrete else 3, discrete, 3, 4, masks, hidden=hidden,
                                     separate_networks=separate, seed=seed)


def test_sample_masks():
    full = approx.sample_masks(4, [8, 8], 1.0, 0)
    assert all(m.all() for m in full.masks)
    a, b = approx.sample_masks(3, [8, 4], 0.5, 9), approx.sample_masks(3, [8, 4], 0.5, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.masks, b.masks))
    fracs = [approx.sample_masks(8, [64], 0.5, s).masks[0].mean() for s in range(100)]
    assert 0.45 <= np.mean(fracs) <= 0.55
    sparse = approx.sample_masks(20, [3], 0.05, 1)
    assert np.all(sparse.masks[0].sum(axis=1) >= 1)


def test_identical_masks_give_identical_outputs(rng):
    masks = approx.sample_masks(1, (16, 16), 0.5, 3)
    twin = approx.MaskSet([np.repeat(m, 2, axis=0) for m in masks.masks], 0.5)
    appr = approx.MaskedApproximator(8, 5, True, 3, 4, twin, hidden=(16, 16))
    obs = rng.standard_normal((6, 8))
    a, b = appr.forward(obs, 0), appr.forward(obs, 1)
    assert np.array_equal(a.policy, b.policy) and np.array_equal(a.sf, b.sf)


def test_all_ones_mask_is_identity(rng):
    ones = approx.sample_masks(2, (16, 16), 1.0, 0)
    appr = approx.MaskedApproximator(8, 5, True, 3, 4, ones, hidden=(16, 16), seed=1)
    obs = rng.standard_normal((5, 8))
    out = appr.forward(obs, 1)
    h = obs
    for i in range(2):
        h = approx.elu(h @ appr.params[f"shared/W{i}"] + appr.params[f"shared/b{i}"])
    assert np.allclose(out.policy, h @ appr.params["head/policy/W"] + appr.params["head/policy/b"], atol=1e-12)


def test_categorical_probabilities_normalised(rng):
    appr = make()
    out = appr.forward(rng.standard_normal((1000, 8)) * 3, rng.integers(0, 3, 1000))
    logits = out.policy - out.policy.max(axis=1, keepdims=True)
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_forward_errors(rng):
    appr = make()
    with pytest.raises(UsageError):
        appr.forward(rng.standard_normal((2, 7)), 0)
    with pytest.raises(UsageError):
        appr.forward(rng.standard_normal((2, 8)), 3)


def test_backward_zero_and_stale(rng):
    appr = make(discrete=False)
    out = appr.forward(rng.standard_normal((4, 8)), rng.integers(0, 3, 4))
    zero = {k: np.zeros_like(v) for k, v in [("policy", out.policy), ("ext_values", out.ext_values),
                                               ("int_value", out.int_value), ("sf", out.sf)]}
    grads = appr.backward(out, zero)
    assert all(np.all(g == 0) for g in grads.values())
    assert all(grads[k].shape == appr.params[k].shape for k in grads)
    appr.bump()
    with pytest.raises(UsageError):
        appr.backward(out, zero)


def test_masked_unit_gets_zero_gradient(rng):
    appr = make(n_skills=2, hidden=(8, 8), seed=4)
    out = appr.forward(rng.standard_normal((5, 8)), 0)
    grads = appr.backward(out, {"policy": rng.standard_normal(out.policy.shape)})
    dead = appr.masks.masks[0][0] == 0
    assert dead.any()
    assert np.all(grads["shared/W0"][:, dead] == 0) and np.all(grads["shared/b0"][dead] == 0)


def test_gradient_check_small_net():
    assert gradient_check(probes=20) <= 1e-4


def test_determinism(rng):
    obs = rng.standard_normal((4, 8))
    a, b = make(seed=7), make(seed=7)
    oa, ob = a.forward(obs, 2), b.forward(obs, 2)
    ga = a.backward(oa, {"sf": np.ones_like(oa.sf)})
    gb = b.backward(ob, {"sf": np.ones_like(ob.sf)})
    assert all(np.array_equal(ga[k], gb[k]) for k in ga)


def test_state_dict_roundtrip(rng, tmp_path):
    appr = make(separate=True)
    clone = make(separate=True, seed=99)
    clone.load_state_dict(appr.state_dict())
    obs = rng.standard_normal((3, 8))
    assert np.array_equal(appr.forward(obs, 1).policy, clone.forward(obs, 1).policy)


def test_adam_and_clip():
    params = {"w": np.array([1.0, -2.0])}
    opt = approx.Adam(params, lr=0.1)
    opt.step(params, {"w": np.array([1.0, -1.0])})
    assert np.allclose(params["w"], [0.9, -1.9])
    grads = {"a": np.array([3.0, 4.0]), "b": np.array([10.0])}
    norm = approx.clip_grad_norm(grads, 1.0, ["a"])
    assert norm == pytest.approx(5.0)
    assert np.allclose(grads["a"], [0.6, 0.8]) and grads["b"][0] == 10.0


@pytest.mark.parametrize("check", [check_mask_isolation, check_mask_persistence])
def test_approx_invariants(check):
    ok, detail = check()
    assert ok, detail
