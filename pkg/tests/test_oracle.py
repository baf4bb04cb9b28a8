import itertools

import numpy as np
import pytest

from dominic import oracle
from dominic.envs import TabularMdp, tabularize
from dominic.errors import DomainError
from dominic.verify import random_mdp, random_policy, small_grid_config


def self_loop(gamma: float, r: float = 1.0) -> TabularMdp:
    return TabularMdp.from_dense(np.ones((1, 1, 1)), np.full((1, 1, 1), r), np.ones(1), gamma)


def test_exact_value_examples(rng):
    mdp = random_mdp(rng)
    pi = random_policy(rng, 6, 3)
    zero = oracle.exact_value(mdp, pi, reward=np.zeros((6, 3)))
    assert np.all(zero == 0)
    assert oracle.exact_value(self_loop(0.5), np.ones((1, 1)))[0] == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DomainError):
        oracle.exact_value(self_loop(1.0), np.ones((1, 1)))


def test_exact_value_matches_monte_carlo():
    # 3-state chain under a uniform policy over {left, right}
    P = np.zeros((3, 2, 3))
    for s in range(3):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, min(s + 1, 2)] = 1.0
    r = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])[None]
    gamma = 0.9
    mdp = TabularMdp.from_dense(P, r, np.array([1.0, 0.0, 0.0]), gamma)
    pi = np.full((3, 2), 0.5)
    v = oracle.exact_value(mdp, pi)
    rng = np.random.default_rng(0)
    # 10^6 transitions spread over independent discounted episodes from state 0
    episodes, T = 20_000, 50
    s = np.zeros(episodes, dtype=int)
    total = np.zeros(episodes)
    for t in range(T):
        total += gamma**t * r[0, s, 0]
        a = rng.integers(0, 2, size=episodes)
        s = np.where(a == 0, np.maximum(s - 1, 0), np.minimum(s + 1, 2))
    tail = gamma**T * v.max()
    assert abs(total.mean() - v[0]) < 1e-3 + tail + 3 * total.std() / np.sqrt(episodes)


def test_occupancy(rng):
    mdp = random_mdp(rng)
    pi = random_policy(rng, 6, 3)
    d = oracle.exact_occupancy(mdp, pi)
    assert d.sum() == pytest.approx(1.0, abs=1e-10)
    for j in range(mdp.num_groups):
        v = oracle.exact_value(mdp, pi, j)
        assert np.sum(d * mdp.group_rewards[j]) == pytest.approx((1 - mdp.discount) * mdp.initial_distribution @ v,
                                                                 abs=1e-10)
    loop = TabularMdp.from_dense(np.array([[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]]),
                                 np.zeros((2, 2)), np.array([1.0, 0.0]), 0.9)
    d = oracle.exact_occupancy(loop, np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert d[0, 0] == pytest.approx(1.0)
    near_zero = TabularMdp.from_dense(mdp.dense_transitions(), mdp.group_rewards, mdp.initial_distribution, 1e-12)
    d0 = oracle.exact_occupancy(near_zero, pi)
    assert np.allclose(d0, mdp.initial_distribution[:, None] * pi, atol=1e-10)


def test_exact_sf(rng):
    mdp = random_mdp(rng)
    pi = random_policy(rng, 6, 3)
    assert np.all(oracle.exact_sf(mdp, pi, np.zeros((6, 2))) == 0)
    assert oracle.exact_sf(self_loop(0.5), np.ones((1, 1)), np.ones((1, 1)))[0, 0] == pytest.approx(2.0)
    # a single reward column is a value function
    r_state = (pi * mdp.group_rewards[0]).sum(axis=1)
    assert np.allclose(oracle.exact_sf(mdp, pi, r_state[:, None])[:, 0], oracle.exact_value(mdp, pi, 0), atol=1e-10)


def test_value_iteration_zero_and_greedy(rng):
    mdp = random_mdp(rng)
    v, greedy = oracle.value_iteration(mdp, weights=[0.0, 0.0])
    assert np.all(v == 0)
    v, greedy = oracle.value_iteration(mdp)
    v_pi = oracle.exact_value(mdp, greedy, reward=mdp.group_rewards.sum(axis=0))
    assert np.allclose(v_pi, v, atol=1e-9)


def test_value_iteration_matches_path_enumeration():
    cfg = small_grid_config(3, 3)
    mdp = tabularize(cfg.env, cfg.rewards)
    best = oracle.optimal_group_returns(mdp)[0].sum()
    start = int(np.argmax(mdp.initial_distribution))
    brute = -np.inf
    for seq in itertools.product(range(mdp.num_actions), repeat=3):
        s, total = start, 0.0
        for a in seq:
            total += mdp.group_rewards[:, s, a].sum()
            s = mdp.next_state[s, a]
        brute = max(brute, total)
    assert best == pytest.approx(brute, abs=1e-9)


def test_duality_on_random_mdps():
    rng = np.random.default_rng(5)
    for _ in range(100):
        mdp = random_mdp(rng, S=int(rng.integers(2, 8)), A=int(rng.integers(1, 4)))
        pi = random_policy(rng, mdp.num_states, mdp.num_actions)
        d = oracle.exact_occupancy(mdp, pi)
        v = oracle.exact_value(mdp, pi, 0)
        assert np.sum(d * mdp.group_rewards[0]) == pytest.approx((1 - mdp.discount) * mdp.initial_distribution @ v,
                                                                 abs=1e-10)
