import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dominic import diversity
from dominic.config import DiversityConfig
from dominic.errors import TieInstabilityError, UsageError
from dominic.oracle import fd_diversity_gradient

REP = DiversityConfig(kind="repulsive")


def test_nearest_neighbor_examples():
    psi = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert diversity.nearest_neighbor(0, psi) == (1, 5.0)
    same = np.zeros((3, 2))
    assert diversity.nearest_neighbor(1, same) == (0, 0.0)
    three = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    assert diversity.nearest_neighbor(0, three)[0] == 1


def test_objectives():
    psi = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert diversity.repulsive_objective(psi) == pytest.approx(25.0)
    assert diversity.repulsive_objective(np.ones((3, 2))) == 0.0
    assert diversity.repulsive_objective(psi + 7.5) == pytest.approx(25.0)
    ell0 = 1.7
    pair = np.array([[0.0, 0.0], [ell0, 0.0]])
    assert diversity.vdw_objective(pair, ell0) == pytest.approx(2 * 0.3 * ell0**2)
    far = np.array([[0.0, 0.0], [2 * ell0, 0.0]])
    assert diversity.vdw_objective(far, ell0) == pytest.approx(-8.8 * ell0**2)
    assert diversity.vdw_objective(np.zeros((2, 3)), ell0) == 0.0
    with pytest.raises(UsageError):
        diversity.repulsive_objective(np.zeros((1, 2)))


def test_intrinsic_reward_examples():
    psi = np.array([[2.0, -3.0], [0.0, 0.0]])
    assert diversity.intrinsic_reward(np.array([1.0, 0.0]), 0, psi, REP) == pytest.approx(2.0)
    ell0 = float(np.linalg.norm(psi[0]))
    vdw = DiversityConfig(kind="vdw", ell0=ell0)
    assert abs(diversity.intrinsic_reward(np.array([0.3, 0.9]), 0, psi, vdw)) < 1e-12
    same = np.zeros((2, 2))
    for cfg in (REP, DiversityConfig(kind="vdw", ell0=1.0)):
        assert diversity.intrinsic_reward(np.ones(2), 0, same, cfg) == 0.0
    assert diversity.intrinsic_reward(np.ones(2), 0, np.ones((1, 2)), REP) == 0.0


def test_batched_rewards_match_scalar(rng):
    psi = rng.standard_normal((4, 3))
    phis = rng.standard_normal((10, 3))
    skills = rng.integers(0, 4, size=10)
    for cfg in (REP, DiversityConfig(kind="vdw", ell0=1.2)):
        batch = diversity.intrinsic_rewards(phis, skills, psi, cfg)
        single = [diversity.intrinsic_reward(p, z, psi, cfg) for p, z in zip(phis, skills)]
        assert np.allclose(batch, single, atol=1e-12)


def test_diversity_metric_examples():
    assert diversity.diversity_metric(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)
    assert diversity.diversity_metric(np.zeros((3, 2))) == 0.0
    assert diversity.diversity_metric(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(4 / 3)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_reward_direction_is_fd_gradient(seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((4, 3)) * 3
    ell0 = float(rng.uniform(0.5, 4))
    for z in range(4):
        try:
            fd_rep = fd_diversity_gradient(psi, "repulsive", None, z)
            fd_vdw = fd_diversity_gradient(psi, "vdw", ell0, z)
        except TieInstabilityError:
            continue
        rep = diversity.reward_directions(psi, REP)[z]
        vdw = diversity.reward_directions(psi, DiversityConfig(kind="vdw", ell0=ell0))[z]
        assert np.allclose(fd_rep, rep, rtol=1e-6, atol=1e-6 * np.abs(rep).max())
        assert np.allclose(fd_vdw, vdw, rtol=1e-5, atol=1e-6 * max(1.0, np.abs(vdw).max()))


def test_fd_repulsive_homogeneity(rng):
    psi = rng.standard_normal((2, 3))
    g = fd_diversity_gradient(psi, "repulsive", None, 0)
    assert np.allclose(g, psi[0] - psi[1], rtol=1e-6)
    assert np.allclose(fd_diversity_gradient(3.0 * psi, "repulsive", None, 0), 3.0 * g, rtol=1e-6)


def test_fd_vdw_stationary_at_equilibrium():
    psi = np.array([[0.0, 0.0], [1.5, 2.0]])
    assert np.abs(fd_diversity_gradient(psi, "vdw", 2.5, 0)).max() < 1e-6


def test_fd_refuses_on_tie():
    psi = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(TieInstabilityError):
        fd_diversity_gradient(psi, "repulsive", None, 0)


@given(st.integers(0, 2**32 - 1))
def test_vdw_sign_law_and_permutation(seed):
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((5, 2)) * 2
    phi = rng.standard_normal(2)
    ell0 = float(rng.uniform(0.3, 3))
    vdw = DiversityConfig(kind="vdw", ell0=ell0)
    _, ell = diversity.nearest_neighbors(psi)
    for z in range(5):
        r_rep = diversity.intrinsic_reward(phi, z, psi, REP)
        r_vdw = diversity.intrinsic_reward(phi, z, psi, vdw)
        if abs(ell[z] - ell0) > 1e-9 and abs(r_rep) > 1e-12:
            assert np.sign(r_vdw) == np.sign(r_rep) * np.sign(ell0 - ell[z])
    perm = rng.permutation(5)
    _, ell_perm = diversity.nearest_neighbors(psi[perm])
    assert np.allclose(ell_perm, ell[perm])
