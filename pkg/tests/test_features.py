import numpy as np
import pytest

from dominic.errors import ConfigError, UsageError
from dominic.features import FeatureExpectation, phi_from_parts, sf_td_targets, update_feature_expectation


def test_phi_modes():
    assert phi_from_parts(np.zeros(2), np.zeros(2), "vel-dir").tolist() == [0.0, 0.0]
    assert np.allclose(phi_from_parts(np.array([0.37, 0.0]), np.zeros(2), "vel-dir"), [1.0, 0.0])
    out = phi_from_parts(np.array([0.3, 0.0]), np.array([0.1, -0.2]), "vel-pose")
    assert out.tolist() == [0.3, 0.0, 0.1, -0.2]
    with pytest.raises(ConfigError):
        phi_from_parts(np.zeros(2), np.zeros(2), "pose")


def test_vel_dir_norm(rng):
    for v in rng.standard_normal((500, 2)) * rng.choice([0, 1e-7, 1, 10], size=(500, 1)):
        n = np.linalg.norm(phi_from_parts(v, np.zeros(2), "vel-dir"))
        assert n == 0.0 or abs(n - 1) < 1e-9


def test_td_targets():
    phi = np.array([[1.0], [2.0], [3.0]])
    nxt = np.array([[10.0], [20.0], [30.0]])
    dones = np.array([False, True, False])
    assert sf_td_targets(phi, nxt, dones, 0.5).ravel().tolist() == [6.0, 2.0, 18.0]
    assert sf_td_targets(phi, nxt, dones, 0.0).ravel().tolist() == [1.0, 2.0, 3.0]
    # self-loop fixed point psi = 1 + 0.5 psi
    psi = np.zeros((1, 1))
    for _ in range(200):
        psi = sf_td_targets(np.ones((1, 1)), psi, np.array([False]), 0.5)
    assert psi[0, 0] == pytest.approx(2.0)


def test_td_targets_reject_mixed_skills():
    phi = np.zeros((2, 1))
    with pytest.raises(UsageError):
        sf_td_targets(phi, phi, np.array([False, False]), 0.9, skills=np.array([0, 1]), next_skills=np.array([1, 1]))
    sf_td_targets(phi, phi, np.array([True, False]), 0.9, skills=np.array([0, 1]), next_skills=np.array([1, 1]))


def test_feature_expectation_ema():
    fe = FeatureExpectation(np.array([[2.0, 0.0], [5.0, 5.0]]), beta=0.5)
    out = update_feature_expectation(fe, 0, [0.0, 2.0])
    assert out.psi.tolist() == [[1.0, 1.0], [5.0, 5.0]]
    assert fe.psi[0].tolist() == [2.0, 0.0]
    keep = FeatureExpectation(np.ones((1, 2)), beta=1.0)
    assert update_feature_expectation(keep, 0, [9.0, 9.0]).psi.tolist() == [[1.0, 1.0]]
    jump = FeatureExpectation(np.ones((1, 2)), beta=0.0)
    assert update_feature_expectation(jump, 0, [9.0, 8.0]).psi.tolist() == [[9.0, 8.0]]


def test_ema_contraction(rng):
    fe = FeatureExpectation(rng.standard_normal((1, 3)), beta=0.9)
    c = rng.standard_normal(3)
    start = np.linalg.norm(fe.psi[0] - c)
    for k in range(1, 60):
        fe = update_feature_expectation(fe, 0, c)
        assert np.linalg.norm(fe.psi[0] - c) <= 0.9**k * start + 1e-12
