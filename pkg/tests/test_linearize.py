import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmplan.linearize import (
    FilterDegeneracy,
    LinearizationFailure,
    ekf_predict,
    ekf_update,
    floor_cov,
    kalman_track_trajectory,
    linearize_at,
    linearized_transition_sample,
    numeric_jacobians,
)
from snmplan.models import CarModel, LinearGaussianModel, NoiseSpec, bundled_scenario
from snmplan.pomdp import GaussianBelief


def linear_model(q=0.01, r=0.04):
    F = np.array([[1.0, 0.1], [0.0, 1.0]])
    G = np.array([[0.0], [0.1]])
    C = np.array([[1.0, 0.0]])
    return LinearGaussianModel(F, G, C, q * np.eye(2), [[r]], [[-1.0], [0.0], [1.0]], [-1e3, -1e3], [1e3, 1e3])


@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-3.0, 3.0), st.floats(-0.19, 0.19),
       st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=60, deadline=None)
def test_analytic_jacobians_match_finite_differences(x, y, th, v, acc, steer):
    model = bundled_scenario("maze").model()
    s, a = np.array([x, y, th, v]), np.array([acc, steer])
    A, B, V = model.dynamics_jacobians(s, a)
    H, W = model.measure_jacobians(s)
    nA, nB, nV, nH, nW = numeric_jacobians(model, s, a)
    for m, n in ((A, nA), (B, nB), (V, nV), (H, nH), (W, nW)):
        assert np.allclose(m, n, atol=1e-5)


def test_nonadditive_measure_jacobian():
    model = CarModel(observation="nonadditive")
    s = np.array([0.2, -0.3, 0.4, 0.1])
    H, W = model.measure_jacobians(s)
    _, _, _, nH, nW = numeric_jacobians(model, s, np.zeros(2))
    assert np.allclose(H, nH, atol=1e-6) and np.allclose(W, nW, atol=1e-6)


def test_linearization_exact_for_linear_model():
    model = linear_model()
    lin = linearize_at(model, np.array([0.3, -0.2]), np.array([1.0]))
    s, a = np.array([1.0, 2.0]), np.array([-1.0])
    assert np.allclose(lin.transition_mean(s, a), model.dynamics(s, a, np.zeros(2)))


def test_unknown_method_and_nonfinite_output():
    model = linear_model()
    with pytest.raises(ValueError):
        linearize_at(model, np.zeros(2), np.zeros(1), method="spline")

    class Blowup(LinearGaussianModel):
        def dynamics(self, s, a, v):
            return np.full(2, np.nan)

    bad = Blowup(np.eye(2), np.zeros((2, 1)), np.eye(1, 2), 0.01 * np.eye(2), [[0.01]], [[0.0]], [-1, -1], [1, 1])
    with pytest.raises(LinearizationFailure):
        linearize_at(bad, np.zeros(2), np.zeros(1), method="fd")


def test_linearized_samples_have_linear_gaussian_moments():
    model = linear_model(q=0.04)
    lin = linearize_at(model, np.zeros(2), np.zeros(1))
    x = linearized_transition_sample(lin, np.array([0.5, 0.5]), np.array([1.0]), np.random.default_rng(0), model,
                                     size=50000)
    assert np.allclose(x.mean(axis=0), [0.55, 0.6], atol=0.005)
    assert np.allclose(np.cov(x, rowvar=False), 0.04 * np.eye(2), atol=0.002)


def test_ekf_equals_kalman_filter_on_linear_model():
    model = linear_model()
    gb = GaussianBelief(np.array([0.0, 1.0]), np.diag([0.5, 0.2]))
    pred = ekf_predict(gb, np.array([1.0]), model)
    F, G = model.F, model.G
    m = F @ gb.mean + G @ [1.0]
    P = F @ gb.cov @ F.T + model.Q
    assert np.allclose(pred.mean, m) and np.allclose(pred.cov, P)
    post = ekf_update(pred, np.array([0.4]), model)
    C, R = model.C, model.R_obs
    K = P @ C.T @ np.linalg.inv(C @ P @ C.T + R)
    assert np.allclose(post.mean, m + K @ (np.array([0.4]) - C @ m))
    assert np.allclose(post.cov, (np.eye(2) - K @ C) @ P)


def test_kalman_track_length_and_shrinking_covariance():
    model = linear_model()
    gb = GaussianBelief(np.zeros(2), np.eye(2))
    traj = [(np.zeros(2), np.array([0.0]))] * 5
    beliefs = kalman_track_trajectory(traj, model, gb)
    assert len(beliefs) == 6
    assert beliefs[-1].cov[0, 0] < beliefs[0].cov[0, 0]
    with pytest.raises(ValueError):
        kalman_track_trajectory([], model, gb)


def test_singular_innovation_raises():
    model = CarModel(noise=NoiseSpec(0.0, 0.0))
    gb = GaussianBelief(np.zeros(4), np.zeros((4, 4)))
    with pytest.raises(FilterDegeneracy):
        ekf_update(gb, np.zeros(3), model)


def test_floor_cov_lifts_eigenvalues():
    P = floor_cov(np.array([[1.0, 0.0], [0.0, -1e-15]]), 1e-8)
    assert np.linalg.eigvalsh(P).min() >= 1e-8 - 1e-20
