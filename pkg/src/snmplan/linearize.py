"""First-order linearization and Gaussian belief propagation (EKF).

A model used here provides ``dynamics(s, a, v)`` (the smooth map, before
bounds are applied) and ``measure(s, w)`` with raw-unit noise,
``transition_noise_cov`` / ``observation_noise_cov``, the bounds handlers
``clip_state`` / ``clip_observation`` and, optionally, analytic
``dynamics_jacobians`` / ``measure_jacobians``.

Linearized samples pass through the same bounds handling as true ones, so
a TV comparison sees only the difference of the smooth maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pomdp import GaussianBelief

FD_STEP = 1e-5
COV_FLOOR = 1e-12


class LinearizationFailure(ArithmeticError):
    pass


class FilterDegeneracy(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LinearizedModel:
    s_ref: np.ndarray
    a_ref: np.ndarray
    f0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    V: np.ndarray
    h0: np.ndarray
    H: np.ndarray
    W: np.ndarray
    cov_v: np.ndarray
    cov_w: np.ndarray

    def transition_mean(self, s, a):
        return self.f0 + (np.asarray(s) - self.s_ref) @ self.A.T + (np.asarray(a) - self.a_ref) @ self.B.T


def _state_scale(model, n):
    space = getattr(model, "state_space", None)
    return np.ones(n) if space is None else np.asarray(space.width, dtype=float)


def _central_diff(fn, x0, steps):
    cols = []
    for i, h in enumerate(steps):
        e = np.zeros_like(x0)
        e[i] = h
        cols.append((fn(x0 + e) - fn(x0 - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def numeric_jacobians(model, s, a):
    """Central differences with a step of ``FD_STEP`` per normalized unit."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    nv = model.transition_noise_cov.shape[0]
    nw = model.observation_noise_cov.shape[0]
    zv, zw = np.zeros(nv), np.zeros(nw)
    s_steps = FD_STEP * _state_scale(model, s.size)
    a_space = getattr(model, "action_space", None)
    a_steps = FD_STEP * (np.ones(a.size) if a_space is None else a_space.width)
    v_scale = np.sqrt(np.maximum(np.diag(model.transition_noise_cov), 0.0))
    w_scale = np.sqrt(np.maximum(np.diag(model.observation_noise_cov), 0.0))
    v_steps = FD_STEP * np.where(v_scale > 0, v_scale / max(v_scale.max(), 1e-300), 1.0)
    w_steps = FD_STEP * np.where(w_scale > 0, w_scale / max(w_scale.max(), 1e-300), 1.0)
    A = _central_diff(lambda x: model.dynamics(x, a, zv), s, s_steps)
    B = _central_diff(lambda x: model.dynamics(s, x, zv), a, a_steps)
    V = _central_diff(lambda x: model.dynamics(s, a, x), zv, v_steps)
    H = _central_diff(lambda x: model.measure(x, zw), s, s_steps)
    W = _central_diff(lambda x: model.measure(s, x), zw, w_steps)
    return A, B, V, H, W


def linearize_at(model, s_ref, a_ref, method: str = "analytic") -> LinearizedModel:
    """Linearize transition and observation functions at ``(s_ref, a_ref)``.

    ``method="analytic"`` uses the model's own Jacobians when it has them
    and falls back to central differences otherwise.
    """
    s_ref = np.asarray(s_ref, dtype=float)
    a_ref = np.asarray(a_ref, dtype=float)
    nv = model.transition_noise_cov.shape[0]
    nw = model.observation_noise_cov.shape[0]
    f0 = np.asarray(model.dynamics(s_ref, a_ref, np.zeros(nv)), dtype=float)
    h0 = model.measure(s_ref, np.zeros(nw))
    if method == "analytic" and hasattr(model, "dynamics_jacobians"):
        A, B, V = model.dynamics_jacobians(s_ref, a_ref)
        H, W = model.measure_jacobians(s_ref)
    elif method in ("analytic", "fd"):
        A, B, V, H, W = numeric_jacobians(model, s_ref, a_ref)
    else:
        raise ValueError(f"unknown linearization method {method!r}")
    mats = (f0, h0, A, B, V, H, W)
    if not all(np.all(np.isfinite(m)) for m in mats):
        raise LinearizationFailure(f"non-finite model output near {s_ref}")
    return LinearizedModel(s_ref, a_ref, f0, A, B, V, h0, H, W,
                           np.asarray(model.transition_noise_cov, float), np.asarray(model.observation_noise_cov, float))


def linearized_transition_sample(lin: LinearizedModel, s, a, rng, model, size: int | None = None):
    """Draw successors from the linearized transition, clamped like the true model."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = s.shape[0] if size is None else size
    v = rng.standard_normal((n, lin.cov_v.shape[0])) @ _sqrt_psd(lin.cov_v).T
    return model.clip_state(lin.transition_mean(s, a) + v @ lin.V.T)


def linearized_observation_sample(lin: LinearizedModel, s, rng, model, size: int | None = None):
    s = np.atleast_2d(np.asarray(s, dtype=float))
    n = s.shape[0] if size is None else size
    w = rng.standard_normal((n, lin.cov_w.shape[0])) @ _sqrt_psd(lin.cov_w).T
    mean = lin.h0 + (s - lin.s_ref) @ lin.H.T
    return model.clip_observation(mean + w @ lin.W.T)


def _sqrt_psd(c):
    vals, vecs = np.linalg.eigh(c)
    return vecs * np.sqrt(np.maximum(vals, 0.0))


def floor_cov(P, floor: float = COV_FLOOR):
    """Symmetrize and lift eigenvalues to ``floor``."""
    P = 0.5 * (P + P.T)
    vals, vecs = np.linalg.eigh(P)
    if vals.min() >= floor:
        return P
    P = (vecs * np.maximum(vals, floor)) @ vecs.T
    return 0.5 * (P + P.T)


def _predict_arrays(mean, cov, a, model):
    lin = linearize_at(model, mean, a)
    P = lin.A @ cov @ lin.A.T + lin.V @ lin.cov_v @ lin.V.T
    return model.clip_state(lin.f0), floor_cov(P)


def _update_arrays(mean, cov, o, model):
    nw = model.observation_noise_cov.shape[0]
    h0 = model.measure(mean, np.zeros(nw))
    if hasattr(model, "measure_jacobians"):
        H, W = model.measure_jacobians(mean)
    else:
        _, _, _, H, W = numeric_jacobians(model, mean, np.zeros(model.actions.shape[1]))
    R = W @ model.observation_noise_cov @ W.T
    S = H @ cov @ H.T + R
    S = 0.5 * (S + S.T)
    vals = np.linalg.eigvalsh(S) if np.all(np.isfinite(S)) else np.array([0.0])
    if vals[0] <= 1e-14 * max(vals[-1], 1e-300):
        raise FilterDegeneracy("innovation covariance is singular")
    K = np.linalg.solve(S, H @ cov).T
    new_mean = mean + K @ (np.asarray(o, dtype=float) - h0)
    I_KH = np.eye(cov.shape[0]) - K @ H
    # Joseph form keeps the update PSD
    P = I_KH @ cov @ I_KH.T + K @ R @ K.T
    return model.clip_state(new_mean), floor_cov(P)


def ekf_predict(gb: GaussianBelief, a, model) -> GaussianBelief:
    return GaussianBelief(*_predict_arrays(gb.mean, gb.cov, a, model))


def ekf_update(gb: GaussianBelief, o, model) -> GaussianBelief:
    return GaussianBelief(*_update_arrays(gb.mean, gb.cov, o, model))


def kalman_track_trajectory(traj, model, initial: GaussianBelief) -> list[GaussianBelief]:
    """Beliefs along ``traj`` (pairs of state and action) under maximum-likelihood observations."""
    if len(traj) == 0:
        raise ValueError("trajectory must be nonempty")
    nw = model.observation_noise_cov.shape[0]
    beliefs = [initial]
    mean, cov = initial.mean, initial.cov
    for _, action in traj:
        mean, cov = _predict_arrays(mean, cov, action, model)
        mean, cov = _update_arrays(mean, cov, model.measure(mean, np.zeros(nw)), model)
        beliefs.append(GaussianBelief(mean, cov))
    return beliefs
