"""POMDP abstractions, particle/Gaussian beliefs and an exact finite-POMDP oracle.

Continuous models implement :class:`PomdpModel`.  Finite models are
:class:`DiscretePomdp` instances, which also satisfy the model interface
(states are encoded as length-1 vectors holding the state index) so the
particle filter and episode simulator can run on them unchanged.
"""

from __future__ import annotations

import itertools
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9


class DegenerateUpdate(RuntimeError):
    """Every propagated particle has zero observation likelihood."""

    def __init__(self, propagated: np.ndarray):
        super().__init__("observation has zero likelihood under every particle")
        self.propagated = propagated


class InstanceTooLarge(ValueError):
    pass


class PomdpModel(ABC):
    """Generative POMDP model with a discretized action set.

    Subclasses provide vectorized sampling: ``states`` arguments are arrays
    of shape ``(N, n)``.
    """

    state_dim: int
    obs_dim: int
    gamma: float
    actions: np.ndarray  # (m, d) discretized action set
    state_lower: np.ndarray
    state_upper: np.ndarray

    @abstractmethod
    def sample_transition(self, states: np.ndarray, action: np.ndarray, rng) -> np.ndarray:
        ...

    @abstractmethod
    def sample_observation(self, states: np.ndarray, action: np.ndarray, rng) -> np.ndarray:
        ...

    @abstractmethod
    def observation_density(self, states: np.ndarray, action: np.ndarray, obs: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def reward(self, state: np.ndarray, action: np.ndarray, next_state: np.ndarray) -> float:
        ...

    def is_terminal(self, state: np.ndarray) -> bool:
        return False

    def step(self, state: np.ndarray, action: np.ndarray, rng):
        """Advance the hidden state one step: ``(s', o, r, terminal)``."""
        nxt = self.sample_transition(state[None, :], action, rng)[0]
        obs = self.sample_observation(nxt[None, :], action, rng)[0]
        return nxt, obs, self.reward(state, action, nxt), self.is_terminal(nxt)

    def check(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.gamma}")


@dataclass(frozen=True)
class ParticleBelief:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.particles, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if p.shape[0] == 0:
            raise ValueError("belief needs at least one particle")
        if w.shape[0] != p.shape[0]:
            raise ValueError("one weight per particle required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to one")
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, particles) -> "ParticleBelief":
        p = np.atleast_2d(np.asarray(particles, dtype=float))
        return cls(p, np.full(p.shape[0], 1.0 / p.shape[0]))

    @classmethod
    def point(cls, state, count: int = 1) -> "ParticleBelief":
        return cls.uniform(np.repeat(np.asarray(state, float)[None, :], count, axis=0))

    def __len__(self):
        return self.particles.shape[0]

    def sample(self, rng, size=None):
        idx = rng.choice(len(self), size=size, p=self.weights)
        return self.particles[idx]


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(c, c.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-9:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", 0.5 * (c + c.T))


def systematic_resample(weights: np.ndarray, count: int, rng) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    positions = (rng.random() + np.arange(count)) / count
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def belief_update_pf(
    belief: ParticleBelief,
    action,
    obs,
    model: PomdpModel,
    target_count: int,
    rng,
    strict: bool = False,
) -> ParticleBelief:
    """SIR update: propagate, weight by the observation density, resample.

    When every weight is zero the propagated particles are returned with
    uniform weights (or :class:`DegenerateUpdate` is raised if ``strict``).
    """
    if target_count < 1:
        raise ValueError("target_count must be positive")
    action = np.asarray(action, dtype=float)
    obs = np.asarray(obs, dtype=float)
    src = belief.particles[systematic_resample(belief.weights, target_count, rng)]
    propagated = model.sample_transition(src, action, rng)
    w = np.asarray(model.observation_density(propagated, action, obs), dtype=float)
    w = np.where(np.isfinite(w), w, 0.0)
    total = w.sum()
    if total <= 0.0:
        if strict:
            raise DegenerateUpdate(propagated)
        log.info("degenerate particle update, keeping propagated prior")
        return ParticleBelief.uniform(propagated)
    idx = systematic_resample(w / total, target_count, rng)
    return ParticleBelief.uniform(propagated[idx])


def belief_moments(belief: ParticleBelief) -> GaussianBelief:
    w = belief.weights
    mean = w @ belief.particles
    d = belief.particles - mean
    cov = (d * w[:, None]).T @ d
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


@dataclass
class EpisodeTrace:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    discounted_return: float = 0.0
    terminal: bool = False

    def __len__(self):
        return len(self.rewards)


def discounted_sum(rewards: Sequence[float], gamma: float) -> float:
    total, disc = 0.0, 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return total


def simulate_episode(
    model: PomdpModel,
    policy: Callable[[ParticleBelief, int], np.ndarray],
    b0: ParticleBelief,
    max_steps: int,
    rng,
    particle_count: int | None = None,
) -> EpisodeTrace:
    """Closed-loop run: hidden start state drawn from ``b0``."""
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    count = particle_count or len(b0)
    state = b0.sample(rng)
    belief = b0
    trace = EpisodeTrace()
    for t in range(max_steps):
        action = np.asarray(policy(belief, t), dtype=float)
        nxt, obs, r, terminal = model.step(state, action, rng)
        trace.states.append(state)
        trace.actions.append(action)
        trace.observations.append(obs)
        trace.rewards.append(float(r))
        state = nxt
        if terminal:
            trace.terminal = True
            break
        belief = belief_update_pf(belief, action, obs, model, count, rng)
    trace.states.append(state)
    trace.discounted_return = discounted_sum(trace.rewards, model.gamma)
    return trace


# -- finite POMDPs -----------------------------------------------------------


@dataclass(frozen=True)
class ConditionalPlan:
    """Action plus one successor plan per observation (empty at depth 1)."""

    action: int
    children: tuple = ()

    @property
    def depth(self) -> int:
        return 1 + (max(c.depth for c in self.children) if self.children else 0)

    def __repr__(self):
        if not self.children:
            return f"<{self.action}>"
        return f"<{self.action}: " + ", ".join(map(repr, self.children)) + ">"


class DiscretePomdp(PomdpModel):
    """Finite POMDP given by tensors.

    ``T[s, a, s']``, ``Z[s', a, o]``, ``R[s, a]``.  Rewards are ``R(s, a)``,
    independent of the successor.
    """

    def __init__(self, T, Z, R, gamma, b0, names: dict | None = None):
        self.T = np.asarray(T, dtype=float)
        self.Z = np.asarray(Z, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.gamma = float(gamma)
        self.b0 = np.asarray(b0, dtype=float)
        self.names = names or {}
        self._validate()
        ns, na, no = self.n_states, self.n_actions, self.n_obs
        self.state_dim, self.obs_dim = 1, 1
        self.actions = np.arange(na, dtype=float)[:, None]
        self.state_lower = np.zeros(1)
        self.state_upper = np.array([ns - 1.0])

    def _validate(self):
        self.check()
        ns, na = self.R.shape
        if self.T.shape != (ns, na, ns):
            raise ValueError(f"T must have shape {(ns, na, ns)}")
        if self.Z.ndim != 3 or self.Z.shape[:2] != (ns, na):
            raise ValueError("Z must have shape (S, A, O)")
        for name, tensor in (("T", self.T), ("Z", self.Z)):
            if np.any(tensor < 0) or not np.allclose(tensor.sum(-1), 1.0, atol=1e-12, rtol=0):
                raise ValueError(f"rows of {name} must be distributions")
        if self.b0.shape != (ns,) or np.any(self.b0 < 0) or abs(self.b0.sum() - 1) > 1e-12:
            raise ValueError("b0 must be a distribution over states")

    @property
    def n_states(self):
        return self.R.shape[0]

    @property
    def n_actions(self):
        return self.R.shape[1]

    @property
    def n_obs(self):
        return self.Z.shape[2]

    @property
    def r_m(self) -> float:
        return float(max(abs(self.R.min()), self.R.max()))

    def with_tensors(self, T=None, Z=None) -> "DiscretePomdp":
        return DiscretePomdp(
            self.T if T is None else T, self.Z if Z is None else Z, self.R, self.gamma, self.b0, self.names
        )

    # sampling interface, states are index vectors of shape (N, 1)
    def sample_transition(self, states, action, rng):
        s = np.asarray(states, dtype=float)[:, 0].astype(int)
        a = int(np.asarray(action).reshape(-1)[0])
        cum = np.cumsum(self.T[s, a], axis=1)
        u = rng.random((s.size, 1))
        nxt = np.minimum((u > cum).sum(axis=1), self.n_states - 1)
        return nxt[:, None].astype(float)

    def sample_observation(self, states, action, rng):
        s = np.asarray(states, dtype=float)[:, 0].astype(int)
        a = int(np.asarray(action).reshape(-1)[0])
        cum = np.cumsum(self.Z[s, a], axis=1)
        u = rng.random((s.size, 1))
        return np.minimum((u > cum).sum(axis=1), self.n_obs - 1)[:, None].astype(float)

    def observation_density(self, states, action, obs):
        s = np.asarray(states, dtype=float)[:, 0].astype(int)
        a = int(np.asarray(action).reshape(-1)[0])
        o = int(np.asarray(obs).reshape(-1)[0])
        return self.Z[s, a, o]

    def reward(self, state, action, next_state):
        return float(self.R[int(np.asarray(state).reshape(-1)[0]), int(np.asarray(action).reshape(-1)[0])])

    # serialization
    def to_dict(self) -> dict:
        return {
            "states": self.names.get("states", list(range(self.n_states))),
            "actions": self.names.get("actions", list(range(self.n_actions))),
            "observations": self.names.get("observations", list(range(self.n_obs))),
            "T": self.T.tolist(),
            "Z": self.Z.tolist(),
            "R": self.R.tolist(),
            "gamma": self.gamma,
            "b0": self.b0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretePomdp":
        missing = {"T", "Z", "R", "gamma", "b0"} - set(d)
        if missing:
            raise ValueError(f"missing POMDP fields: {sorted(missing)}")
        names = {k: d[k] for k in ("states", "actions", "observations") if k in d}
        dp = cls(d["T"], d["Z"], d["R"], d["gamma"], d["b0"], names)
        for key, size in (("states", dp.n_states), ("actions", dp.n_actions), ("observations", dp.n_obs)):
            if key in d and len(d[key]) != size:
                raise ValueError(f"'{key}' lists {len(d[key])} entries, tensors imply {size}")
        return dp

    @classmethod
    def load(cls, path) -> "DiscretePomdp":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def alpha_vector(dp: DiscretePomdp, plan: ConditionalPlan) -> np.ndarray:
    """Alpha function of ``plan`` evaluated at every state."""
    a = plan.action
    alpha = dp.R[:, a].copy()
    if plan.children:
        if len(plan.children) != dp.n_obs:
            raise ValueError("observation strategy must cover every observation")
        # cont[s'] = sum_o Z[s', a, o] alpha_{nu(o)}(s')
        cont = np.zeros(dp.n_states)
        for o, child in enumerate(plan.children):
            cont += dp.Z[:, a, o] * alpha_vector(dp, child)
        alpha += dp.gamma * dp.T[:, a, :] @ cont
    return alpha


def exact_alpha(dp: DiscretePomdp, plan: ConditionalPlan, s: int) -> float:
    return float(alpha_vector(dp, plan)[s])


def plan_count(n_actions: int, n_obs: int, depth: int) -> int:
    count = n_actions
    for _ in range(depth - 1):
        count = n_actions * count**n_obs
    return count


def enumerate_plans(dp: DiscretePomdp, depth: int, max_plans: int = 200_000):
    """All conditional plans of ``depth`` and their alpha vectors.

    Returns ``(plans, alphas)`` with ``alphas[i]`` the alpha vector of
    ``plans[i]``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    total = plan_count(dp.n_actions, dp.n_obs, depth)
    if total > max_plans:
        raise InstanceTooLarge(f"{total} plans at depth {depth} exceeds cap {max_plans}")
    plans = [ConditionalPlan(a) for a in range(dp.n_actions)]
    alphas = dp.R.T.copy()  # (plans, S)
    for _ in range(depth - 1):
        new_plans, new_alphas = [], []
        # weighted[a][o] = gamma * T[:, a, :] * Z[:, a, o], applied to each child alpha
        for a in range(dp.n_actions):
            proj = [dp.gamma * (dp.T[:, a, :] * dp.Z[None, :, a, o]) @ alphas.T for o in range(dp.n_obs)]
            for combo in itertools.product(range(len(plans)), repeat=dp.n_obs):
                vec = dp.R[:, a].copy()
                for o, c in enumerate(combo):
                    vec += proj[o][:, c]
                new_plans.append(ConditionalPlan(a, tuple(plans[c] for c in combo)))
                new_alphas.append(vec)
        plans, alphas = new_plans, np.array(new_alphas)
    return plans, alphas


def exact_optimal_value(dp: DiscretePomdp, belief, depth: int, max_plans: int = 200_000):
    """Best finite-horizon value at ``belief`` by exhaustive plan enumeration."""
    plans, alphas = enumerate_plans(dp, depth, max_plans)
    values = alphas @ np.asarray(belief, dtype=float)
    best = int(np.argmax(values))
    return float(values[best]), plans[best]


def value_loss_bound(snm: float, r_m: float, gamma: float) -> float:
    """Value-loss bound ``4 gamma r_m / (1 - gamma)^2 * snm``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if r_m < 0 or snm < 0:
        raise ValueError("r_m and snm must be nonnegative")
    return 4.0 * gamma * r_m / (1.0 - gamma) ** 2 * snm


def alpha_gap_bound(snm: float, r_m: float, gamma: float) -> float:
    """Per-plan alpha-function gap bound, half of :func:`value_loss_bound`."""
    return 0.5 * value_loss_bound(snm, r_m, gamma)


def row_tv(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(P) - np.asarray(Q)).sum(axis=-1)


def finite_snm(dp: DiscretePomdp, dp_hat: DiscretePomdp) -> tuple[float, float]:
    """Exact transition and observation components for finite models."""
    return float(row_tv(dp.T, dp_hat.T).max()), float(row_tv(dp.Z, dp_hat.Z).max())
