"""Car-like robot POMDP, planar obstacle environments and toy linear models.

Noise levels are given in normalized units: a transition error ``e_T`` is
the standard deviation of the control noise in the unit-cube action space,
and ``e_Z`` the standard deviation of the sensor noise in the unit-cube
observation space.  Internally both are rescaled to raw units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .pomdp import PomdpModel

DT = 0.3
AXLE = 0.11
TWO_PI = 2.0 * math.pi

STATE_LOWER = np.array([-1.0, -1.0, -3.14, -0.2])
STATE_UPPER = np.array([1.0, 1.0, 3.14, 0.2])
ACTION_LOWER = np.array([-1.0, -1.0])
ACTION_UPPER = np.array([1.0, 1.0])
OBS_LOWER = np.array([0.0, 0.0, -0.2])
OBS_UPPER = np.array([1.0, 1.0, 0.2])

GOAL_REWARD = 1000.0
COLLISION_PENALTY = -500.0
STEP_PENALTY = -1.0

ADDITIVE = "additive"
NONADDITIVE = "nonadditive"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box used for state, action and observation bounds."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def width(self):
        return self.upper - self.lower

    def normalize(self, x, with_flag: bool = False):
        x = np.asarray(x, dtype=float)
        u = (x - self.lower) / self.width
        clipped = np.clip(u, 0.0, 1.0)
        if with_flag:
            return clipped, bool(np.any(clipped != u))
        return clipped

    def denormalize(self, u):
        return self.lower + np.asarray(u, dtype=float) * self.width

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


STATE_SPACE = Box(STATE_LOWER, STATE_UPPER)
ACTION_SPACE = Box(ACTION_LOWER, ACTION_UPPER)
OBS_SPACE = Box(OBS_LOWER, OBS_UPPER)


def wrap_angle(theta):
    """Wrap onto the circle, then keep within the declared heading bounds."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.clip(wrapped, STATE_LOWER[2], STATE_UPPER[2])


def clip_state(s):
    s = np.array(s, dtype=float, copy=True)
    s[..., 2] = wrap_angle(s[..., 2])
    s[..., [0, 1, 3]] = np.clip(s[..., [0, 1, 3]], STATE_LOWER[[0, 1, 3]], STATE_UPPER[[0, 1, 3]])
    return s


@dataclass(frozen=True)
class NoiseSpec:
    e_T: float
    e_Z: float

    def __post_init__(self):
        if self.e_T < 0 or self.e_Z < 0:
            raise ValueError("noise levels must be nonnegative")

    @property
    def sigma_v(self):
        """Control-noise covariance in normalized action units."""
        return self.e_T**2 * np.eye(2)

    @property
    def sigma_w(self):
        """Sensor-noise covariance in normalized observation units."""
        return self.e_Z**2 * np.eye(3)


@dataclass(frozen=True)
class Environment:
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # rows xmin, ymin, xmax, ymax
    goal: tuple = (0.7, 0.7)
    goal_radius: float = 0.1
    beacons: np.ndarray = field(default_factory=lambda: np.array([[-0.7, 0.7], [0.7, -0.7]]))
    half_extents: tuple = (0.06, 0.035)

    def __post_init__(self):
        obs = np.asarray(self.obstacles, dtype=float).reshape(-1, 4)
        if self.goal_radius <= 0:
            raise ValueError("goal radius must be positive")
        if np.any(obs[:, :2] > obs[:, 2:]) or np.any(np.abs(obs) > 1.0 + 1e-12):
            raise ValueError("obstacles must be well-formed boxes inside [-1, 1]^2")
        object.__setattr__(self, "obstacles", obs)
        object.__setattr__(self, "beacons", np.asarray(self.beacons, dtype=float).reshape(2, 2))
        object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))
        object.__setattr__(self, "half_extents", tuple(float(h) for h in self.half_extents))
        # centers and half sizes, for the separating-axis test
        object.__setattr__(self, "_centers", 0.5 * (obs[:, :2] + obs[:, 2:]))
        object.__setattr__(self, "_halves", 0.5 * (obs[:, 2:] - obs[:, :2]))

    def to_dict(self) -> dict:
        return {
            "obstacles": self.obstacles.tolist(),
            "goal": list(self.goal),
            "goal_radius": self.goal_radius,
            "beacons": self.beacons.tolist(),
            "half_extents": list(self.half_extents),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        kwargs = {k: d[k] for k in ("obstacles", "goal", "goal_radius", "beacons", "half_extents") if k in d}
        return cls(**kwargs)


EMPTY = Environment()


def car_step(s, a, v, dt: float = DT, clip: bool = True):
    """Bicycle-model step with raw control noise ``v = (acc, steer)``.

    Broadcasts over leading axes.  Heading is wrapped and the remaining
    components are clamped to their bounds unless ``clip`` is false.
    """
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    x, y, th, vel = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    out = np.empty(np.broadcast_shapes(s.shape, a.shape[:-1] + (4,), v.shape[:-1] + (4,)))
    out[..., 0] = x + dt * vel * np.cos(th)
    out[..., 1] = y + dt * vel * np.sin(th)
    out[..., 2] = th + dt * np.tan(a[..., 1] + v[..., 1]) / AXLE
    out[..., 3] = vel + dt * (a[..., 0] + v[..., 0])
    return clip_state(out) if clip else out


def collides(s, env: Environment):
    """Oriented footprint vs. obstacle boxes (separating-axis test).

    Returns a bool for a single state or a bool array for a batch.
    """
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    if env.obstacles.shape[0] == 0:
        res = np.zeros(s2.shape[0], dtype=bool)
        return bool(res[0]) if single else res
    hl, hw = env.half_extents
    c, sn = np.cos(s2[:, 2])[:, None], np.sin(s2[:, 2])[:, None]
    ac, asn = np.abs(c), np.abs(sn)
    dx = s2[:, 0:1] - env._centers[None, :, 0]
    dy = s2[:, 1:2] - env._centers[None, :, 1]
    bx, by = env._halves[None, :, 0], env._halves[None, :, 1]
    sep = (np.abs(dx) > hl * ac + hw * asn + bx)
    sep |= np.abs(dy) > hl * asn + hw * ac + by
    sep |= np.abs(dx * c + dy * sn) > hl + bx * ac + by * asn
    sep |= np.abs(-dx * sn + dy * c) > hw + bx * asn + by * ac
    res = np.any(~sep, axis=1)
    return bool(res[0]) if single else res


def in_goal(s, env: Environment):
    s = np.asarray(s, dtype=float)
    d2 = (s[..., 0] - env.goal[0]) ** 2 + (s[..., 1] - env.goal[1]) ** 2
    return d2 <= env.goal_radius**2


def car_step_collision(s, a, v, env: Environment, dt: float = DT):
    """Step that bounces off obstacles: pose kept, velocity reversed and tripled."""
    s = np.asarray(s, dtype=float)
    nxt = car_step(s, a, v, dt)
    hit = collides(nxt, env)
    bounced = np.array(np.broadcast_to(s, nxt.shape), dtype=float, copy=True)
    bounced[..., 3] = np.clip(-3.0 * bounced[..., 3], STATE_LOWER[3], STATE_UPPER[3])
    if np.ndim(hit) == 0:
        return bounced if hit else nxt
    return np.where(hit[:, None], bounced, nxt)


def _beacon_terms(x, y, env):
    b = env.beacons
    o1 = 1.0 / ((x - b[0, 0]) ** 2 + (y - b[0, 1]) ** 2 + 1.0)
    o2 = 1.0 / ((x - b[1, 0]) ** 2 + (y - b[1, 1]) ** 2 + 1.0)
    return o1, o2


def car_observe_additive(s, env: Environment, w):
    s = np.asarray(s, dtype=float)
    w = np.asarray(w, dtype=float)
    o1, o2 = _beacon_terms(s[..., 0], s[..., 1], env)
    return np.stack([o1, o2, s[..., 3]], axis=-1) + w


def car_observe_nonadditive(s, env: Environment, w):
    s = np.asarray(s, dtype=float)
    w = np.asarray(w, dtype=float)
    o1, o2 = _beacon_terms(s[..., 0] + w[..., 0], s[..., 1] + w[..., 1], env)
    return np.stack([o1, o2, s[..., 3] + w[..., 2]], axis=-1)


def reward(s_next, env: Environment, collided=None) -> float:
    """Reward for arriving in ``s_next``; ``collided`` overrides the contact test."""
    hit = collides(s_next, env) if collided is None else collided
    if hit:
        return COLLISION_PENALTY
    if in_goal(s_next, env):
        return GOAL_REWARD
    return STEP_PENALTY


class CarModel(PomdpModel):
    """Second-order car with beacon and velocity sensors.

    ``collision_dynamics`` selects the bounce transition, in which contacts
    are penalized but not terminal.  Otherwise a contact ends the episode.
    """

    state_dim = 4
    obs_dim = 3
    action_dim = 2
    state_space = STATE_SPACE
    action_space = ACTION_SPACE
    obs_space = OBS_SPACE
    state_lower = STATE_LOWER
    state_upper = STATE_UPPER
    angle_dims = (2,)

    def __init__(
        self,
        env: Environment = EMPTY,
        noise: NoiseSpec = NoiseSpec(0.038, 0.038),
        collision_dynamics: bool = False,
        observation: str = ADDITIVE,
        gamma: float = 0.95,
        dt: float = DT,
        kde_samples: int = 200,
        kde_seed: int = 0,
    ):
        if observation not in (ADDITIVE, NONADDITIVE):
            raise ValueError(f"unknown observation variant {observation!r}")
        self.env = env
        self.noise = noise
        self.collision_dynamics = collision_dynamics
        self.observation = observation
        self.gamma = gamma
        self.dt = dt
        self.check()
        g = np.array([-1.0, 0.0, 1.0])
        self.actions = np.array([[acc, steer] for acc in g for steer in g])
        # raw noise scales: control noise lives in normalized action space
        self.v_scale = ACTION_SPACE.width.copy()
        if observation == ADDITIVE:
            self.w_scale = OBS_SPACE.width.copy()
        else:
            # position perturbations are measured in normalized state units
            self.w_scale = np.array([STATE_SPACE.width[0], STATE_SPACE.width[1], OBS_SPACE.width[2]])
        self.kde_noise = np.random.default_rng(kde_seed).standard_normal((kde_samples, 3))

    def with_noise(self, noise: NoiseSpec) -> "CarModel":
        return CarModel(self.env, noise, self.collision_dynamics, self.observation, self.gamma, self.dt,
                        self.kde_noise.shape[0])

    @property
    def collision_terminal(self) -> bool:
        return not self.collision_dynamics

    @property
    def transition_noise_cov(self):
        return np.diag(self.v_scale**2) * self.noise.e_T**2

    @property
    def observation_noise_cov(self):
        return np.diag(self.w_scale**2) * self.noise.e_Z**2

    # smooth parts, used by the linearizer; bounds are applied by clip_state
    def dynamics(self, s, a, v):
        return car_step(s, a, v, self.dt, clip=False)

    def measure(self, s, w):
        if self.observation == ADDITIVE:
            return car_observe_additive(s, self.env, w)
        return car_observe_nonadditive(s, self.env, w)

    def dynamics_jacobians(self, s, a):
        """Analytic ``(df/ds, df/da, df/dv)`` of the unclamped step at zero noise."""
        x, y, th, vel = np.asarray(s, dtype=float)
        steer = float(np.asarray(a, dtype=float)[1])
        dt = self.dt
        A = np.eye(4)
        A[0, 2] = -dt * vel * math.sin(th)
        A[0, 3] = dt * math.cos(th)
        A[1, 2] = dt * vel * math.cos(th)
        A[1, 3] = dt * math.sin(th)
        B = np.zeros((4, 2))
        B[2, 1] = dt / (AXLE * math.cos(steer) ** 2)
        B[3, 0] = dt
        return A, B, B.copy()

    def measure_jacobians(self, s):
        """Analytic ``(dh/ds, dh/dw)`` at zero noise."""
        x, y = float(s[0]), float(s[1])
        H = np.zeros((3, 4))
        for i, (bx, by) in enumerate(self.env.beacons):
            q = (x - bx) ** 2 + (y - by) ** 2 + 1.0
            H[i, 0] = -2.0 * (x - bx) / q**2
            H[i, 1] = -2.0 * (y - by) / q**2
        H[2, 3] = 1.0
        if self.observation == ADDITIVE:
            W = np.eye(3)
        else:
            W = np.zeros((3, 3))
            W[:2, :2] = H[:2, :2]
            W[2, 2] = 1.0
        return H, W

    def clip_state(self, s):
        return clip_state(s)

    def clip_observation(self, o):
        return np.asarray(o, dtype=float)

    # sampling
    def draw_v(self, size, rng):
        return rng.standard_normal((size, 2)) * (self.noise.e_T * self.v_scale)

    def draw_w(self, size, rng):
        return rng.standard_normal((size, 3)) * (self.noise.e_Z * self.w_scale)

    def transition(self, states, action, v):
        """Full transition with raw noise; returns ``(next_states, collided)``."""
        nxt = car_step(states, action, v, self.dt)
        hit = collides(nxt, self.env)
        if self.collision_dynamics and np.any(hit):
            states = np.asarray(states, dtype=float)
            bounced = np.array(np.broadcast_to(states, nxt.shape), copy=True)
            bounced[..., 3] = np.clip(-3.0 * bounced[..., 3], STATE_LOWER[3], STATE_UPPER[3])
            nxt = np.where(hit[:, None], bounced, nxt)
        return nxt, hit

    def sample_transition(self, states, action, rng):
        states = np.atleast_2d(states)
        return self.transition(states, action, self.draw_v(states.shape[0], rng))[0]

    def sample_transition_outcome(self, states, action, rng):
        states = np.atleast_2d(states)
        return self.transition(states, action, self.draw_v(states.shape[0], rng))

    def sample_observation(self, states, action=None, rng=None):
        states = np.atleast_2d(states)
        return self.measure(states, self.draw_w(states.shape[0], rng))

    def observation_density(self, states, action, obs):
        """Likelihood of ``obs`` in normalized observation coordinates."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        obs = np.asarray(obs, dtype=float)
        e = self.noise.e_Z
        if e == 0.0:
            h = self.measure(states, np.zeros(3))
            return np.all(np.abs(h - obs) <= 1e-9, axis=1).astype(float)
        if self.observation == ADDITIVE:
            h = self.measure(states, np.zeros(3))
            z = (obs - h) / (self.w_scale * e)
            return np.exp(-0.5 * np.sum(z * z, axis=1)) / ((2 * math.pi) ** 1.5 * e**3)
        return self._kde_density(states, obs)

    def _kde_density(self, states, obs):
        w = self.kde_noise * (self.noise.e_Z * self.w_scale)  # (M, 3)
        samples = self.measure(states[:, None, :], w[None, :, :])  # (N, M, 3)
        u = samples / OBS_SPACE.width
        target = np.asarray(obs) / OBS_SPACE.width
        m = u.shape[1]
        sd = u.std(axis=1)  # (N, 3)
        bw = np.maximum(sd * (4.0 / (5.0 * m)) ** (1.0 / 7.0), 1e-12)
        z = (target[None, None, :] - u) / bw[:, None, :]
        k = np.exp(-0.5 * np.sum(z * z, axis=2)) / ((2 * math.pi) ** 1.5 * np.prod(bw, axis=1))[:, None]
        return k.mean(axis=1)

    def reward(self, state, action, next_state, collided=None):
        return reward(next_state, self.env, collided)

    def is_terminal(self, state) -> bool:
        if bool(in_goal(state, self.env)):
            return True
        return self.collision_terminal and bool(collides(state, self.env))

    def step(self, state, action, rng):
        nxt, hit = self.transition(np.asarray(state, dtype=float)[None, :], action, self.draw_v(1, rng))
        nxt = nxt[0]
        obs = self.measure(nxt, self.draw_w(1, rng)[0])
        r = reward(nxt, self.env, bool(hit[0]))
        terminal = bool(in_goal(nxt, self.env)) or (self.collision_terminal and bool(hit[0]))
        return nxt, obs, r, terminal

    def fast_stepper(self, rng, block: int = 4096):
        """Scalar step closure for tree search: ``(s_tuple, a_index) -> (s', r, terminal)``.

        Avoids numpy overhead on single states; noise is drawn in blocks.
        """
        return _ScalarCar(self, rng, block)


def box_list(env: Environment) -> list:
    """Obstacles as ``(cx, cy, half_w, half_h)`` tuples for scalar tests."""
    return [(float(c[0]), float(c[1]), float(h[0]), float(h[1])) for c, h in zip(env._centers, env._halves)]


def scalar_collides(x, y, th, boxes, hl, hw) -> bool:
    """Single-state version of :func:`collides` on a :func:`box_list`."""
    c, sn = math.cos(th), math.sin(th)
    ac, asn = abs(c), abs(sn)
    for cx, cy, bx, by in boxes:
        dx, dy = x - cx, y - cy
        if abs(dx) > hl * ac + hw * asn + bx:
            continue
        if abs(dy) > hl * asn + hw * ac + by:
            continue
        if abs(dx * c + dy * sn) > hl + bx * ac + by * asn:
            continue
        if abs(-dx * sn + dy * c) > hw + bx * asn + by * ac:
            continue
        return True
    return False


def scalar_step(s, a, dt: float = DT):
    """Noise-free :func:`car_step` on plain floats."""
    x, y, th, vel = s
    nth = th + dt * math.tan(a[1]) / AXLE
    nth = min(3.14, max(-3.14, (nth + math.pi) % TWO_PI - math.pi))
    return (
        min(1.0, max(-1.0, x + dt * vel * math.cos(th))),
        min(1.0, max(-1.0, y + dt * vel * math.sin(th))),
        nth,
        min(0.2, max(-0.2, vel + dt * a[0])),
    )


class _ScalarCar:
    def __init__(self, model: CarModel, rng, block: int):
        self.m = model
        self.rng = rng
        self.block = block
        self._fill()
        env = model.env
        self.boxes = box_list(env)
        self.hl, self.hw = env.half_extents
        self.gx, self.gy = env.goal
        self.gr2 = env.goal_radius**2
        self.acts = [tuple(map(float, a)) for a in model.actions]
        self.sv = (model.noise.e_T * model.v_scale[0], model.noise.e_T * model.v_scale[1])
        self.sw = tuple(float(x) for x in model.noise.e_Z * model.w_scale)
        self.terminal_hits = model.collision_terminal
        self.bounce = model.collision_dynamics

    def _fill(self):
        self.buf = self.rng.standard_normal(self.block).tolist()
        self.pos = 0

    def normal(self):
        if self.pos >= self.block:
            self._fill()
        z = self.buf[self.pos]
        self.pos += 1
        return z

    def collides(self, x, y, th):
        return scalar_collides(x, y, th, self.boxes, self.hl, self.hw)

    def step(self, s, ai):
        x, y, th, vel = s
        acc, steer = self.acts[ai]
        dt = self.m.dt
        nx = min(1.0, max(-1.0, x + dt * vel * math.cos(th)))
        ny = min(1.0, max(-1.0, y + dt * vel * math.sin(th)))
        nth = th + dt * math.tan(steer + self.sv[1] * self.normal()) / AXLE
        nth = (nth + math.pi) % TWO_PI - math.pi
        nth = min(3.14, max(-3.14, nth))
        nv = min(0.2, max(-0.2, vel + dt * (acc + self.sv[0] * self.normal())))
        if self.collides(nx, ny, nth):
            if self.bounce:
                return (x, y, th, min(0.2, max(-0.2, -3.0 * vel))), COLLISION_PENALTY, False
            return (nx, ny, nth, nv), COLLISION_PENALTY, self.terminal_hits
        if (nx - self.gx) ** 2 + (ny - self.gy) ** 2 <= self.gr2:
            return (nx, ny, nth, nv), GOAL_REWARD, True
        return (nx, ny, nth, nv), STEP_PENALTY, False

    def observe(self, s):
        x, y, _, vel = s
        (b1x, b1y), (b2x, b2y) = self.m.env.beacons
        sw = self.sw
        if self.m.observation == ADDITIVE:
            o1 = 1.0 / ((x - b1x) ** 2 + (y - b1y) ** 2 + 1.0) + sw[0] * self.normal()
            o2 = 1.0 / ((x - b2x) ** 2 + (y - b2y) ** 2 + 1.0) + sw[1] * self.normal()
            return o1, o2, vel + sw[2] * self.normal()
        px, py = x + sw[0] * self.normal(), y + sw[1] * self.normal()
        o1 = 1.0 / ((px - b1x) ** 2 + (py - b1y) ** 2 + 1.0)
        o2 = 1.0 / ((px - b2x) ** 2 + (py - b2y) ** 2 + 1.0)
        return o1, o2, vel + sw[2] * self.normal()


class LinearGaussianModel(PomdpModel):
    """``s' = F s + G a + v``, ``o = C s + w`` with Gaussian noise.

    Used as the null case in which linearization is exact.
    """

    def __init__(self, F, G, C, Q, R_obs, actions, lower, upper, gamma: float = 0.95):
        self.F, self.G, self.C = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (F, G, C))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R_obs = np.atleast_2d(np.asarray(R_obs, dtype=float))
        self.actions = np.atleast_2d(np.asarray(actions, dtype=float))
        self.state_lower = np.asarray(lower, dtype=float)
        self.state_upper = np.asarray(upper, dtype=float)
        self.state_space = Box(self.state_lower, self.state_upper)
        self.state_dim = self.F.shape[0]
        self.obs_dim = self.C.shape[0]
        self.gamma = gamma
        self.check()
        self._lq = np.linalg.cholesky(self.Q) if np.any(self.Q) else np.zeros_like(self.Q)
        self._lr = np.linalg.cholesky(self.R_obs) if np.any(self.R_obs) else np.zeros_like(self.R_obs)

    collision_terminal = False

    @property
    def transition_noise_cov(self):
        return self.Q

    @property
    def observation_noise_cov(self):
        return self.R_obs

    def dynamics(self, s, a, v):
        return np.asarray(s) @ self.F.T + np.asarray(a) @ self.G.T + v

    def measure(self, s, w):
        return np.asarray(s) @ self.C.T + w

    def dynamics_jacobians(self, s, a):
        return self.F.copy(), self.G.copy(), np.eye(self.state_dim)

    def measure_jacobians(self, s):
        return self.C.copy(), np.eye(self.obs_dim)

    def clip_state(self, s):
        return np.clip(s, self.state_lower, self.state_upper)

    def clip_observation(self, o):
        return np.asarray(o, dtype=float)

    def draw_v(self, size, rng):
        return rng.standard_normal((size, self.state_dim)) @ self._lq.T

    def draw_w(self, size, rng):
        return rng.standard_normal((size, self.obs_dim)) @ self._lr.T

    def sample_transition(self, states, action, rng):
        states = np.atleast_2d(states)
        return self.clip_state(self.dynamics(states, action, self.draw_v(states.shape[0], rng)))

    def sample_transition_outcome(self, states, action, rng):
        nxt = self.sample_transition(states, action, rng)
        return nxt, np.zeros(nxt.shape[0], dtype=bool)

    def sample_observation(self, states, action=None, rng=None):
        states = np.atleast_2d(states)
        return self.measure(states, self.draw_w(states.shape[0], rng))

    def observation_density(self, states, action, obs):
        states = np.atleast_2d(states)
        d = np.asarray(obs) - self.measure(states, 0.0)
        inv = np.linalg.inv(self.R_obs)
        norm = math.sqrt(np.linalg.det(2 * math.pi * self.R_obs))
        return np.exp(-0.5 * np.einsum("ni,ij,nj->n", d, inv, d)) / norm

    def reward(self, state, action, next_state):
        return -1.0


# -- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Environment plus model variant, noise and start state."""

    name: str = "empty"
    env: Environment = EMPTY
    noise: NoiseSpec = NoiseSpec(0.038, 0.038)
    collision_dynamics: bool = False
    observation: str = ADDITIVE
    start_state: tuple = (-0.7, -0.7, 1.57, 0.0)
    gamma: float = 0.95
    max_steps: int = 50

    def model(self, noise: NoiseSpec | None = None) -> CarModel:
        return CarModel(self.env, noise or self.noise, self.collision_dynamics, self.observation, self.gamma)

    def with_noise(self, e_T: float, e_Z: float | None = None) -> "Scenario":
        return replace(self, noise=NoiseSpec(e_T, e_T if e_Z is None else e_Z))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "environment": self.env.to_dict(),
            "noise": {"e_T": self.noise.e_T, "e_Z": self.noise.e_Z},
            "collision_dynamics": self.collision_dynamics,
            "observation": self.observation,
            "start_state": list(self.start_state),
            "gamma": self.gamma,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "Scenario":
        env = d.get("environment", {})
        if isinstance(env, str):
            path = Path(base_dir or ".") / env
            env = json.loads(path.read_text())
            env = env.get("environment", env)
        noise = d.get("noise", {})
        return cls(
            name=d.get("name", "scenario"),
            env=Environment.from_dict(env),
            noise=NoiseSpec(float(noise.get("e_T", 0.038)), float(noise.get("e_Z", noise.get("e_T", 0.038)))),
            collision_dynamics=bool(d.get("collision_dynamics", False)),
            observation=d.get("observation", ADDITIVE),
            start_state=tuple(float(x) for x in d.get("start_state", (-0.7, -0.7, 1.57, 0.0))),
            gamma=float(d.get("gamma", 0.95)),
            max_steps=int(d.get("max_steps", 50)),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def bundled_scenario(name: str) -> Scenario:
    """Load one of the packaged scenario files (``maze`` or ``empty``)."""
    text = resources.files("snmplan.data").joinpath(f"{name}.json").read_text()
    return Scenario.from_dict(json.loads(text))
