"""Linearization-based replanning: RRT nominal trajectories scored under EKF beliefs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ..linearize import FilterDegeneracy, kalman_track_trajectory
from ..models import (AXLE, COLLISION_PENALTY, GOAL_REWARD, STEP_PENALTY, TWO_PI, box_list, collides, in_goal,
                      scalar_collides)
from ..pomdp import GaussianBelief

log = logging.getLogger(__name__)

HEADING_WEIGHT = 0.3


@dataclass
class NominalTrajectory:
    """States ``s_0..s_T`` and actions ``a_0..a_{T-1}`` under noise-free dynamics."""

    states: np.ndarray
    actions: np.ndarray
    reached_goal: bool = False
    score: float = -math.inf
    flags: dict = field(default_factory=dict)

    def __len__(self):
        return self.actions.shape[0]

    def pairs(self):
        return list(zip(self.states[:-1], self.actions))


def _box_mass(mu, sd, lo, hi):
    sd = np.maximum(sd, 1e-12)
    return np.prod(ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd), axis=-1)


def collision_probability(gb: GaussianBelief, env) -> float:
    """Gaussian mass of the footprint-inflated obstacle boxes, summed and clipped."""
    if env.obstacles.shape[0] == 0:
        return 0.0
    mu = gb.mean[:2]
    sd = np.sqrt(np.maximum(np.diag(gb.cov)[:2], 0.0))
    th = gb.mean[2]
    hl, hw = env.half_extents
    ex = hl * abs(math.cos(th)) + hw * abs(math.sin(th))
    ey = hl * abs(math.sin(th)) + hw * abs(math.cos(th))
    infl = np.array([ex, ey])
    lo = env.obstacles[:, :2] - infl
    hi = env.obstacles[:, 2:] + infl
    return float(min(1.0, _box_mass(mu, sd, lo, hi).sum()))


def goal_probability(gb: GaussianBelief, env) -> float:
    """Mass of the square with the goal disc's area."""
    half = 0.5 * env.goal_radius * math.sqrt(math.pi)
    g = np.asarray(env.goal)
    sd = np.sqrt(np.maximum(np.diag(gb.cov)[:2], 0.0))
    return float(_box_mass(gb.mean[:2], sd, g - half, g + half))


def expected_step_reward(gb: GaussianBelief, env) -> float:
    p_col = collision_probability(gb, env)
    p_goal = min(goal_probability(gb, env), 1.0 - p_col)
    return COLLISION_PENALTY * p_col + GOAL_REWARD * p_goal + STEP_PENALTY * (1.0 - p_col - p_goal)


def score_trajectory(traj: NominalTrajectory, model, initial: GaussianBelief) -> float:
    """Discounted sum of expected rewards along the Kalman-tracked beliefs."""
    if len(traj) == 0:
        return 0.0
    try:
        beliefs = kalman_track_trajectory(traj.pairs(), model, initial)
    except FilterDegeneracy:
        return -math.inf
    total, disc = 0.0, 1.0
    for gb in beliefs[1:]:
        total += disc * expected_step_reward(gb, model.env)
        disc *= model.gamma
    return total


def _embed(s, lower, upper):
    """Position in the unit square plus down-weighted heading and speed."""
    x, y, th, vel = s
    return (
        (x - lower[0]) / (upper[0] - lower[0]),
        (y - lower[1]) / (upper[1] - lower[1]),
        HEADING_WEIGHT * 0.5 * math.cos(th),
        HEADING_WEIGHT * 0.5 * math.sin(th),
        HEADING_WEIGHT * (vel - lower[3]) / (upper[3] - lower[3]),
    )


def grow_rrt(model, start, rng, nodes: int = 300, goal_bias: float = 0.2, depth_cap: int = 60,
             extra_controls: int = 3) -> NominalTrajectory:
    """One goal-biased kinodynamic RRT; returns the branch to the goal or to the node nearest it.

    Nodes are extended with the discrete action set plus ``extra_controls``
    uniformly drawn controls, keeping the collision-free successor closest
    to the random target.
    """
    env = model.env
    lower, upper = model.state_space.lower, model.state_space.upper
    boxes, (hl, hw) = box_list(env), env.half_extents
    gx, gy = env.goal
    gr2 = env.goal_radius**2
    dt = model.dt
    # (control, heading increment, speed increment) for the discrete actions
    base = [(tuple(map(float, a)), dt * math.tan(a[1]) / AXLE, dt * a[0]) for a in np.atleast_2d(model.actions)]
    s0 = tuple(float(v) for v in start)
    states, parent, action = [s0], [-1], [None]
    depth = np.zeros(nodes, dtype=np.int64)
    E = np.empty((nodes, 5))
    E[0] = _embed(s0, lower, upper)
    goal_node = 0 if (s0[0] - gx) ** 2 + (s0[1] - gy) ** 2 <= gr2 else -1
    slo, shi = lower[3], upper[3]
    sx, sy, sv = upper[0] - lower[0], upper[1] - lower[1], upper[3] - lower[3]
    hwt = 0.5 * HEADING_WEIGHT
    attempts = 0
    while goal_node < 0 and len(states) < nodes and attempts < 20 * nodes:
        attempts += 1
        if rng.random() < goal_bias:
            target = (gx, gy, rng.uniform(lower[2], upper[2]), rng.uniform(lower[3], upper[3]))
        else:
            target = tuple(lower + rng.random(4) * (upper - lower))
        te = _embed(target, lower, upper)
        n = len(states)
        d = np.sum((E[:n] - te) ** 2, axis=1)
        d[depth[:n] >= depth_cap] = np.inf
        near = int(np.argmin(d))
        if not math.isfinite(d[near]):
            break
        x, y, th, vel = states[near]
        # position update does not depend on the control
        x2 = min(upper[0], max(lower[0], x + dt * vel * math.cos(th)))
        y2 = min(upper[1], max(lower[1], y + dt * vel * math.sin(th)))
        dpos = ((x2 - lower[0]) / sx - te[0]) ** 2 + ((y2 - lower[1]) / sy - te[1]) ** 2
        extra = [(tuple(c), dt * math.tan(c[1]) / AXLE, dt * c[0])
                 for c in rng.uniform(-1.0, 1.0, (extra_controls, 2)).tolist()]
        cands = []
        for c, dth, dv in base + extra:
            th2 = (th + dth + math.pi) % TWO_PI - math.pi
            th2 = 3.14 if th2 > 3.14 else (-3.14 if th2 < -3.14 else th2)
            v2 = vel + dv
            v2 = shi if v2 > shi else (slo if v2 < slo else v2)
            e2 = (hwt * math.cos(th2), hwt * math.sin(th2), HEADING_WEIGHT * (v2 - slo) / sv)
            dd = dpos + (e2[0] - te[2]) ** 2 + (e2[1] - te[3]) ** 2 + (e2[2] - te[4]) ** 2
            cands.append((dd, (x2, y2, th2, v2), c, e2))
        cands.sort(key=lambda z: z[0])
        hit_cache = {}
        best = None
        for dd, s2, c, e2 in cands:
            hit = hit_cache.get(s2[2])
            if hit is None:
                hit = hit_cache[s2[2]] = scalar_collides(x2, y2, s2[2], boxes, hl, hw)
            if not hit:
                best, best_c, best_e = s2, c, ((x2 - lower[0]) / sx, (y2 - lower[1]) / sy) + e2
                break
        if best is None:
            continue
        E[n] = best_e
        depth[n] = depth[near] + 1
        states.append(best)
        parent.append(near)
        action.append(best_c)
        if (best[0] - gx) ** 2 + (best[1] - gy) ** 2 <= gr2:
            goal_node = n
    if goal_node >= 0:
        leaf, reached = goal_node, True
    else:
        S = np.asarray(states)
        leaf, reached = int(np.argmin((S[:, 0] - gx) ** 2 + (S[:, 1] - gy) ** 2)), False
    path_s, path_a = [states[leaf]], []
    node = leaf
    while parent[node] >= 0:
        path_a.append(action[node])
        node = parent[node]
        path_s.append(states[node])
    path_s.reverse()
    path_a.reverse()
    acts = np.asarray(path_a, dtype=float).reshape(-1, 2)
    return NominalTrajectory(np.asarray(path_s), acts, reached, flags={"no_goal_found": not reached})


def reroot(traj: NominalTrajectory, start, model) -> NominalTrajectory | None:
    """Replay the action tail after the first action from ``start`` with zero noise."""
    if traj is None or len(traj) <= 1:
        return None
    env = model.env
    s = np.asarray(start, dtype=float)
    states, acts = [s], []
    reached = bool(in_goal(s, env))
    for a in traj.actions[1:]:
        if reached:
            break
        s = model.clip_state(model.dynamics(s, a, np.zeros(2)))
        if bool(collides(s, env)):
            break
        states.append(s)
        acts.append(a)
        reached = bool(in_goal(s, env))
    if not acts:
        return None
    return NominalTrajectory(np.asarray(states), np.asarray(acts), reached, flags={"rerooted": True})


def mhfr_plan(belief: GaussianBelief, model, k_trees: int = 2, depth_cap: int = 60,
              retained: NominalTrajectory | None = None, rng=None, nodes: int = 300, goal_bias: float = 0.2):
    """Pick the first action of the best-scoring nominal trajectory.

    Candidates are the branches of ``k_trees`` independent RRTs grown from
    the belief mean, plus ``retained`` re-rooted at the mean.  Returns
    ``(action, best trajectory)``; the trajectory's ``flags`` record
    ``no_goal_found`` and ``start_in_collision``.
    """
    rng = np.random.default_rng() if rng is None else rng
    start = model.clip_state(belief.mean)
    flags = {}
    if bool(collides(start, model.env)):
        flags["start_in_collision"] = True
    candidates = []
    for child in rng.spawn(k_trees):
        candidates.append(grow_rrt(model, start, child, nodes, goal_bias, depth_cap))
    re = reroot(retained, start, model)
    if re is not None:
        candidates.append(re)
    for c in candidates:
        c.score = score_trajectory(c, model, belief)
    scores = np.array([c.score for c in candidates])
    best = candidates[int(np.argmax(scores))]
    best.flags.update(flags)
    if len(best) == 0:
        return np.zeros(2), best
    return best.actions[0].copy(), best
