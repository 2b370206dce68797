"""Online belief-tree search with UCB1 and tree reuse.

Nodes are reached by (action index, observation bin) edges.  Each
iteration samples a state from the root particles, descends with UCB1,
expands one new node and finishes with a uniformly random rollout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..pomdp import ParticleBelief

UCB_C = 1000.0
OBS_BINS = 5
MAX_NODE_PARTICLES = 500


@dataclass
class BeliefTreeNode:
    n_actions: int
    visits: int = 0
    counts: np.ndarray = None
    values: np.ndarray = None
    children: dict = field(default_factory=dict)
    particles: list = field(default_factory=list)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.n_actions, dtype=np.int64)
        if self.values is None:
            self.values = np.zeros(self.n_actions)

    def best_action(self) -> int:
        """Highest mean value among tried actions; lowest index on ties."""
        tried = self.counts > 0
        if not np.any(tried):
            return 0
        return int(np.argmax(np.where(tried, self.values, -np.inf)))

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children.values())


class ObservationBinner:
    """Equal-width cells of the normalized observation box.

    Uniform quantiles of the box coincide with equal widths.  Models
    without an observation box are keyed by rounded values.
    """

    def __init__(self, model, bins: int = OBS_BINS):
        space = getattr(model, "obs_space", None)
        self.bins = bins
        self.lower = None if space is None else np.asarray(space.lower, dtype=float)
        self.width = None if space is None else np.asarray(space.width, dtype=float)

    def __call__(self, obs) -> tuple:
        if self.lower is None:
            return tuple(np.round(np.asarray(obs, dtype=float).reshape(-1), 6).tolist())
        key = []
        for o, lo, w in zip(obs, self.lower, self.width):
            k = int((o - lo) / w * self.bins)
            key.append(min(self.bins - 1, max(0, k)))
        return tuple(key)


class GenericStepper:
    """Scalar stepping through the vectorized model interface."""

    def __init__(self, model, rng):
        self.model = model
        self.rng = rng
        self.acts = np.atleast_2d(model.actions)

    def step(self, s, ai):
        nxt, obs, r, terminal = self.model.step(np.asarray(s, dtype=float), self.acts[ai], self.rng)
        self._obs = obs
        return tuple(np.asarray(nxt, dtype=float).reshape(-1).tolist()), float(r), bool(terminal)

    def observe(self, s):
        return tuple(np.asarray(self._obs, dtype=float).reshape(-1).tolist())


def make_stepper(model, rng):
    if hasattr(model, "fast_stepper"):
        return model.fast_stepper(rng)
    return GenericStepper(model, rng)


def _ucb(node: BeliefTreeNode, c: float) -> int:
    untried = np.flatnonzero(node.counts == 0)
    if untried.size:
        return int(untried[0])
    bonus = c * np.sqrt(math.log(node.visits) / node.counts)
    return int(np.argmax(node.values + bonus))


def _rollout(stepper, s, depth, max_depth, n_actions, gamma, rng) -> float:
    total, disc = 0.0, 1.0
    for _ in range(depth, max_depth):
        s, r, terminal = stepper.step(s, int(rng.integers(n_actions)))
        total += disc * r
        if terminal:
            break
        disc *= gamma
    return total


def _simulate(node, s, depth, ctx) -> float:
    if depth >= ctx["max_depth"]:
        return 0.0
    ai = _ucb(node, ctx["c"])
    stepper = ctx["stepper"]
    s2, r, terminal = stepper.step(s, ai)
    if terminal:
        q = r
    else:
        key = (ai, ctx["binner"](stepper.observe(s2)))
        child = node.children.get(key)
        if child is None:
            child = BeliefTreeNode(node.n_actions)
            node.children[key] = child
            tail = _rollout(stepper, s2, depth + 1, ctx["max_depth"], node.n_actions, ctx["gamma"], ctx["rng"])
        else:
            tail = _simulate(child, s2, depth + 1, ctx)
        if len(child.particles) < MAX_NODE_PARTICLES:
            child.particles.append(s2)
        child.visits += 1
        q = r + ctx["gamma"] * tail
    node.counts[ai] += 1
    node.values[ai] += (q - node.values[ai]) / node.counts[ai]
    return q


def mcts_plan(belief: ParticleBelief, model, budget: int, tree: BeliefTreeNode | None = None, rng=None,
              c: float = UCB_C, max_depth: int = 30, obs_bins: int = OBS_BINS, stepper=None):
    """Run ``budget`` iterations from ``belief``; returns ``(action, root)``.

    Pass ``subtree_after(root, action_index, obs, model)`` as ``tree`` on
    the next step to reuse the statistics gathered below that edge.
    """
    if belief is None or len(belief) == 0:
        raise ValueError("belief must contain particles")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    actions = np.atleast_2d(model.actions)
    root = tree if tree is not None else BeliefTreeNode(actions.shape[0])
    ctx = {
        "c": c,
        "gamma": model.gamma,
        "max_depth": max_depth,
        "stepper": stepper or make_stepper(model, rng),
        "binner": ObservationBinner(model, obs_bins),
        "rng": rng,
    }
    particles = belief.particles
    idx = rng.choice(len(belief), size=budget, p=belief.weights)
    for i in idx:
        root.visits += 1
        _simulate(root, tuple(particles[i].tolist()), 0, ctx)
    ai = root.best_action()
    return actions[ai].copy(), root


def action_index(model, action) -> int:
    acts = np.atleast_2d(model.actions)
    return int(np.argmin(np.sum((acts - np.asarray(action, dtype=float)) ** 2, axis=1)))


def subtree_after(root: BeliefTreeNode | None, action_index: int, obs, model, obs_bins: int = OBS_BINS):
    """Child reached by ``(action, observation bin)``, or ``None`` when unexplored."""
    if root is None:
        return None
    return root.children.get((action_index, ObservationBinner(model, obs_bins)(np.asarray(obs).reshape(-1))))
