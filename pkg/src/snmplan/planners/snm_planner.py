"""Threshold switching between MHFR and MCTS, and the closed-loop episode runner."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ..models import COLLISION_PENALTY, Scenario, in_goal
from ..pomdp import ParticleBelief, belief_moments, belief_update_pf
from ..snm import SnmLookupTable, approximate_snm
from .mcts import action_index, mcts_plan, subtree_after
from .mhfr import mhfr_plan

PLANNER_TYPES = ("mcts", "mhfr", "snm", "scripted")


@dataclass(frozen=True)
class PlannerSpec:
    """Planner settings; budgets are iteration and node counts, not seconds."""

    type: str = "snm"
    budget: int = 150
    k_trees: int = 2
    threshold: float = 0.5
    nodes: int = 150
    depth: int = 30
    particles: int = 200
    script: tuple = ()

    def __post_init__(self):
        if self.type not in PLANNER_TYPES:
            raise ValueError(f"unknown planner type {self.type!r}")
        if self.budget < 1 or self.k_trees < 1 or self.particles < 1:
            raise ValueError("planner budgets must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerSpec":
        known = {k: d[k] for k in ("type", "budget", "k_trees", "threshold", "nodes", "depth", "particles") if k in d}
        if "script" in d:
            known["script"] = tuple(tuple(a) for a in d["script"])
        return cls(**known)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["script"] = [list(a) for a in self.script]
        return d


@dataclass
class PlannerState:
    """What a planner carries from one step to the next."""

    tree: object = None
    trajectory: object = None
    last_solver: str = ""


def snm_planner_step(belief: ParticleBelief, table: SnmLookupTable, threshold: float, spec: PlannerSpec,
                     state: PlannerState, model, rng):
    """One decision: ``MHFR`` when the local SNM estimate is below ``threshold``, else MCTS."""
    t0 = time.perf_counter()
    psi = approximate_snm(belief, table)
    t_a = time.perf_counter() - t0
    if psi < threshold:
        action = _mhfr_step(belief, spec, state, model, rng)
        solver = "mhfr"
    else:
        action = _mcts_step(belief, spec, state, model, rng)
        solver = "mcts"
    return action, {"snm": psi, "solver": solver, "t_a": t_a}


def _mhfr_step(belief, spec, state, model, rng):
    action, traj = mhfr_plan(belief_moments(belief), model, spec.k_trees, spec.depth * 2, state.trajectory, rng,
                             spec.nodes)
    state.trajectory = traj
    state.tree = None
    state.last_solver = "mhfr"
    return action


def _mcts_step(belief, spec, state, model, rng):
    tree = state.tree if state.last_solver == "mcts" else None
    action, root = mcts_plan(belief, model, spec.budget, tree, rng, max_depth=spec.depth)
    state.tree = root
    state.last_solver = "mcts"
    return action


@dataclass
class EpisodeRecord:
    discounted_return: float = 0.0
    steps: int = 0
    outcome: str = "timeout"
    diagnostics: list = field(default_factory=list)

    @property
    def general_fraction(self) -> float:
        used = [d["solver"] for d in self.diagnostics if "solver" in d]
        return float(np.mean([s == "mcts" for s in used])) if used else math.nan

    @property
    def mean_snm(self) -> float:
        vals = [d["snm"] for d in self.diagnostics if "snm" in d]
        return float(np.mean(vals)) if vals else math.nan


def run_episode_with_planner(scenario: Scenario, spec: PlannerSpec, seed, max_steps: int | None = None,
                             table: SnmLookupTable | None = None, model=None) -> EpisodeRecord:
    """Closed loop: plan, act on the hidden state, observe, update the particle belief."""
    model = model or scenario.model()
    n_steps = scenario.max_steps if max_steps is None else max_steps
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    world_rng, plan_rng, pf_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    if spec.type == "snm" and table is None:
        raise ValueError("the switching planner needs an SNM table")
    state = np.asarray(scenario.start_state, dtype=float)
    belief = ParticleBelief.point(state, spec.particles)
    pstate = PlannerState()
    rec = EpisodeRecord()
    disc = 1.0
    for t in range(n_steps):
        diag = {}
        if spec.type == "snm":
            action, diag = snm_planner_step(belief, table, spec.threshold, spec, pstate, model, plan_rng)
        elif spec.type == "mcts":
            action = _mcts_step(belief, spec, pstate, model, plan_rng)
            diag = {"solver": "mcts"}
        elif spec.type == "mhfr":
            action = _mhfr_step(belief, spec, pstate, model, plan_rng)
            diag = {"solver": "mhfr"}
        else:
            action = np.asarray(spec.script[t] if t < len(spec.script) else (0.0, 0.0), dtype=float)
        if table is not None and "snm" not in diag:
            diag["snm"] = approximate_snm(belief, table)
        nxt, obs, r, terminal = model.step(state, action, world_rng)
        rec.discounted_return += disc * r
        disc *= model.gamma
        rec.steps += 1
        diag.update({"action": np.asarray(action).tolist(), "reward": float(r)})
        rec.diagnostics.append(diag)
        state = nxt
        if terminal:
            rec.outcome = "goal" if bool(in_goal(nxt, model.env)) else "collision"
            break
        belief = belief_update_pf(belief, action, obs, model, spec.particles, pf_rng)
        if pstate.last_solver == "mcts":
            pstate.tree = subtree_after(pstate.tree, action_index(model, action), obs, model)
    if rec.outcome == "timeout" and any(d.get("reward") == COLLISION_PENALTY for d in rec.diagnostics):
        rec.outcome = "collision"
    return rec

