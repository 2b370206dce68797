import itertools
import math

import numpy as np
import pytest

from snmplan.models import (
    ACTION_SPACE,
    COLLISION_PENALTY,
    GOAL_REWARD,
    STEP_PENALTY,
    CarModel,
    Environment,
    NoiseSpec,
    Scenario,
    bundled_scenario,
    car_step,
    collides,
    in_goal,
)
from snmplan.planners import PlannerSpec, mcts_plan, mhfr_plan, run_episode_with_planner, snm_planner_step
from snmplan.planners.mcts import subtree_after
from snmplan.planners.mhfr import NominalTrajectory, collision_probability, score_trajectory
from snmplan.planners.snm_planner import PlannerState
from snmplan.pomdp import GaussianBelief, ParticleBelief
from snmplan.snm import SnmLookupTable


class ToyModel:
    """Deterministic 1-D chain: action k moves by ``deltas[k]``; goal when x >= goal."""

    gamma = 0.95

    def __init__(self, deltas, goal, goal_reward=GOAL_REWARD, terminal_after=None):
        self.actions = np.arange(len(deltas), dtype=float)[:, None]
        self.deltas = np.asarray(deltas, dtype=float)
        self.goal = goal
        self.goal_reward = goal_reward
        self.terminal_after = terminal_after

    def step(self, state, action, rng):
        k = int(np.asarray(action).reshape(-1)[0])
        x = float(state[0]) + self.deltas[k]
        if self.terminal_after is not None:
            return np.array([x]), np.array([x]), float(self.goal_reward[k]), True
        done = x >= self.goal - 1e-9
        return np.array([x]), np.array([x]), GOAL_REWARD if done else STEP_PENALTY, done


def corridor_oracle(model, depth):
    """Best discounted return by first action, by exhaustive search."""
    best = {}
    for seq in itertools.product(range(len(model.deltas)), repeat=depth):
        x, total, disc = 0.0, 0.0, 1.0
        for k in seq:
            x += model.deltas[k]
            done = x >= model.goal - 1e-9
            total += disc * (GOAL_REWARD if done else STEP_PENALTY)
            if done:
                break
            disc *= model.gamma
        best[seq[0]] = max(best.get(seq[0], -math.inf), total)
    return best


# MCTS


def test_mcts_single_action():
    model = ToyModel([1.0], goal=10.0)
    action, _ = mcts_plan(ParticleBelief.point([0.0]), model, 5, rng=np.random.default_rng(0))
    assert action[0] == 0.0


def test_mcts_picks_dominant_action():
    model = ToyModel([0.0, 0.0], goal=0.0, goal_reward=[-1.0, 1000.0], terminal_after=1)
    action, root = mcts_plan(ParticleBelief.point([0.0]), model, 50, rng=np.random.default_rng(1))
    assert action[0] == 1.0
    assert root.values[1] == pytest.approx(1000.0)


def test_mcts_corridor_matches_exhaustive_search():
    model = ToyModel((np.arange(9) - 4) / 4.0, goal=3.0)
    oracle = corridor_oracle(model, 5)
    best = max(oracle, key=oracle.get)
    assert best == 8
    action, _ = mcts_plan(ParticleBelief.point([0.0]), model, 10_000, rng=np.random.default_rng(2), max_depth=5)
    assert int(action[0]) == best


def test_mcts_tree_reuse_and_errors():
    model = ToyModel((np.arange(9) - 4) / 4.0, goal=3.0)
    _, root = mcts_plan(ParticleBelief.point([0.0]), model, 300, rng=np.random.default_rng(3), max_depth=5)
    child = subtree_after(root, 8, np.array([1.0]), model)
    assert child is not None and child.visits > 0
    visits = child.visits
    _, again = mcts_plan(ParticleBelief.point([1.0]), model, 20, tree=child, rng=np.random.default_rng(4), max_depth=5)
    assert again is child and child.visits == visits + 20
    with pytest.raises(ValueError):
        mcts_plan(ParticleBelief.point([0.0]), model, 0)


# MHFR


def straight_trajectory(start, steps, model):
    states, acts = [np.asarray(start, dtype=float)], []
    for _ in range(steps):
        acts.append(np.zeros(2))
        states.append(model.clip_state(car_step(states[-1], acts[-1], np.zeros(2))))
    return NominalTrajectory(np.array(states), np.array(acts))


def test_mhfr_accelerates_toward_goal():
    model = CarModel(Environment(), NoiseSpec(0.01, 0.01))
    belief = GaussianBelief([0.3, 0.7, 0.0, 0.0], 1e-6 * np.eye(4))
    action, traj = mhfr_plan(belief, model, k_trees=2, rng=np.random.default_rng(0), nodes=200)
    assert traj.reached_goal
    assert action[0] > 0
    assert ACTION_SPACE.contains(action)


def test_mhfr_scoring_deterministic():
    model = bundled_scenario("maze").model()
    belief = GaussianBelief(bundled_scenario("maze").start_state, 1e-4 * np.eye(4))
    _, traj = mhfr_plan(belief, model, rng=np.random.default_rng(5), nodes=100)
    copy = NominalTrajectory(traj.states.copy(), traj.actions.copy())
    assert score_trajectory(copy, model, belief) == score_trajectory(traj, model, belief)


def mc_collision_rate(traj, gb_cov, env, rng, n=10_000):
    hits = 0.0
    for s in traj.states[1:]:
        pts = np.tile(s, (n, 1))
        pts[:, :2] += rng.multivariate_normal(np.zeros(2), gb_cov[:2, :2], n)
        hits += collides(pts, env).mean()
    return hits


def test_clear_trajectory_scores_higher():
    env = Environment(obstacles=[[-0.1, 0.06, 0.1, 0.3]])
    model = CarModel(env, NoiseSpec(0.038, 0.038))
    cov = np.diag([0.03**2, 0.03**2, 1e-8, 1e-8])
    near = straight_trajectory([-0.4, 0.0, 0.0, 0.1], 20, model)
    clear = straight_trajectory([-0.4, -0.3, 0.0, 0.1], 20, model)
    assert not np.any(collides(near.states, env)) and not np.any(collides(clear.states, env))
    rng = np.random.default_rng(6)
    assert mc_collision_rate(near, cov, env, rng) > mc_collision_rate(clear, cov, env, rng) + 0.5
    s_near = score_trajectory(near, model, GaussianBelief(near.states[0], cov))
    s_clear = score_trajectory(clear, model, GaussianBelief(clear.states[0], cov))
    assert s_clear > s_near


def test_collision_probability_matches_monte_carlo():
    env = Environment(obstacles=[[0.0, 0.0, 0.2, 0.2]])
    gb = GaussianBelief([-0.08, 0.1, 0.0, 0.0], np.diag([0.03**2, 0.05**2, 0.0, 0.0]))
    rng = np.random.default_rng(7)
    pts = np.tile(gb.mean, (20_000, 1))
    pts[:, :2] += rng.normal(0, [0.03, 0.05], (20_000, 2))
    mc = collides(pts, env).mean()
    se = math.sqrt(mc * (1 - mc) / 20_000)
    assert collision_probability(gb, env) == pytest.approx(mc, abs=3 * se + 1e-3)


# switching planner


def constant_table(value, n=4):
    rng = np.random.default_rng(0)
    states = rng.uniform(-0.5, 0.5, (n, 4))
    return SnmLookupTable(states, np.full(n, value), np.zeros(n), [-1, -1, -3.15, -0.2], [1, 1, 3.15, 0.2])


def dispatch(table, threshold):
    sc = bundled_scenario("empty")
    belief = ParticleBelief.point(sc.start_state, 20)
    spec = PlannerSpec(type="snm", budget=5, nodes=30, k_trees=1, depth=5)
    action, diag = snm_planner_step(belief, table, threshold, spec, PlannerState(), sc.model(),
                                    np.random.default_rng(0))
    assert ACTION_SPACE.contains(action)
    return diag


def test_all_zero_table_uses_mhfr():
    for mu in (0.01, 0.5, 0.99):
        assert dispatch(constant_table(0.0), mu)["solver"] == "mhfr"


def test_all_one_table_uses_mcts():
    assert dispatch(constant_table(1.0), 0.5)["solver"] == "mcts"


def test_dispatch_flips_at_threshold():
    table = constant_table(0.3)
    psi = dispatch(table, 0.5)["snm"]
    assert dispatch(table, psi)["solver"] == "mcts"
    assert dispatch(table, np.nextafter(psi, 1.0))["solver"] == "mhfr"


def test_planner_spec_validation():
    with pytest.raises(ValueError):
        PlannerSpec(type="abt")
    spec = PlannerSpec.from_dict({"type": "mcts", "budget": 7})
    assert PlannerSpec.from_dict(spec.to_dict()) == spec


# closed-loop episodes


def test_zero_step_episode():
    rec = run_episode_with_planner(bundled_scenario("maze"), PlannerSpec(type="scripted"), 0, max_steps=0)
    assert rec.discounted_return == 0.0 and rec.steps == 0


def test_scripted_goal_return():
    sc = Scenario(start_state=(0.3, 0.7, 0.0, 0.2), noise=NoiseSpec(0.0, 0.0))
    script = ((0.0, 0.0),) * 20
    s, t = np.array(sc.start_state), 0
    while not bool(in_goal(s, sc.env)):
        s = car_step(s, np.zeros(2), np.zeros(2))
        t += 1
    rec = run_episode_with_planner(sc, PlannerSpec(type="scripted", script=script, particles=10), 0)
    expected = sc.gamma ** (t - 1) * GOAL_REWARD + sum(STEP_PENALTY * sc.gamma**j for j in range(t - 1))
    assert rec.outcome == "goal" and rec.steps == t
    assert rec.discounted_return == pytest.approx(expected)


def test_scripted_wall_ramming_collides():
    env = Environment(obstacles=[[0.2, -1.0, 0.3, 1.0]])
    sc = Scenario(env=env, start_state=(0.0, 0.0, 0.0, 0.2), noise=NoiseSpec(0.0, 0.0))
    rec = run_episode_with_planner(sc, PlannerSpec(type="scripted", script=((1.0, 0.0),) * 10, particles=10), 0)
    assert rec.outcome == "collision"
    assert any(d["reward"] == COLLISION_PENALTY for d in rec.diagnostics)


def test_switching_episode_records_dispatch():
    sc = bundled_scenario("maze")
    spec = PlannerSpec(type="snm", budget=10, nodes=40, k_trees=1, depth=8, particles=50)
    rec = run_episode_with_planner(sc, spec, 3, max_steps=4, table=constant_table(1.0))
    assert rec.general_fraction == 1.0 and rec.mean_snm == pytest.approx(1.0)
    assert all(ACTION_SPACE.contains(np.array(d["action"])) for d in rec.diagnostics)
    with pytest.raises(ValueError):
        run_episode_with_planner(sc, spec, 3, max_steps=1)
