"""
Switching between a linearized and a general planner
=====================================================

Runs a handful of maze episodes with the tree-search planner, the
trajectory-sampling planner and the switching planner that picks one of
them by the local SNM value.  Budgets are far below the experiment
configs, and the goal lies about 70 steps away at top speed, so every
episode here ends at the 50-step cap; the point is the dispatch pattern.
"""

import numpy as np

from snmplan.models import bundled_scenario
from snmplan.planners import PlannerSpec, run_episode_with_planner
from snmplan.pomdp import ParticleBelief
from snmplan.snm import approximate_snm, build_lookup_table

############################################################
# A small SNM table for the maze at one noise level

scenario = bundled_scenario("maze").with_noise(0.038)
table = build_lookup_table(scenario.model(), np.array(scenario.start_state), 60, n=2000, seed=0)
summary = table.summary()
print(f"table states {summary['states']}, mean SNM {summary['snm']:.3f}")

############################################################
# Three planners on the same episode seeds
#
# The threshold sits just above the table value at the start, so the
# switching planner starts with the trajectory sampler and hands over to
# tree search wherever the local SNM is higher.

start = ParticleBelief.point(scenario.start_state, 50)
threshold = approximate_snm(start, table) + 0.005
specs = {
    "mcts": PlannerSpec(type="mcts", budget=40, depth=15),
    "mhfr": PlannerSpec(type="mhfr", nodes=60, depth=15, k_trees=1),
    "snm": PlannerSpec(type="snm", budget=40, nodes=60, depth=15, k_trees=1, threshold=threshold),
}
for name, spec in specs.items():
    records = [run_episode_with_planner(scenario, spec, seed, max_steps=50, table=table) for seed in range(2)]
    returns = [r.discounted_return for r in records]
    line = f"{name:>5}: mean return {np.mean(returns):8.2f}, outcomes {[r.outcome for r in records]}"
    if name == "snm":
        line += f", general solver share {np.mean([r.general_fraction for r in records]):.2f}"
    print(line)
