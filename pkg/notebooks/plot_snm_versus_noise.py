"""
Non-linearity of the car model under growing noise
==================================================

Builds small SNM tables for the empty and maze scenarios at each noise
level and prints the mean transition and observation components next to
the Gaussianity-based MoNG.  Budgets are cut down so the script runs in
a few minutes; ``snmplan table measure`` does the full-size version.
"""

import numpy as np

from snmplan.harness import NOISE_GRID, ScenarioConfig, measure_sweep

############################################################
# A sweep over the shared noise grid
#
# Every level gets its own RRT-sampled table.  ``mong_states`` limits the
# slower MoNG estimate to the first few table states.

rows = {}
for name in ("empty", "maze"):
    config = ScenarioConfig(scenario=name, noise_levels=list(NOISE_GRID), planners=[], seed=0)
    rows[name] = measure_sweep(config, nodes=300, samples=2000, mong_states=5)

############################################################
# SNM and MoNG side by side

print(f"{'e':>7} {'empty SNM':>10} {'maze SNM':>9} {'empty MoNG':>11} {'maze MoNG':>10}")
for e, a, b in zip(NOISE_GRID, rows["empty"], rows["maze"]):
    print(f"{e:7.4f} {a.snm:10.3f} {b.snm:9.3f} {a.mong:11.3f} {b.mong:10.3f}")

############################################################
# Obstacles mostly show up in the transition component
#
# Walls cut the transition distribution, which the linearized model
# cannot do.  The observation component does not see obstacles at all.

gap_t = np.mean([b.psi_t - a.psi_t for a, b in zip(rows["empty"], rows["maze"])])
gap_z = np.mean([b.psi_z - a.psi_z for a, b in zip(rows["empty"], rows["maze"])])
print(f"maze minus empty: transition {gap_t:+.3f}, observation {gap_z:+.3f}")
