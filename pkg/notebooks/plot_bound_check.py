"""
Value-loss bound on small discrete problems
===========================================

Solves random three-state problems exactly by plan enumeration, perturbs
their transition and observation rows, and compares the value lost by
planning on the perturbed model against the SNM-based bound.
"""

import numpy as np

from snmplan.harness import perturb_pomdp, random_pomdp, verify_bounds

############################################################
# One problem, increasing perturbation weights

rng = np.random.default_rng(0)
dp = random_pomdp(3, 2, 2, rng)
print(f"{'weight':>6} {'SNM':>6} {'value gap':>10} {'bound':>8} {'alpha gap':>10} {'alpha bound':>12}")
for eps in (0.0, 0.05, 0.1, 0.2, 0.4):
    rep = verify_bounds(dp, perturb_pomdp(dp, eps, rng), depth=3)
    print(f"{eps:6.2f} {rep.snm:6.3f} {rep.value_gap:10.4f} {rep.value_bound + rep.truncation:8.3f} "
          f"{rep.alpha_gap:10.4f} {rep.alpha_bound:12.3f}")

############################################################
# The bound is loose
#
# It scales with the reward range over the squared discount gap, while
# the actual loss at depth three is a small fraction of the reward range.
