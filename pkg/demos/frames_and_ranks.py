"""
Adapted frames, ranks and characteristic directions
===================================================

For every built-in we build the adapted frame at a few states, check its
invariants, and compare the characteristic kernel with the growth of D under
brackets.
"""

import numpy as np

from nhcartan.constraint import adapted_frame, characteristic_kernel, omega_ab_rank
from nhcartan.geometry import derived_flag
from nhcartan.scenarios import builtin, builtin_names

print(f"{'scenario':<30} {'n':>2} {'m':>2} {'flag':<12} {'ker':>3} {'rank':>4} {'worst invariant':>16}")
for name in builtin_names():
    system = builtin(name).system
    states = system.sample_states(32, seed=0)
    worst = 0.0
    dims, ranks = set(), set()
    for st in states:
        fr = adapted_frame(system, st)
        worst = max(worst, max(fr.invariant_residuals().values()))
        dims.add(characteristic_kernel(system, st, frame=fr).shape[1])
        ranks.add(omega_ab_rank(fr))
    flag = derived_flag(system.distribution, states[0].q)
    print(f"{name:<30} {system.n:>2} {system.m:>2} {str(flag):<12} {str(sorted(dims)):>3} "
          f"{str(sorted(ranks)):>4} {worst:>16.2e}")

# %%
# The omega_ab block on the rolling disk vanishes identically, so the whole
# complement is characteristic even though D is bracket generating.

disk = builtin("vertical_rolling_disk").system
fr = adapted_frame(disk, disk.sample_states(1, seed=3)[0])
print("rolling disk omega_ab:\n", np.round(fr.omega_ab, 14))
