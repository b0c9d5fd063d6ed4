"""
Cahn-Hilliard approaching the Stefan flow
=========================================

On the convex branch of the double well nothing wrinkles, and the
Cahn-Hilliard solutions converge to the Stefan solution as eps shrinks.
The table lists the worst H^-1 error over [0, T], the squared slope error
integrated in time, and energy errors at the first and last checkpoints.
Every column should shrink down the table. Takes about half a minute.
"""

import numpy as np

from cahnstefan import PeriodicField, build_double_well
from cahnstefan.analysis import convergence_study, convergence_verdict
from cahnstefan.dynamics import SolverConfig

model = build_double_well()
target = PeriodicField.from_function(lambda x: 1.6 + 0.3 * np.sin(2 * np.pi * x))

# a small common step keeps time error below the eps effect at T/5
table = convergence_study(model, target, (0.1, 0.05, 0.025), SolverConfig(tau=5e-7), T_end=0.01, workers=3)

print(f"{'eps':>6} {'sup H^-1':>10} {'slope L2t':>10} {'E(T/5)':>10} {'E(T)':>10} {'seconds':>8}")
for r in table.rows:
    print(f"{r.eps:6.3f} {r.sup_hminus1:10.3e} {r.slope_l2t:10.3e} {r.energy_err[0]:10.3e} "
          f"{r.energy_err[-1]:10.3e} {r.runtime_s:8.1f}")
print(convergence_verdict(table).summary())
