"""
How far a pair of values is from the relaxed potential
======================================================

psi(a, b) is the largest amount by which W dips below its chord between a
and b. It vanishes when W stays above the chord, as on a concave stretch or
across the double well from -1 to 1, and it is positive once the segment
reaches into a convex region. omega(rho) is the smallest psi over
segments of length at least rho that stick out of the rho-neighbourhood of
the unstable set. It controls how sharply oscillations must stay inside
that set.
"""

import numpy as np

from cahnstefan import build_double_well
from cahnstefan.potential import omega, psi

model = build_double_well()

for a, b in ((-0.4, 0.4), (-1.0, 1.0), (0.5, 1.5), (1.0, 2.0), (1.5, 2.5)):
    print(f"psi({a:+.1f}, {b:+.1f}) = {psi(model, a, b):.6f}")

print()
for rho in np.geomspace(0.05, 1.0, 6):
    print(f"omega({rho:.3f}) on [-2, 2] = {omega(model, rho, 2.0):.5f}")
