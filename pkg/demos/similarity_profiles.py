"""
Self-similar book shapes
========================

Profiles v(s) of the reduced equation for several touch speeds gamma.
Each starts like sqrt(s) at the touch, peaks, and decays like 1/s.
"""

import numpy as np

from lobflow.similarity import farfield_gamma, gamma_from_peak_ratio, peak_ratio, solve_similarity

for gamma in (0.0, 0.5, 1.0, 2.0, 4.0):
    prof = solve_similarity(gamma)
    print(f"gamma = {gamma:3.1f}  peak at s = {prof.s_peak:.4f}  v_max = {prof.v_max:.4f}"
          f"  residual = {prof.residual:.1e}  tail estimate of gamma = {farfield_gamma(prof):.4f}")

# a coarse table for plotting elsewhere
prof = solve_similarity(1.0)
s = np.array([0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
for si, vi in zip(s, prof(s)):
    print(f"{si:6.2f}  {vi:.6f}")

# the ratio gamma / s_peak does not depend on length units, and can be inverted
for g in (0.25, 1.0, 3.0):
    r = peak_ratio(g)
    print(f"gamma {g}: ratio {r:.5f} -> recovered {gamma_from_peak_ratio(r):.6f}")

# retreating touches have no positive profile
try:
    solve_similarity(-0.5)
except ValueError as exc:
    print("gamma = -0.5:", exc)
