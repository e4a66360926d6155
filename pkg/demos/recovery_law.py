"""
Recovery of an ask book after a large market order
==================================================

A uniform band of asks is hit by a market order that removes the front of
the band.  Depth then flows back towards the gap and the touch advances
roughly like t^(1/3), while the peak depth falls like t^(-1/3).
"""

import numpy as np

from lobflow.analysis import collapse, estimate_gamma, fit_height_exponent, fit_touch_exponent
from lobflow.cli import load_config
from lobflow.pde import run

# the built-in scenario: band on [29, 31], one unit of liquidity taken
cfg = load_config("fig5_unlimited")
initial = cfg.initial_profile()
print("touch after the market order:", initial.centers[np.argmax(initial.h > 0)])

traj = run(initial, cfg.params(), cfg.boundary_conditions(), cfg.solver_config())
print("steps taken:", traj.steps)

# log-log fits of touch displacement and peak height against time
touch = fit_touch_exponent(traj)
height = fit_height_exponent(traj)
print(f"touch exponent  {touch.exponent:.4f}  (r^2 = {touch.r_squared:.5f})")
print(f"height exponent {height.exponent:.4f}")

# rescaled snapshots should land on one curve
rep = collapse(traj, cfg["analysis.collapse"])
print(f"collapse distance over t = {rep.times}: {rep.max_distance:.2e}")

# how fast is the touch moving, in units of the touch-to-peak distance?
print("touch / peak ratio:", round(estimate_gamma(traj, normalization="peak"), 4))
print("deep-book gamma:   ", estimate_gamma(traj))

# mass is only moved around, never created
print("relative mass change:", abs(traj.mass[-1] - traj.mass[0]) / traj.mass[0])
