"""
Depth piling up against the opposite side of the book
=====================================================

The same kind of ask band, but now the best bid at S = 0 acts as a wall.
The touch runs into it, stops, and pressure builds at the stop.
"""

import numpy as np

from lobflow.analysis import steady_distance
from lobflow.cli import load_config
from lobflow.pde import find_touch, run

cfg = load_config("fig6_limited")
params = cfg.params()
traj = run(cfg.initial_profile(), params, cfg.boundary_conditions(), cfg.solver_config())

# touch position over time: it reaches the wall early and stays there
for t, s in zip(traj.times[::40], traj.touch[::40]):
    print(f"t = {t:7.2f}   touch = {s:.4f}")

# where is the pressure largest in each snapshot?
for snap in traj.snapshots:
    p = params.theta * snap.h
    print(f"t = {snap.t:6.1f}  touch = {find_touch(snap):.3f}  max pressure at S = {snap.centers[np.argmax(p)]:.3f}"
          f"  distance to square-root book = {steady_distance(snap):.4f}")
