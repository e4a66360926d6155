"""End-to-end acceptance checks, shared by the test suite and ``lobflow golden``.

Each check returns a ``Criterion`` carrying a one-line detail string with the
measured numbers, so a failing line says by how much it failed.
"""
from __future__ import annotations

import functools
import math
import time
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .analysis import collapse, estimate_gamma, fit_height_exponent, fit_touch_exponent, steady_distance
from .cli import load_config
from .core import BookProfile, PhysicalParams, PriceGrid, total_mass
from .exact import farfield_series, parabolic_cap, steady_profile, touch_coefficient_report, touch_series
from .pde import (BoundaryCondition, FluxModel, Location, SolverConfig, Trajectory, find_touch, run,
                  stable_dt, step, zero_flux_pair)
from .similarity import (NoPositiveSolutionError, ShootingConfig, dimensional_profile, farfield_gamma,
                         solve_similarity)

SIMILARITY_GAMMAS = (0.0, 0.5, 1.0, 2.0)


class Criterion(NamedTuple):
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


def _run_config(name):
    cfg = load_config(name)
    initial = cfg.initial_profile()
    start = time.perf_counter()
    traj = run(initial, cfg.params(), cfg.boundary_conditions(), cfg.solver_config())
    return cfg, traj, time.perf_counter() - start


@functools.lru_cache(maxsize=None)
def fig5_run():
    return _run_config("fig5_unlimited")


@functools.lru_cache(maxsize=None)
def fig6_run():
    return _run_config("fig6_limited")


def touch_recovery_law() -> Criterion:
    cfg, traj, secs = fig5_run()
    fit = fit_touch_exponent(traj)
    ok = (cfg.grid().n_cells >= 800 and 0.30 <= fit.exponent <= 0.36
          and fit.r_squared >= 0.995 and secs < 60)
    return Criterion(1, "touch recovery exponent", ok,
                     f"alpha={fit.exponent:.4f} r2={fit.r_squared:.6f} n_cells={cfg.grid().n_cells} "
                     f"runtime={secs:.1f}s (want [0.30,0.36], r2>=0.995, <60s)")


def height_scaling() -> Criterion:
    _, traj, _ = fig5_run()
    fit = fit_height_exponent(traj)
    ok = -0.37 <= fit.exponent <= -0.29
    return Criterion(2, "peak height exponent", ok, f"exponent={fit.exponent:.4f} (want [-0.37,-0.29])")


def cap_l1_errors(n_cells=(200, 400, 800), c_mass=1.0, span=6.0):
    """L1 error at t = 2 of the cap started from the closed form at t = 1."""
    errors = []
    for n in n_cells:
        grid = PriceGrid(-span, span, n)
        traj = run(parabolic_cap(c_mass, 1.0, 0.0, grid), PhysicalParams(), zero_flux_pair(),
                   SolverConfig(t_end=2.0, output_times=(2.0,)))
        exact = parabolic_cap(c_mass, 2.0, 0.0, grid)
        errors.append(float(np.abs(traj.snapshots[-1].h - exact.h).sum() * grid.dx))
    return errors


def cap_golden() -> Criterion:
    start = time.perf_counter()
    errs = cap_l1_errors()
    secs = time.perf_counter() - start
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    ok = min(orders) >= 1.0 and secs < 30
    return Criterion(3, "parabolic cap convergence", ok,
                     "L1=" + ",".join(f"{e:.3e}" for e in errs)
                     + " orders=" + ",".join(f"{o:.2f}" for o in orders) + f" runtime={secs:.1f}s (want >=1, <30s)")


def conservation() -> Criterion:
    grid = PriceGrid(0.0, 8.0, 200)
    x = grid.centers
    # a step band plus a kink: sharp enough to exercise clipping
    h = np.where((x > 2) & (x < 4), 1.0, 0.0) + np.where((x > 5) & (x < 6), 2.0 - np.abs(x - 5.5) * 4, 0.0)
    initial = BookProfile(grid, h)
    traj = run(initial, PhysicalParams(), zero_flux_pair(), SolverConfig(t_end=3.0, record_every=100))
    m0 = total_mass(initial)
    drift = abs(traj.mass[-1] - m0) / m0
    clipped = traj.clipped_mass / m0
    ok = traj.steps >= 10_000 and drift < 1e-10 and clipped < 1e-9
    return Criterion(4, "mass conservation", ok,
                     f"steps={traj.steps} drift={drift:.2e} clipped={clipped:.2e} (want >=1e4, <1e-10, <1e-9)")


def steady_state() -> Criterion:
    a, s_b = 1.0, 4.0
    grid = PriceGrid(0.0, s_b, 200)
    prof = steady_profile(a, s_b, grid)
    bc = (BoundaryCondition.depth(a * math.sqrt(s_b - grid.s_min), Location.TOUCH),
          BoundaryCondition.depth(0.0, Location.DEEP))
    cfg = SolverConfig(t_end=1.0)
    dt = stable_dt(prof, cfg)
    cur = prof
    for _ in range(1000):
        cur = step(cur, PhysicalParams(), bc, cfg, dt)
    drift = float(np.max(np.abs(cur.h - prof.h)))

    _, traj, _ = fig6_run()
    dists = [steady_distance(p) for p in traj.snapshots[-3:]]
    decreasing = dists[0] > dists[1] > dists[2]
    ok = drift < 1e-8 and decreasing
    return Criterion(5, "steady square-root family", ok,
                     f"pinned drift={drift:.2e} (want <1e-8); firm-stop distances "
                     + ",".join(f"{d:.5f}" for d in dists) + " (want decreasing)")


def similarity_bvp() -> Criterion:
    start = time.perf_counter()
    parts = []
    ok = True
    for g in SIMILARITY_GAMMAS:
        prof = solve_similarity(g, ShootingConfig())
        rel = prof.residual / prof.v_max
        est = farfield_gamma(prof)
        # relative 5% has no meaning at gamma = 0; use the same width absolutely
        good_ratio = abs(est - g) <= 0.05 * max(g, 1.0)
        ok &= rel < 1e-6 and good_ratio
        parts.append(f"g={g:g}: res={rel:.1e} tail={est:.4f}")
    try:
        solve_similarity(-0.5)
        rejected = False
    except NoPositiveSolutionError:
        rejected = True
    secs = time.perf_counter() - start
    ok = ok and rejected and secs < 10
    return Criterion(6, "similarity profiles", ok,
                     "; ".join(parts) + f"; gamma=-0.5 rejected={rejected}; runtime={secs:.1f}s")


def series_oracle() -> Criterion:
    ok = True
    for g in (Fraction(0), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(7, 3)):
        ok &= touch_series(g, 1).coeffs[0] == g / 6
        ok &= farfield_series(g, 3).coeffs == (1, g, g * g)
    report = touch_coefficient_report(Fraction(1))
    generated = all(k in report for k in ("linear", "quadratic", "cubic"))
    q, c = report["quadratic"], report["cubic"]
    return Criterion(7, "series coefficients", ok and generated,
                     f"exact leading terms={ok}; gamma=1 quadratic {q['recurrence']} vs printed {q['printed']}, "
                     f"cubic {c['recurrence']} vs printed {c['printed']}")


def cap_collapse_control(times=(2.0, 4.0, 8.0)):
    grid = PriceGrid(-10.0, 10.0, 800)
    snaps = [parabolic_cap(1.0, t, 0.0, grid) for t in times]
    return collapse(Trajectory.from_snapshots(snaps), times).max_distance


def self_similar_collapse() -> Criterion:
    cfg, traj, _ = fig5_run()
    times = cfg["analysis.collapse"]
    d5 = collapse(traj, times).max_distance
    dc = cap_collapse_control()
    ok = d5 < 0.05 and dc < 1e-3
    return Criterion(8, "self-similar collapse", ok,
                     f"recovery run={d5:.2e} (want <0.05) cap={dc:.2e} (want <1e-3)")


def manufactured_gamma_trajectory(gamma=1.0, s_init=10.0, times=None):
    prof = solve_similarity(gamma)
    grid = PriceGrid(0.0, 40.0, 8000)
    times = np.linspace(1.0, 8.0, 41) if times is None else times
    snaps = [dimensional_profile(prof, t, s_init - gamma * t ** (1 / 3), grid=grid) for t in times]
    return Trajectory.from_snapshots(snaps, t_event=0.0, s_event=s_init)


def round_trip_gamma() -> Criterion:
    est = estimate_gamma(manufactured_gamma_trajectory(1.0))
    return Criterion(9, "round-trip touch speed", abs(est - 1.0) <= 0.05, f"estimate={est:.4f} (want 1 +- 0.05)")


def firm_stop() -> Criterion:
    cfg, traj, _ = fig6_run()
    t_end = traj.times[-1]
    late = traj.times >= traj.t_event + 0.5 * (t_end - traj.t_event)
    s = traj.touch[late]
    dx = cfg.grid().dx
    moved = float(np.nanmax(s) - np.nanmin(s))
    final = traj.snapshots[-1]
    touch = find_touch(final)
    touch_cell = min(int((touch - final.grid.s_min) / dx), final.grid.n_cells - 1)
    pressure = cfg.params().theta * final.h
    peak_cell = int(np.argmax(pressure))
    ok = moved < dx and peak_cell == touch_cell
    return Criterion(10, "firm stop pile-up", ok,
                     f"late touch range={moved:.2e} (dx={dx:g}); pressure max cell={peak_cell}, touch cell={touch_cell}")


def microstructure_reduction() -> Criterion:
    grid = PriceGrid(0.0, 10.0, 200)
    initial = parabolic_cap(1.0, 1.0, 5.0, grid)
    worst = 0.0
    for beta in (0.5, 1.0, 2.0):
        params = PhysicalParams(beta=beta, u0=0.0)
        factor = params.theta / (2 * params.rho * (beta + 1))
        canon = run(initial, params, zero_flux_pair(), SolverConfig(t_end=2.0, output_times=(2.0,)))
        t_micro = 1.0 + 1.0 / factor
        micro = run(initial, params, zero_flux_pair(),
                    SolverConfig(t_end=t_micro, output_times=(t_micro,), flux_model=FluxModel.MICROSTRUCTURE))
        worst = max(worst, float(np.max(np.abs(canon.snapshots[-1].h - micro.snapshots[-1].h))))
    return Criterion(11, "microstructure flux reduction", worst < 1e-8, f"max Linf gap={worst:.2e} (want <1e-8)")


CRITERIA = (touch_recovery_law, height_scaling, cap_golden, conservation, steady_state, similarity_bvp,
            series_oracle, self_similar_collapse, round_trip_gamma, firm_stop, microstructure_reduction)


def run_all(verbose=True):
    results = []
    for check in CRITERIA:
        res = check()
        if verbose:
            print(res.line(), flush=True)
        results.append(res)
    return results
