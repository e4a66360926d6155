"""Post-processing of trajectories: power-law fits, self-similar collapse,
touch-speed estimation and distance to the steady square-root family.

Touch speed
    A similarity solution has S0(t) = S_init + sigma t^(1/3) and a touch to
    peak distance L(t) = L0 t^(1/3).  Substituting h = H v(s) into the
    transport equation with H = H0 t^(-1/3), L = L0 t^(1/3), H0 = L0^2, gives
    3 (v^2)'' + (s + sigma/L0) v' + v = 0, so on an ask book (touch moving to
    lower prices when it advances) the touch speed in units of L is
    r = -sigma / L0 >= 0 for an advancing touch.  Measuring L from the peak
    makes the similarity unit s_peak = 1; ``estimate_gamma`` converts r to the
    deep-book normalisation (v_inf = 1) used by ``solve_similarity`` unless
    asked for the raw ratio.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .core import BookProfile, Side, total_mass
from .exact import fix_mass, steady_profile
from .pde import Trajectory, find_touch, peak_of
from .similarity import gamma_from_peak_ratio

log = logging.getLogger(__name__)


class UnfittableError(ValueError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    fit_window: tuple
    r_squared: float
    residuals: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class CollapseReport:
    times: tuple
    s_grid: np.ndarray
    profiles: np.ndarray
    distances: np.ndarray
    max_distance: float


def default_window(traj: Trajectory, skip=0.2):
    """Drop the first ``skip`` fraction of the run (initial kink smoothing)."""
    t0, t1 = traj.t_event, float(traj.times[-1])
    return (t0 + skip * (t1 - t0), t1)


def _loglog_fit(x, y, window):
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(coef[0]), float(math.exp(coef[1])), tuple(window),
                      min(max(r2, 0.0), 1.0), res, int(x.size))


def _window_mask(traj, window, t_origin):
    lo, hi = window
    if not lo < hi:
        raise ValueError("fit window needs t_lo < t_hi")
    t = traj.times
    return (t >= lo) & (t <= hi) & (t > t_origin)


def fit_touch_exponent(traj: Trajectory, window=None, t_origin=None, s_origin=None,
                       min_samples: int = 8) -> ScalingFit:
    """Fit |S0(t) - S0(t_origin)| = A (t - t_origin)^alpha over ``window``.

    The origin defaults to the liquidity-taking event the trajectory starts
    from (``traj.t_event``, ``traj.s_event``).
    """
    window = window or default_window(traj)
    t_origin = traj.t_event if t_origin is None else t_origin
    s_origin = traj.s_event if s_origin is None else s_origin
    m = _window_mask(traj, window, t_origin) & np.isfinite(traj.touch)
    t, d = traj.times[m] - t_origin, traj.touch[m] - s_origin
    diag = {"n_samples": int(m.sum()), "window": tuple(window)}
    if t.size < min_samples:
        raise UnfittableError(f"{t.size} touch samples in window, need {min_samples}", diag)
    steps = np.diff(d)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(d))))
    if not (np.all(steps > tol) or np.all(steps < -tol)) or np.any(np.abs(d) <= tol):
        diag["displacement_range"] = (float(d.min()), float(d.max()))
        raise UnfittableError("touch displacement is not strictly monotone in the window", diag)
    return _loglog_fit(t, np.abs(d), window)


def fit_height_exponent(traj: Trajectory, window=None, t_origin=None, min_samples: int = 8) -> ScalingFit:
    window = window or default_window(traj)
    t_origin = traj.t_event if t_origin is None else t_origin
    m = _window_mask(traj, window, t_origin) & np.isfinite(traj.peak) & (traj.peak > 0)
    if m.sum() < min_samples:
        raise UnfittableError(f"{int(m.sum())} peak samples in window, need {min_samples}",
                              {"n_samples": int(m.sum())})
    return _loglog_fit(traj.times[m] - t_origin, traj.peak[m], window)


def rescale(profile: BookProfile, s_grid: np.ndarray) -> np.ndarray:
    """Snapshot mapped to (S - S0)/L with L = peak - touch and unit peak height."""
    frame = profile.to_solver_frame()
    s0 = find_touch(frame)
    if s0 is None:
        raise ValueError(f"empty book at t={profile.t}")
    x_peak, h_peak = peak_of(frame)
    L = x_peak - s0
    if not L > 0:
        raise ValueError(f"peak does not lie beyond the touch at t={profile.t}")
    s = (frame.centers - s0) / L
    # include the touch itself as a zero so interpolation sees the front
    s_ext = np.concatenate([[0.0], s[s > 0]])
    v_ext = np.concatenate([[0.0], frame.h[s > 0] / h_peak])
    return np.interp(s_grid, s_ext, v_ext, left=0.0, right=0.0)


def collapse(traj: Trajectory, times, s_extent: float = 3.0, n_common: int = 601) -> CollapseReport:
    times = tuple(float(t) for t in times)
    if len(times) < 3:
        raise ValueError("collapse needs at least 3 times")
    snaps = [traj.snapshot_at(t) for t in times]
    s_grid = np.linspace(0.0, s_extent, n_common)
    prof = np.array([rescale(p, s_grid) for p in snaps])
    n = len(times)
    dist = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        scale = max(np.linalg.norm(prof[i]), np.linalg.norm(prof[j]))
        dist[i, j] = dist[j, i] = np.linalg.norm(prof[i] - prof[j]) / scale
    return CollapseReport(times, s_grid, prof, dist, float(dist.max()))


def touch_speed_ratio(traj: Trajectory, window=None, t_origin=None) -> float:
    """-sigma / L0 from S0 = S_init + sigma tau and L = L0 tau, tau = (t - t_origin)^(1/3)."""
    window = window or default_window(traj)
    t_origin = traj.t_event if t_origin is None else t_origin
    m = _window_mask(traj, window, t_origin) & np.isfinite(traj.touch) & np.isfinite(traj.peak_at)
    if m.sum() < 3:
        raise UnfittableError(f"{int(m.sum())} samples in window, need 3", {"n_samples": int(m.sum())})
    sgn = 1.0 if traj.side is Side.ASK else -1.0
    tau = np.cbrt(traj.times[m] - t_origin)
    s0 = sgn * traj.touch[m]
    L = sgn * (traj.peak_at[m] - traj.touch[m])
    A = np.vstack([tau, np.ones_like(tau)]).T
    (sigma, _), *_ = np.linalg.lstsq(A, s0, rcond=None)
    L0 = float(np.dot(L, tau) / np.dot(tau, tau))
    if not L0 > 0:
        raise UnfittableError("peak does not sit beyond the touch", {"L0": L0})
    return float(-sigma / L0)


def estimate_gamma(traj: Trajectory, window=None, t_origin=None, normalization: str = "deep_book") -> float:
    """Dimensionless touch speed, positive when the touch advances.

    ``normalization="peak"`` returns the raw ratio of touch speed to peak
    offset.  The default maps it onto the deep-book family of
    ``solve_similarity``; a compact profile (ratio >= 1, e.g. the parabolic
    cap) lies beyond that family and gives ``inf``.  Retreating touches give
    the negative raw ratio in either mode.
    """
    r = touch_speed_ratio(traj, window, t_origin)
    if normalization == "peak":
        return r
    if normalization != "deep_book":
        raise ValueError(f"unknown normalization {normalization!r}")
    if r < 0:
        log.warning("retreating touch (ratio %.4g): outside the gamma >= 0 family", r)
        return r
    g = gamma_from_peak_ratio(r)
    if math.isinf(g):
        log.warning("touch/peak ratio %.4g is beyond the deep-book similarity family", r)
    return g


def steady_distance(profile: BookProfile) -> float:
    """Relative L2 distance to the closest mass-matched square-root steady book.

    The steady family is anchored at the touch-side edge of the grid; for
    each extinction price s_b the amplitude follows from the mass.
    """
    frame = profile.to_solver_frame()
    grid = frame.grid
    h = np.asarray(frame.h)
    m = total_mass(frame)
    if not m > 0:
        raise ValueError("steady distance is undefined for an empty book")
    norm = np.linalg.norm(h)
    lo = grid.s_min + 0.5 * grid.dx + 1e-12
    hi = grid.s_max + (grid.s_max - grid.s_min)

    def dist(s_b):
        a = fix_mass(m, s_b, grid).a
        return np.linalg.norm(h - steady_profile(a, s_b, grid).h) / norm

    candidates = list(np.linspace(lo, hi, 200))
    # h^2 is affine on the support of a steady book: regress for a direct guess
    sup = h > 0
    if sup.sum() >= 2:
        B, A = np.polyfit(grid.centers[sup], h[sup] ** 2, 1)
        if B < 0:
            candidates.append(min(max(-A / B, lo), hi))
    vals = [dist(c) for c in candidates]
    k = int(np.argmin(vals))
    best_s, best = candidates[k], vals[k]
    width = (hi - lo) / 199
    res = minimize_scalar(dist, bounds=(max(lo, best_s - width), min(hi, best_s + width)),
                          method="bounded", options={"xatol": 1e-12})
    if res.fun < best:
        best = float(res.fun)
    return float(best)
