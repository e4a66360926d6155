"""Similarity profiles h = t^(-1/3) v((S - S0)/t^(1/3)) of the transport equation.

v solves 3 (v^2)'' + (s - gamma) v' + v = 0 with v(0) = 0 at the touch and
v ~ v_inf / s in the deep book.  The left side is the derivative of
3 (v^2)' + (s - gamma) v, and the deep-book tail fixes that constant to
v_inf, leaving the first-order problem

    6 v v' = v_inf - (s - gamma) v,        v(0) = 0.

Near the touch v ~ sqrt(v_inf s / 3).  With xi = sqrt(s) and u = v / xi the
problem is regular:

    3 xi u u' = v_inf - 3 u^2 - (xi^2 - gamma) xi u,   u(0) = sqrt(v_inf / 3),

and integrating outward in xi is stable (neighbouring solutions are
attracted to the 1/s tail), whereas integrating inward from the deep book
amplifies errors like exp(s^3 / (18 v_inf)).  The solver therefore starts at
the touch from a short power series and runs to ``s_max``.

The family is invariant under (gamma, s, v, v_inf) -> (l gamma, l s, l^2 v,
l^3 v_inf), so gamma is only meaningful once the similarity length unit is
fixed.  ``ShootingConfig.v_inf`` fixes it by the deep-book constant.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .core import BookProfile, PriceGrid, Side
from .exact import farfield_series


class NoPositiveSolutionError(ValueError):
    """Negative touch speed requested."""


@dataclass(frozen=True)
class ShootingConfig:
    s_max: float = 50.0
    series_terms: int = 3
    v_inf: float = 1.0
    n_points: int = 2001
    rtol: float = 1e-13
    atol: float = 1e-16

    def __post_init__(self):
        if self.s_max < 10:
            raise ValueError("s_max must be at least 10")
        if self.v_inf <= 0:
            raise ValueError("v_inf must be positive")
        if self.n_points < 16:
            raise ValueError("n_points must be at least 16")


@dataclass(frozen=True, eq=False)
class SimilarityProfile:
    gamma: float
    s_grid: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    v_inf: float
    s_peak: float
    residual: float = math.nan
    # relative gap between v(s_max) and the truncated deep-book series
    series_mismatch: float = math.nan
    _spline: object = field(default=None, repr=False)

    def __call__(self, s):
        """v at arbitrary s: zero behind the touch, series beyond s_max."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > 0) & (s <= self.s_grid[-1])
        if self._spline is not None:
            out[inside] = self._spline(np.sqrt(s[inside]))
        else:
            out[inside] = np.interp(s[inside], self.s_grid, self.v)
        beyond = s > self.s_grid[-1]
        if beyond.any():
            ff = farfield_series(self.gamma, 3)
            out[beyond] = ff(s[beyond], self.v_inf)
        return out

    @property
    def v_max(self) -> float:
        """Peak value, read at the refined ``s_peak`` rather than the sampled grid."""
        sampled = float(np.max(self.v))
        if self._spline is None or not 0 < self.s_peak <= self.s_grid[-1]:
            return sampled
        return max(sampled, float(self(np.array([self.s_peak]))[0]))


def _touch_series_u(gamma, v_inf, terms=14):
    a = np.zeros(terms)
    a[0] = math.sqrt(v_inf / 3.0)
    for k in range(1, terms):
        lhs = 3 * sum(a[i] * (k - i) * a[k - i] for i in range(1, k))
        rhs = -3 * sum(a[i] * a[k - i] for i in range(1, k)) + gamma * a[k - 1]
        if k >= 3:
            rhs -= a[k - 3]
        a[k] = (rhs - lhs) / (3 * a[0] * k + 6 * a[0])
    return a


def _d6(f):
    d = np.full_like(f, np.nan)
    d[3:-3] = (-f[:-6] + 9 * f[1:-5] - 45 * f[2:-4] + 45 * f[4:-2] - 9 * f[5:-1] + f[6:]) / 60.0
    return d


def residual(profile: SimilarityProfile) -> float:
    """max |3 (v^2)'' + s v' - gamma v' + v| over the interior of ``s_grid``.

    Derivatives are sixth-order central differences in the grid index,
    divided by ds/d(index), so clustered grids are handled.
    """
    s = np.asarray(profile.s_grid, dtype=float)
    v = np.asarray(profile.v, dtype=float)
    if s.size < 13:
        raise ValueError("need at least 13 grid points")
    sq = _d6(s)
    w = v * v
    r = 3 * _d6(_d6(w) / sq) / sq + (s - profile.gamma) * _d6(v) / sq + v
    return float(np.nanmax(np.abs(r)))


def solve_similarity(gamma: float, cfg: ShootingConfig | None = None) -> SimilarityProfile:
    cfg = cfg or ShootingConfig()
    if gamma < 0:
        raise NoPositiveSolutionError(f"no positive similarity solution for gamma={gamma} < 0")
    g = float(gamma)
    K = cfg.v_inf
    xi = np.linspace(0.0, math.sqrt(cfg.s_max), cfg.n_points)
    a = _touch_series_u(g, K)
    x0 = 0.5 * xi[1]
    u0 = np.polynomial.polynomial.polyval(x0, a)

    def rhs(x, y):
        u = y[0]
        return [(K - 3 * u * u - (x * x - g) * x * u) / (3 * u * x)]

    sol = solve_ivp(rhs, (x0, xi[-1]), [u0], method="DOP853", t_eval=xi[1:],
                    rtol=cfg.rtol, atol=cfg.atol)
    if not sol.success:
        raise RuntimeError(f"similarity integration failed: {sol.message}")
    u = np.concatenate([[a[0]], sol.y[0]])
    v = xi * u
    s = xi * xi

    v_prime = np.empty_like(v)
    v_prime[1:] = (K - (s[1:] - g) * v[1:]) / (6 * v[1:])
    # unbounded at the touch; store the first one-sided difference instead
    v_prime[0] = (v[1] - v[0]) / (s[1] - s[0])

    spline = CubicSpline(xi, v)
    i = int(np.argmax(v))
    # v' = 0 where (s - gamma) v = v_inf
    peak_fn = lambda x: K - (x * x - g) * spline(x)
    lo, hi = xi[max(i - 1, 1)], xi[min(i + 1, xi.size - 1)]
    s_peak = brentq(peak_fn, lo, hi, xtol=1e-14) ** 2 if peak_fn(lo) * peak_fn(hi) < 0 else s[i]

    ff = farfield_series(g, cfg.series_terms, K if cfg.series_terms > 3 else None)
    mismatch = abs(v[-1] - ff(s[-1], K)) / v[-1]

    prof = SimilarityProfile(g, s, v, v_prime, K, float(s_peak), math.nan, float(mismatch), spline)
    object.__setattr__(prof, "residual", residual(prof))
    return prof


def farfield_gamma(profile: SimilarityProfile) -> float:
    """gamma read off the deep-book tail, s^2 (v / v_inf - 1/s) at s_max.

    The next tail term biases this by about (gamma^2 + 6 v_inf / s) / s.
    """
    s = float(profile.s_grid[-1])
    return s * s * (float(profile.v[-1]) / profile.v_inf - 1.0 / s)


def dimensional_profile(profile: SimilarityProfile, t: float, s0: float, scales=(1.0, 1.0),
                        grid: PriceGrid | None = None, side: Side = Side.ASK) -> BookProfile:
    """Sample h(S, t) = H0 t^(-1/3) v((S - s0)/(L0 t^(1/3))) on ``grid``.

    For a solution of the transport equation the scales must satisfy
    H0 = L0^2.  Bid books measure distance into the book as s0 - S.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if grid is None:
        raise ValueError("a target grid is required")
    H0, L0 = scales
    S = grid.centers
    dist = S - s0 if side is Side.ASK else s0 - S
    h = H0 * t ** (-1 / 3) * profile(dist / (L0 * t ** (1 / 3)))
    return BookProfile(grid, h, side, t)


@functools.lru_cache(maxsize=256)
def _peak_ratio_cached(gamma: float, cfg: ShootingConfig) -> float:
    prof = solve_similarity(gamma, cfg)
    return gamma / prof.s_peak


def peak_ratio(gamma: float, cfg: ShootingConfig | None = None) -> float:
    """gamma / s_peak: touch speed measured in units of the touch-to-peak distance.

    This ratio does not depend on the similarity length unit, so it is what a
    simulation can measure directly.
    """
    if cfg is None:
        # only the peak is needed: stop well past it, before the stiff tail
        cfg = ShootingConfig(s_max=max(10.0, 2.5 * gamma + 8.0), n_points=401, rtol=1e-10, atol=1e-13)
    return _peak_ratio_cached(float(gamma), cfg)


def gamma_from_peak_ratio(r: float, cfg: ShootingConfig | None = None, gamma_hi: float = 16.0) -> float:
    """Invert ``peak_ratio`` on [0, gamma_hi]; ``inf`` if r is beyond the family."""
    if r <= 0:
        return 0.0 if r == 0 else float(r)
    if r >= peak_ratio(gamma_hi, cfg):
        return math.inf
    return brentq(lambda g: peak_ratio(g, cfg) - r, 0.0, gamma_hi, xtol=1e-8)
