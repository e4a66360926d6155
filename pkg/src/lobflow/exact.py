"""Closed-form and series solutions of the canonical transport equation.

Steady profiles
    With u0 = P = 0 any h with (h^2)_SS = 0 is stationary.  The finite-mass
    branch, oriented like an ask book (touch on the left), is
    h = a * sqrt(s_b - S) for S <= s_b and 0 beyond.

Parabolic cap
    h(S, t) = t^(-1/3) * max(0, C - (S - c)^2 / (12 t^(2/3))).
    Inside the support put s = (S - c) / t^(1/3), h = t^(-1/3) v(s), so that
    h_t = -t^(-4/3) (v + s v') / 3 and (h^2)_SS = t^(-4/3) (v^2)''.
    The equation becomes 3 (v^2)'' + s v' + v = 0.  For v = C - s^2/12:
    (v^2)'' = -C/3 + s^2/12, s v' + v = C - s^2/4, and
    3(-C/3 + s^2/12) + C - s^2/4 = 0.  At the support edge h and the flux
    (h^2)_S = 2 h h_S both vanish, so the cap is a weak solution; its mass
    (4/3) C sqrt(12 C) does not depend on t.

Similarity series
    The similarity equation 3 (v^2)'' + (s - g) v' + v = 0 is an exact
    derivative: 3 (v^2)' + (s - g) v = const.  Near the touch a power series
    v = sum c_k s^k with c_0 = 0 gives, at order s^n,

        3 (n+2) sum_{i+j=n+2} c_i c_j + c_n - g c_{n+1} = 0.

    Order 0 gives 6 c_1^2 = g c_1, so c_1 = g/6, and every later order is
    linear in the newest coefficient with pivot g (n+1).
    In the far field v = v_inf * sum d_k s^(-k) with d_1 = 1 and

        d_{k+1} = g d_k + 3 v_inf (k-1) sum_{i+j=k-1} d_i d_j,

    so d = (1, g, g^2, g^3 + 6 v_inf, ...).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .core import BookProfile, PriceGrid, Side

# coefficients as printed for the near-touch expansion, kept for the report
PRINTED_TOUCH_QUADRATIC = Fraction(-1, 4)
PRINTED_TOUCH_CUBIC_OVER_GAMMA = Fraction(1, 118)


class SeriesInconsistencyError(ArithmeticError):
    def __init__(self, order, residual):
        super().__init__(f"series recurrence has no solution at order {order} (residual {residual})")
        self.order = order
        self.residual = residual


class SeriesLocation(enum.Enum):
    TOUCH = "touch"
    FAR_FIELD = "far_field"


@dataclass(frozen=True)
class SeriesCoefficients:
    location: SeriesLocation
    gamma: object
    coeffs: tuple
    order: int

    def __post_init__(self):
        if len(self.coeffs) != self.order:
            raise ValueError("coefficient count does not match order")

    def __call__(self, s, v_inf=1.0):
        s = np.asarray(s, dtype=float)
        c = [float(x) for x in self.coeffs]
        if self.location is SeriesLocation.TOUCH:
            return sum(ck * s ** (k + 1) for k, ck in enumerate(c))
        return v_inf * sum(dk * s ** -(k + 1) for k, dk in enumerate(c))


@dataclass(frozen=True)
class SteadyProfile:
    a: float
    s_b: float
    side: Side = Side.ASK

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be nonnegative")

    def depth(self, s):
        s = np.asarray(s, dtype=float)
        dist = self.s_b - s if self.side is Side.ASK else s - self.s_b
        return self.a * np.sqrt(np.clip(dist, 0.0, None))


def _exact_number(x):
    if isinstance(x, (Rational, Fraction)):
        return Fraction(x)
    return float(x)


# -- steady family ----------------------------------------------------------

def steady_profile(a, s_b, grid: PriceGrid, side: Side = Side.ASK) -> BookProfile:
    """Steady book sampled at cell centres."""
    sp = SteadyProfile(a, s_b, side)
    return BookProfile(grid, sp.depth(grid.centers), side)


def _unit_mass(s_b, grid, side):
    return float(SteadyProfile(1.0, s_b, side).depth(grid.centers).sum() * grid.dx)


def fix_mass(mass, s_b, grid: PriceGrid | None = None, side: Side = Side.ASK) -> SteadyProfile:
    """Steady member with the given total quantity and extinction price ``s_b``.

    Without a grid the touch is taken at S = 0 and the continuous mass
    (2/3) a w^(3/2) is inverted.  With a grid the discrete midpoint mass of
    ``steady_profile`` on that grid is matched instead.
    """
    if mass < 0:
        raise ValueError("mass must be nonnegative")
    if mass == 0:
        return SteadyProfile(0.0, s_b, side)
    if grid is None:
        w = s_b if side is Side.ASK else -s_b
        if w <= 0:
            raise ValueError("extinction price must lie inside the book")
        return SteadyProfile(1.5 * mass / w ** 1.5, s_b, side)
    unit = _unit_mass(s_b, grid, side)
    if unit <= 0:
        raise ValueError("extinction price leaves no support on the grid")
    return SteadyProfile(mass / unit, s_b, side)


# -- parabolic cap ----------------------------------------------------------

def parabolic_cap_value(s, c_mass, t, center=0.0):
    s = np.asarray(s, dtype=float)
    return t ** (-1 / 3) * np.clip(c_mass - (s - center) ** 2 / (12 * t ** (2 / 3)), 0.0, None)


def cap_half_width(c_mass, t):
    return math.sqrt(12 * c_mass) * t ** (1 / 3)


def cap_mass(c_mass):
    return 4.0 / 3.0 * c_mass * math.sqrt(12 * c_mass)


def parabolic_cap(c_mass, t, center, grid: PriceGrid, cell_average=True) -> BookProfile:
    """Exact cap on ``grid``; cell averages by default, point values otherwise."""
    if not (t > 0 and c_mass > 0):
        raise ValueError("need t > 0 and c_mass > 0")
    if not cell_average:
        return BookProfile(grid, parabolic_cap_value(grid.centers, c_mass, t, center), t=t)
    w = cap_half_width(c_mass, t)
    e = grid.edges - center
    lo = np.clip(e[:-1], -w, w)
    hi = np.clip(e[1:], -w, w)
    k = 1.0 / (12 * t ** (2 / 3))
    integral = c_mass * (hi - lo) - k * (hi ** 3 - lo ** 3) / 3
    h = t ** (-1 / 3) * np.clip(integral, 0.0, None) / grid.dx
    return BookProfile(grid, h, t=t)


# -- series -----------------------------------------------------------------

def touch_series(gamma, order: int) -> SeriesCoefficients:
    """Near-touch power-series coefficients (c_1, ..., c_order).

    Rational ``gamma`` gives exact ``Fraction`` coefficients.  For gamma = 0
    the leading coefficient vanishes and the nonzero branch c_2 = -1/12 is
    taken; that branch is negative next to the touch.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    g = _exact_number(gamma)
    exact = isinstance(g, Fraction)
    one = Fraction(1) if exact else 1.0
    zero = 0 * one
    c = [zero] * (order + 2)  # c[0] = 0 is the touch value
    c[1] = g / 6
    if g == 0:
        if order >= 2:
            c[2] = -one / 12
        start = 3
    else:
        start = 2
    for m in range(start, order + 1):
        n = m - 1  # order of the balance that determines c_m
        if g != 0:
            # c_m enters the quadratic sum as 2 c_1 c_m
            rest = sum((c[i] * c[n + 2 - i] for i in range(2, n + 1)), zero)
            pivot = g * (n + 1)
            rhs = -(c[n] + 3 * (n + 2) * rest)
        else:
            # c_1 = 0: c_m is fixed by order m through 2 c_2 c_m
            n = m
            rest = sum((c[i] * c[n + 2 - i] for i in range(3, n)), zero)
            pivot = 6 * (n + 2) * c[2] + 1
            rhs = -3 * (n + 2) * rest
        if pivot == 0:
            if rhs != 0:
                raise SeriesInconsistencyError(n, rhs)
            c[m] = zero
        else:
            c[m] = rhs / pivot
    return SeriesCoefficients(SeriesLocation.TOUCH, gamma, tuple(c[1:order + 1]), order)


def farfield_series(gamma, order: int = 3, v_inf=None) -> SeriesCoefficients:
    """Deep-book coefficients d_k of v_inf * s^(-k), k = 1..order.

    The first three do not involve v_inf; higher ones do, so ``v_inf`` is
    required once ``order > 3``.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > 3 and v_inf is None:
        raise ValueError("far-field terms beyond the third depend on v_inf")
    g = _exact_number(gamma)
    one = Fraction(1) if isinstance(g, Fraction) else 1.0
    vi = 0 * one if v_inf is None else _exact_number(v_inf)
    d = [None, one]
    for k in range(1, order):
        e = sum((d[i] * d[k - 1 - i] for i in range(1, k - 1)), 0 * one) if k >= 3 else 0 * one
        d.append(g * d[k] + 3 * vi * (k - 1) * e)
    return SeriesCoefficients(SeriesLocation.FAR_FIELD, gamma, tuple(d[1:order + 1]), order)


def series_residual(coeffs: SeriesCoefficients, s, v_inf=1.0):
    """Residual of 3 (v^2)'' + (s - g) v' + v for the truncated series (analytic derivatives)."""
    s = np.asarray(s, dtype=float)
    g = float(coeffs.gamma)
    c = [float(x) for x in coeffs.coeffs]
    if coeffs.location is SeriesLocation.TOUCH:
        p = [(k + 1, ck) for k, ck in enumerate(c)]
        scale = 1.0
    else:
        p = [(-(k + 1), dk) for k, dk in enumerate(c)]
        scale = v_inf
    # terms with a vanishing factor are skipped so s = 0 is not hit with 0 * inf
    v = scale * sum(a * s ** e for e, a in p)
    v1 = scale * sum(a * e * s ** (e - 1) for e, a in p if e != 1) + scale * sum(a for e, a in p if e == 1)
    v2 = scale * sum(a * e * (e - 1) * s ** (e - 2) for e, a in p if e not in (1, 2)) \
        + scale * sum(2 * a for e, a in p if e == 2)
    return 3 * (2 * v1 * v1 + 2 * v * v2) + (s - g) * v1 + v


def touch_coefficient_report(gamma=Fraction(1)) -> dict:
    """Recurrence values next to the printed near-touch coefficients."""
    ts = touch_series(gamma, 3)
    g = ts.gamma
    return {
        "gamma": g,
        "linear": {"recurrence": ts.coeffs[0], "printed": _exact_number(g) / 6},
        "quadratic": {"recurrence": ts.coeffs[1], "printed": PRINTED_TOUCH_QUADRATIC},
        "cubic": {"recurrence": ts.coeffs[2], "printed": PRINTED_TOUCH_CUBIC_OVER_GAMMA * _exact_number(g)},
    }


# -- dimensional forms ------------------------------------------------------

def dimensional_asymptotics(gamma, s0_path, t, v_inf=1.0, order=3):
    """Near-touch and deep-book expansions of h(S, t) = t^(-1/3) v((S - S0)/t^(1/3)).

    ``s0_path`` is a number or a callable t -> S0.  Both evaluators measure
    distance into the book from the touch (ask orientation).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    s0 = s0_path(t) if callable(s0_path) else float(s0_path)
    near = touch_series(float(gamma), order)
    far = farfield_series(float(gamma), order, v_inf if order > 3 else None)
    tt = t ** (1 / 3)

    def touch_eval(S):
        return near((np.asarray(S, dtype=float) - s0) / tt) / tt

    def deep_eval(S):
        return far((np.asarray(S, dtype=float) - s0) / tt, v_inf) / tt

    return touch_eval, deep_eval
