"""Constitutive layer: pressure, queue-resolved velocity and level flux.

Pressure is proportional to depth, p = theta * h.  Orders at relative queue
position q/h move with

    u(q) = (1/rho) * p_S * ((q/h)**beta + u0)

so integrating over the queue gives the level flux

    Q = integral_0^h u dq = (1/rho) * p_S * h * (1/(beta+1) + u0)
      = theta/rho * (1/(beta+1) + u0) * h * h_S
      = theta/(2 rho) * (1/(beta+1) + u0) * (h^2)_S.

With u0 = 0 the conservation law h_t = Q_S is therefore h_t = D * (h^2)_SS
with D = theta / (2 rho (beta+1)).  Running the canonical equation
h_tau = (h^2)_SS in the variable tau = D * t reproduces it exactly;
``time_rescale_factor`` returns D.  Note the factor 1/2 coming from
(h^2)_S = 2 h h_S: theta = rho = 1 with beta -> 0 gives D = 1/2, not 1.
"""
from __future__ import annotations

import numpy as np

from .core import BookProfile, PhysicalParams


class DegenerateLevelError(ValueError):
    """Velocity requested at an empty price level."""


def pressure(profile: BookProfile, params: PhysicalParams) -> np.ndarray:
    return params.theta * np.asarray(profile.h)


def pressure_gradient(profile: BookProfile, params: PhysicalParams) -> np.ndarray:
    """p_S per cell: central differences inside, one-sided at the ends."""
    p = pressure(profile, params)
    dx = profile.grid.dx
    grad = np.empty_like(p)
    grad[1:-1] = (p[2:] - p[:-2]) / (2 * dx)
    grad[0] = (p[1] - p[0]) / dx
    grad[-1] = (p[-1] - p[-2]) / dx
    return grad


def velocity(profile: BookProfile, params: PhysicalParams, i: int, q: float) -> float:
    h = profile.h[i]
    if h <= 0:
        raise DegenerateLevelError(f"level {i} is empty; velocity is undefined")
    if not 0 <= q <= h:
        raise ValueError(f"queue position {q} outside [0, {h}]")
    p_s = pressure_gradient(profile, params)[i]
    return float(p_s / params.rho * ((q / h) ** params.beta + params.u0))


def level_flux(profile: BookProfile, params: PhysicalParams, i: int) -> float:
    h = profile.h[i]
    if h <= 0:
        return 0.0
    p_s = pressure_gradient(profile, params)[i]
    return float(p_s * h / params.rho * (1.0 / (params.beta + 1.0) + params.u0))


def flux_coefficient(params: PhysicalParams) -> float:
    """Coefficient multiplying (h^2)_S in the level flux."""
    return params.theta / (2.0 * params.rho) * (1.0 / (params.beta + 1.0) + params.u0)


def time_rescale_factor(params: PhysicalParams) -> float:
    """tau / t, converting physical time into the canonical time variable.

    The slip contribution is excluded: it only enters the canonical equation
    through its own term.  See the module docstring for the derivation.
    """
    return params.theta / (2.0 * params.rho * (params.beta + 1.0))


def edge_flux(h: np.ndarray, dx: float, params: PhysicalParams) -> np.ndarray:
    """Interior edge fluxes from the queue-integrated constitutive law.

    Uses the edge depth (h_i + h_{i+1})/2 and the one-cell pressure jump, so
    that h_edge * (h_{i+1} - h_i) equals (h_{i+1}^2 - h_i^2)/2 and the scheme
    is the canonical one with its time axis stretched by ``flux_coefficient``.
    """
    h_edge = 0.5 * (h[1:] + h[:-1])
    p_jump = params.theta * (h[1:] - h[:-1]) / dx
    return h_edge * p_jump / params.rho * (1.0 / (params.beta + 1.0) + params.u0)
