"""Price grids, one-sided book profiles and quantity bookkeeping.

Depth lives at cell centres of a uniform price grid (finite-volume layout).
Both sides of the book are handled by the solver in an "ask-like" frame with
the touch on the left; bid profiles are mirrored through ``S -> -S``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


class RangeError(ValueError):
    """Integration interval outside the grid."""


class Side(enum.Enum):
    BID = "bid"
    ASK = "ask"


@dataclass(frozen=True)
class PriceGrid:
    s_min: float
    s_max: float
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError(f"n_cells must be an integer >= 4, got {self.n_cells}")
        if not self.s_max > self.s_min:
            raise ValueError("s_max must exceed s_min")

    @property
    def dx(self) -> float:
        return (self.s_max - self.s_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.s_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.s_min + np.arange(self.n_cells + 1) * self.dx

    def mirrored(self) -> "PriceGrid":
        return PriceGrid(-self.s_max, -self.s_min, self.n_cells)


@dataclass(frozen=True, eq=False)
class BookProfile:
    """Depth ``h`` (lots per unit price) on ``grid`` at rescaled time ``t``."""

    grid: PriceGrid
    h: np.ndarray
    side: Side = Side.ASK
    t: float = 0.0

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != (self.grid.n_cells,):
            raise ValueError(f"h has shape {h.shape}, grid has {self.grid.n_cells} cells")
        if np.any(h < 0):
            raise ValueError("depth must be nonnegative")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def centers(self) -> np.ndarray:
        return self.grid.centers

    def with_depth(self, h, t: float | None = None) -> "BookProfile":
        return replace(self, h=h, t=self.t if t is None else t)

    def to_solver_frame(self) -> "BookProfile":
        """Ask-like view: touch on the left, deep book to the right."""
        if self.side is Side.ASK:
            return self
        return BookProfile(self.grid.mirrored(), self.h[::-1], Side.ASK, self.t)

    def from_solver_frame(self, side: Side) -> "BookProfile":
        if side is Side.ASK:
            return self
        return BookProfile(self.grid.mirrored(), self.h[::-1], Side.BID, self.t)


def volume(profile: BookProfile, s1: float, s2: float) -> float:
    """Quantity resting between prices ``s1`` and ``s2``.

    Cell data are treated as piecewise constant, so the result is exact for
    edge-aligned bounds and partial cells are weighted by their overlap.
    """
    g = profile.grid
    tol = 1e-12 * max(1.0, abs(g.s_min), abs(g.s_max))
    if not s1 < s2:
        raise RangeError(f"need s1 < s2, got [{s1}, {s2}]")
    if s1 < g.s_min - tol or s2 > g.s_max + tol:
        raise RangeError(f"[{s1}, {s2}] not inside grid [{g.s_min}, {g.s_max}]")
    edges = g.edges
    overlap = np.clip(np.minimum(edges[1:], s2) - np.maximum(edges[:-1], s1), 0.0, None)
    return float(np.dot(profile.h, overlap))


def total_mass(profile: BookProfile) -> float:
    return float(profile.h.sum() * profile.grid.dx)


# -- source terms -----------------------------------------------------------

class SourceTerm:
    """Rate of depth creation P(S, t); subclasses override ``__call__``."""

    #: bound on |dP/dh|, used to cap the time step; 0 for h-independent sources
    rate = 0.0

    def __call__(self, s: np.ndarray, t: float, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False


class ZeroSource(SourceTerm):
    def __call__(self, s, t, h):
        return np.zeros_like(s, dtype=float)

    @property
    def is_zero(self) -> bool:
        return True

    def __repr__(self):
        return "ZeroSource()"


@dataclass(frozen=True, eq=False)
class TabulatedSource(SourceTerm):
    """Cell-wise constant-in-time creation rates."""

    values: np.ndarray

    def __call__(self, s, t, h):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != np.shape(s):
            raise ValueError("tabulated source does not match the grid")
        return vals.copy()


@dataclass(frozen=True, eq=False)
class RelaxationSource(SourceTerm):
    """Linear relaxation P = kappa * (h_target - h)."""

    kappa: float
    target: np.ndarray | float

    def __call__(self, s, t, h):
        return self.kappa * (np.broadcast_to(self.target, np.shape(h)) - h)

    @property
    def rate(self) -> float:
        return abs(self.kappa)


@dataclass(frozen=True, eq=False)
class FunctionSource(SourceTerm):
    fn: Callable[[np.ndarray, float], np.ndarray]

    def __call__(self, s, t, h):
        return np.asarray(self.fn(s, t), dtype=float) * np.ones_like(s)


@dataclass(frozen=True)
class PhysicalParams:
    theta: float = 1.0
    rho: float = 1.0
    beta: float = 1.0
    u0: float = 0.0
    source: SourceTerm = field(default_factory=ZeroSource)

    def __post_init__(self):
        if not (self.theta > 0 and self.rho > 0 and self.beta > 0):
            raise ValueError("theta, rho and beta must be positive")
