"""Explicit conservative finite-volume solver for the book transport equation

    h_t = (h^2)_SS + (u0 h)_S + P

on one side of the book, in the ask-like frame (touch at the left edge).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import BookProfile, PhysicalParams, PriceGrid, Side, total_mass
from .microstructure import edge_flux, flux_coefficient

log = logging.getLogger(__name__)


class NumericalBlowupError(RuntimeError):
    def __init__(self, message, cell=None, t=None, trajectory=None):
        super().__init__(message)
        self.cell = cell
        self.t = t
        self.trajectory = trajectory


class InsufficientLiquidityError(ValueError):
    def __init__(self, shortfall):
        super().__init__(f"not enough depth on the book: short by {shortfall:.6g}")
        self.shortfall = shortfall


class BCKind(enum.Enum):
    DEPTH = "depth"
    SLOPE = "slope"
    FLUX = "flux"
    ZERO_FLUX = "zero_flux"
    FIRM_STOP = "firm_stop"


class Location(enum.Enum):
    TOUCH = "touch"
    DEEP = "deep"


@dataclass(frozen=True)
class BoundaryCondition:
    """One boundary of the book.

    ``value`` is h0 for DEPTH, p0 = h_S for SLOPE, Q0 = (h^2)_S for FLUX and
    the wall price for FIRM_STOP (``None`` puts the wall on the grid edge).
    Values are given in the solver frame, where S increases into the book.
    """

    kind: BCKind = BCKind.ZERO_FLUX
    value: float | None = None
    location: Location = Location.TOUCH

    def __post_init__(self):
        if self.kind is BCKind.DEPTH and not (self.value is not None and self.value >= 0):
            raise ValueError("Depth boundary needs h0 >= 0")
        if self.kind in (BCKind.SLOPE, BCKind.FLUX) and self.value is None:
            raise ValueError(f"{self.kind.value} boundary needs a value")
        if self.kind is BCKind.FIRM_STOP and self.location is not Location.TOUCH:
            raise ValueError("a firm stop is only valid on the touch side")

    @classmethod
    def zero_flux(cls, location=Location.TOUCH):
        return cls(BCKind.ZERO_FLUX, None, location)

    @classmethod
    def depth(cls, h0, location=Location.TOUCH):
        return cls(BCKind.DEPTH, float(h0), location)

    @classmethod
    def slope(cls, p0, location=Location.TOUCH):
        return cls(BCKind.SLOPE, float(p0), location)

    @classmethod
    def flux(cls, q0, location=Location.TOUCH):
        return cls(BCKind.FLUX, float(q0), location)

    @classmethod
    def firm_stop(cls, price=None):
        return cls(BCKind.FIRM_STOP, None if price is None else float(price), Location.TOUCH)


def zero_flux_pair():
    return (BoundaryCondition.zero_flux(Location.TOUCH), BoundaryCondition.zero_flux(Location.DEEP))


class Mode(enum.Enum):
    FULL = "full"
    SOURCE_ONLY = "source_only"


class FluxModel(enum.Enum):
    CANONICAL = "canonical"
    MICROSTRUCTURE = "microstructure"


@dataclass(frozen=True)
class SolverConfig:
    t_end: float = 1.0
    output_times: tuple = ()
    cfl_safety: float = 0.25
    # absolute threshold; None means 1e-10 * max(h) of the profile at hand
    support_epsilon: float | None = None
    mode: Mode = Mode.FULL
    flux_model: FluxModel = FluxModel.CANONICAL
    record_every: int = 10
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        times = tuple(float(t) for t in self.output_times)
        if list(times) != sorted(times):
            raise ValueError("output_times must be sorted")
        if times and (times[0] < 0 or times[-1] > self.t_end):
            raise ValueError("output_times must lie in [0, t_end]")
        object.__setattr__(self, "output_times", times)
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    """Output of ``run``: snapshots plus per-record touch/mass/peak series."""

    snapshots: list
    times: np.ndarray
    touch: np.ndarray
    mass: np.ndarray
    peak: np.ndarray
    peak_at: np.ndarray | None = None
    boundary_outflow: dict = field(default_factory=dict)
    clipped_mass: float = 0.0
    steps: int = 0
    side: Side = Side.ASK
    t_event: float = 0.0
    s_event: float = math.nan
    dx: float = math.nan

    @classmethod
    def from_series(cls, times, touch, peak=None, peak_at=None, mass=None, t_event=None, s_event=None, side=Side.ASK):
        """Record-only trajectory, e.g. for synthetic or externally produced series."""
        times = np.asarray(times, dtype=float)
        nan = np.full(times.shape, math.nan)
        touch = np.asarray(touch, dtype=float)
        return cls(
            snapshots=[],
            times=times,
            touch=touch,
            mass=nan if mass is None else np.asarray(mass, dtype=float),
            peak=nan if peak is None else np.asarray(peak, dtype=float),
            peak_at=nan if peak_at is None else np.asarray(peak_at, dtype=float),
            side=side,
            t_event=float(times[0]) if t_event is None else float(t_event),
            s_event=float(touch[0]) if s_event is None else float(s_event),
        )

    @classmethod
    def from_snapshots(cls, profiles, t_event=0.0, s_event=None, cfg=None):
        """Trajectory whose records are measured from the given snapshots."""
        profiles = list(profiles)
        times = np.array([p.t for p in profiles])
        touch = np.array([math.nan if (s := find_touch(p, cfg)) is None else s for p in profiles])
        peaks = [peak_of(p) for p in profiles]
        traj = cls.from_series(
            times, touch,
            peak=[pk[1] for pk in peaks], peak_at=[pk[0] for pk in peaks],
            mass=[total_mass(p) for p in profiles],
            t_event=t_event, s_event=s_event if s_event is not None else touch[0],
            side=profiles[0].side,
        )
        traj.snapshots = profiles
        traj.dx = profiles[0].grid.dx
        return traj

    @property
    def touch_series(self):
        return list(zip(self.times.tolist(), self.touch.tolist()))

    @property
    def mass_series(self):
        return list(zip(self.times.tolist(), self.mass.tolist()))

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([p.t for p in self.snapshots])

    def snapshot_at(self, t: float, rtol: float = 1e-9) -> BookProfile:
        for p in self.snapshots:
            if abs(p.t - t) <= rtol * max(1.0, abs(t)):
                return p
        raise LookupError(f"no snapshot at t={t}")


# -- helpers ----------------------------------------------------------------

def _wall_index(grid: PriceGrid, bc_touch: BoundaryCondition) -> int:
    """Number of dead cells in front of a firm stop (0 for other BCs)."""
    if bc_touch.kind is not BCKind.FIRM_STOP or bc_touch.value is None:
        return 0
    k = (bc_touch.value - grid.s_min) / grid.dx
    kr = int(round(k))
    if abs(k - kr) > 1e-6 or not 0 <= kr < grid.n_cells:
        raise ValueError(f"firm stop at {bc_touch.value} is not on a cell edge of the grid")
    return kr


def _diffusion_scale(params: PhysicalParams, cfg: SolverConfig) -> float:
    if cfg.flux_model is FluxModel.MICROSTRUCTURE:
        return flux_coefficient(params)
    return 1.0


def _edge_fluxes(h, dx, params, bc, cfg, wall):
    """Fluxes F at the n+1 edges; h_t = (F[1:] - F[:-1]) / dx + P."""
    n = h.size
    F = np.zeros(n + 1)
    if cfg.mode is Mode.SOURCE_ONLY:
        return F
    u0 = params.u0
    canonical = cfg.flux_model is FluxModel.CANONICAL
    D = _diffusion_scale(params, cfg)
    h2 = h * h
    if canonical:
        F[1:-1] = (h2[1:] - h2[:-1]) / dx
        if u0:
            F[1:-1] += u0 * (h[1:] if u0 > 0 else h[:-1])
    else:
        F[1:-1] = edge_flux(h, dx, params)

    adv = u0 if canonical else 0.0
    for b, idx, sign in ((bc[0], 0, -1), (bc[1], n, +1)):
        cell = 0 if idx == 0 else n - 1
        hc = h[cell]
        if b.kind in (BCKind.ZERO_FLUX, BCKind.FIRM_STOP):
            F[idx] = 0.0
            continue
        if b.kind is BCKind.DEPTH:
            # half-cell distance between the boundary value and the cell centre
            diff = sign * (b.value ** 2 - hc * hc) / (0.5 * dx)
            hb = b.value
        elif b.kind is BCKind.SLOPE:
            diff = 2.0 * hc * b.value
            hb = hc
        else:
            diff = b.value
            hb = hc
        # inflow side of the edge for velocity -u0
        if idx == 0:
            up = hc if adv >= 0 else hb
        else:
            up = hb if adv >= 0 else hc
        F[idx] = D * diff + adv * up
    if wall:
        F[: wall + 1] = 0.0
    return F


def _advance(h, grid, params, bc, cfg, dt, t, wall=0):
    """One explicit step on a raw array; returns (h_new, clipped, out_touch, out_deep)."""
    dx = grid.dx
    F = _edge_fluxes(h, dx, params, bc, cfg, wall)
    h_new = h + (dt / dx) * (F[1:] - F[:-1])
    if not params.source.is_zero:
        P = params.source(grid.centers, t, h)
        if wall:
            P[:wall] = 0.0
        h_new += dt * P
    if not np.all(np.isfinite(h_new)):
        bad = int(np.flatnonzero(~np.isfinite(h_new))[0])
        raise NumericalBlowupError(f"non-finite depth in cell {bad} at t={t + dt:.6g}", bad, t + dt)
    neg = h_new < 0
    clipped = 0.0
    if neg.any():
        clipped = float(-h_new[neg].sum() * dx)
        h_new[neg] = 0.0
    return h_new, clipped, dt * F[0], -dt * F[-1]


# -- public operations ------------------------------------------------------

def _dt_limit(hmax, dx, params, cfg):
    eps = 1e-12
    if cfg.mode is Mode.SOURCE_ONLY:
        dt = cfg.cfl_safety * dx * dx / (2.0 * eps)
    else:
        D = _diffusion_scale(params, cfg)
        adv = abs(params.u0) if cfg.flux_model is FluxModel.CANONICAL else 0.0
        dt = cfg.cfl_safety * dx * dx / (2.0 * (2.0 * D * hmax + adv * dx + eps))
    rate = params.source.rate
    if rate > 0:
        # accuracy cap for linear sources: rate * dt <= cfl_safety / 10
        dt = min(dt, 0.1 * cfg.cfl_safety / rate)
    return dt


def stable_dt(profile: BookProfile, cfg: SolverConfig, params: PhysicalParams | None = None) -> float:
    return _dt_limit(float(np.max(profile.h)), profile.grid.dx, params or PhysicalParams(), cfg)


def step(profile: BookProfile, params: PhysicalParams, bc, cfg: SolverConfig, dt: float) -> BookProfile:
    """Advance ``profile`` by ``dt``; ``bc`` is a (touch, deep) pair."""
    frame = profile.to_solver_frame()
    wall = _wall_index(frame.grid, bc[0])
    h_new, clipped, _, _ = _advance(np.array(frame.h), frame.grid, params, bc, cfg, dt, frame.t, wall)
    if clipped:
        log.debug("clipped %.3g of negative mass at t=%.6g", clipped, frame.t + dt)
    out = BookProfile(frame.grid, h_new, Side.ASK, frame.t + dt)
    return out.from_solver_frame(profile.side)


def _touch_in_frame(h, grid, eps):
    above = np.flatnonzero(h > eps)
    if above.size == 0:
        return None
    i = int(above[0])
    dx = grid.dx
    x = grid.s_min + (i + 0.5) * dx
    left_edge = x - 0.5 * dx
    if i + 1 < h.size and h[i + 1] > h[i]:
        # depth is close to linear near a degenerate front.  Cells hold
        # averages: with the front a fraction f of a cell inside cell i,
        # h[i] / h[i+1] = f^2 / (2 f + 1).  Beyond f = 1 the front lies
        # behind cell i and the centre values extrapolate directly.
        r = h[i] / h[i + 1]
        if r <= 1.0 / 3.0:
            f = r + math.sqrt(r * r + r)
            return float(left_edge + (1.0 - f) * dx)
        s = x - h[i] * dx / (h[i + 1] - h[i])
        return float(max(s, grid.s_min, x - dx))
    return float(left_edge)


def _peak_in_frame(h, grid):
    i = int(np.argmax(h))
    x = grid.s_min + (i + 0.5) * grid.dx
    if 0 < i < h.size - 1:
        # vertex of the parabola through the three cells around the maximum
        a, b, c = h[i - 1], h[i], h[i + 1]
        den = a - 2 * b + c
        if den < 0:
            off = 0.5 * (a - c) / den
            return x + off * grid.dx, b - 0.25 * (a - c) * off
    return x, float(h[i])


def peak_of(profile: BookProfile):
    """(price, depth) of the deepest level, refined to sub-cell accuracy."""
    frame = profile.to_solver_frame()
    x, hp = _peak_in_frame(frame.h, frame.grid)
    return (x if profile.side is Side.ASK else -x), float(hp)


def find_touch(profile: BookProfile, cfg: SolverConfig | None = None):
    """Touch price of the profile, or ``None`` for an empty book.

    Scans from the touch side for the first cell deeper than the support
    threshold and extrapolates the depth linearly to zero using that cell and
    its deeper neighbour, treating both as cell averages.  If the depth is not rising there, the left cell
    edge is returned.
    """
    frame = profile.to_solver_frame()
    h = frame.h
    hmax = float(h.max()) if h.size else 0.0
    if hmax <= 0:
        return None
    eps = cfg.support_epsilon if cfg is not None and cfg.support_epsilon is not None else 1e-10 * hmax
    s = _touch_in_frame(h, frame.grid, eps)
    if s is None:
        return None
    return s if profile.side is Side.ASK else -s


def take_liquidity(profile: BookProfile, quantity: float):
    """Sweep ``quantity`` off the book from the touch side.

    Returns the new profile and a list of ``(price, executed)`` per level hit.
    """
    if quantity < 0:
        raise ValueError("quantity must be nonnegative")
    frame = profile.to_solver_frame()
    dx = frame.grid.dx
    h = np.array(frame.h)
    avail = h.sum() * dx
    if quantity > avail * (1 + 1e-12):
        raise InsufficientLiquidityError(quantity - avail)
    levels = []
    remaining = float(quantity)
    centers = frame.grid.centers
    for i in range(h.size):
        if remaining <= 0:
            break
        q = h[i] * dx
        if q <= 0:
            continue
        take = min(q, remaining)
        h[i] = (q - take) / dx if take < q else 0.0
        remaining -= take
        price = centers[i] if profile.side is Side.ASK else -centers[i]
        levels.append((float(price), float(take)))
    out = BookProfile(frame.grid, h, Side.ASK, frame.t).from_solver_frame(profile.side)
    return out, levels


def run(initial: BookProfile, params: PhysicalParams, bc, cfg: SolverConfig) -> Trajectory:
    frame = initial.to_solver_frame()
    grid = frame.grid
    wall = _wall_index(grid, bc[0])
    h = np.array(frame.h)
    if wall and np.any(h[:wall] > 0):
        raise ValueError("initial book has depth beyond the firm stop")
    side = initial.side
    sgn = 1.0 if side is Side.ASK else -1.0

    t = float(frame.t)
    outputs = [to for to in cfg.output_times if to >= t - 1e-12]
    snapshots = []
    rec_t, rec_s, rec_m, rec_p, rec_x = [], [], [], [], []
    outflow = {"touch": 0.0, "deep": 0.0}
    clipped_total = 0.0
    dx = grid.dx
    nsteps = 0

    def record():
        hmax = float(h.max())
        s = _touch_in_frame(h, grid, cfg.support_epsilon if cfg.support_epsilon is not None else 1e-10 * hmax) if hmax > 0 else None
        rec_t.append(t)
        rec_s.append(math.nan if s is None else sgn * s)
        rec_m.append(float(h.sum() * dx))
        x, hp = _peak_in_frame(h, grid) if hmax > 0 else (math.nan, 0.0)
        rec_p.append(hp)
        rec_x.append(sgn * x)

    def snapshot():
        snapshots.append(BookProfile(grid, h, Side.ASK, t).from_solver_frame(side))

    def trajectory():
        return Trajectory(
            snapshots=list(snapshots),
            times=np.array(rec_t),
            touch=np.array(rec_s),
            mass=np.array(rec_m),
            peak=np.array(rec_p),
            peak_at=np.array(rec_x),
            boundary_outflow=dict(outflow),
            clipped_mass=clipped_total,
            steps=nsteps,
            side=side,
            t_event=float(frame.t),
            s_event=rec_s[0] if rec_s else math.nan,
            dx=dx,
        )

    record()
    while outputs and outputs[0] <= t + 1e-12:
        snapshot()
        outputs.pop(0)

    while t < cfg.t_end - 1e-12 * max(1.0, cfg.t_end):
        if nsteps >= cfg.max_steps:
            raise NumericalBlowupError(f"step budget {cfg.max_steps} exhausted at t={t:.6g}", None, t, trajectory())
        dt = _dt_limit(float(h.max()), dx, params, cfg)
        target = outputs[0] if outputs else cfg.t_end
        landing = t + dt >= target - 1e-12 * max(1.0, target)
        if landing:
            dt = target - t
        try:
            h, clipped, out_l, out_r = _advance(h, grid, params, bc, cfg, dt, t, wall)
        except NumericalBlowupError as exc:
            exc.trajectory = trajectory()
            raise
        t = target if landing else t + dt
        nsteps += 1
        clipped_total += clipped
        outflow["touch"] += out_l
        outflow["deep"] += out_r
        at_output = bool(outputs) and landing
        if at_output or nsteps % cfg.record_every == 0 or t >= cfg.t_end - 1e-12:
            record()
        if at_output:
            while outputs and outputs[0] <= t + 1e-12:
                snapshot()
                outputs.pop(0)
    if clipped_total:
        log.info("run clipped %.3g of negative mass over %d steps", clipped_total, nsteps)
    return trajectory()
