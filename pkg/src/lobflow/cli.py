"""Scenario runner and data emitter.

Config files are flat UTF-8 text, one ``key = value`` per line, ``#`` starts
a comment and dotted keys group related settings (``grid.n_cells = 800``).

Outputs per scenario run:
    snap_NNNN.csv   "# t=<time>" header line, then columns S,h,p
    touch.csv       t,S0,mass,peak_h
    analysis.json   results of the requested analyses
    manifest.json   config echo, version, grid/CFL used, wall-clock, file list

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (UnfittableError, collapse, estimate_gamma, fit_height_exponent,
                       fit_touch_exponent, steady_distance)
from .core import BookProfile, PhysicalParams, PriceGrid, RelaxationSource, Side, TabulatedSource, ZeroSource
from .exact import parabolic_cap, steady_profile
from .pde import (BCKind, BoundaryCondition, FluxModel, Location, Mode, NumericalBlowupError,
                  SolverConfig, run, take_liquidity)
from .similarity import NoPositiveSolutionError, ShootingConfig, solve_similarity

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _choice(*options):
    def parse(text):
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return t
    parse.__name__ = "one of " + "|".join(options)
    return parse


# key -> (parser, required, default)
SCHEMA = {
    "scenario": (str, True, None),
    "side": (_choice("ask", "bid"), False, "ask"),
    "grid.s_min": (float, True, None),
    "grid.s_max": (float, True, None),
    "grid.n_cells": (int, True, None),
    "initial.kind": (_choice("uniform_band", "steady", "parabolic_cap", "file"), True, None),
    "initial.depth": (float, False, 1.0),
    "initial.s_lo": (float, False, None),
    "initial.s_hi": (float, False, None),
    "initial.a": (float, False, None),
    "initial.s_b": (float, False, None),
    "initial.c_mass": (float, False, None),
    "initial.t": (float, False, 0.0),
    "initial.center": (float, False, 0.0),
    "initial.file": (str, False, None),
    "liquidity.take": (float, False, 0.0),
    "params.theta": (float, False, 1.0),
    "params.rho": (float, False, 1.0),
    "params.beta": (float, False, 1.0),
    "params.u0": (float, False, 0.0),
    "source.kind": (_choice("zero", "relax", "tabulated"), False, "zero"),
    "source.kappa": (float, False, None),
    "source.target": (float, False, None),
    "source.file": (str, False, None),
    "bc.touch.kind": (_choice("zero_flux", "depth", "slope", "flux", "firm_stop"), False, "zero_flux"),
    "bc.touch.value": (float, False, None),
    "bc.deep.kind": (_choice("zero_flux", "depth", "slope", "flux"), False, "zero_flux"),
    "bc.deep.value": (float, False, None),
    "solver.t_end": (float, True, None),
    "solver.output_times": (_floats, False, None),
    "solver.cfl_safety": (float, False, 0.25),
    "solver.mode": (_choice("full", "source_only"), False, "full"),
    "solver.flux_model": (_choice("canonical", "microstructure"), False, "canonical"),
    "solver.record_every": (int, False, 10),
    "analysis.fit_touch": (_bool, False, False),
    "analysis.fit_height": (_bool, False, False),
    "analysis.collapse": (_floats, False, None),
    "analysis.gamma": (_bool, False, False),
    "analysis.steady_distance": (_bool, False, False),
    "analysis.golden": (_bool, False, False),
    "analysis.window": (_floats, False, None),
    "output.dir": (str, False, None),
    "seed": (int, False, 0),
}


@dataclass
class ScenarioConfig:
    values: dict
    text: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def name(self):
        return self.values["scenario"]

    @property
    def side(self):
        return Side(self.values["side"])

    def grid(self) -> PriceGrid:
        v = self.values
        return PriceGrid(v["grid.s_min"], v["grid.s_max"], v["grid.n_cells"])

    def params(self) -> PhysicalParams:
        v = self.values
        kind = v["source.kind"]
        if kind == "relax":
            source = RelaxationSource(v["source.kappa"], v["source.target"])
        elif kind == "tabulated":
            source = TabulatedSource(_read_column(self.base_dir / v["source.file"], "P"))
        else:
            source = ZeroSource()
        return PhysicalParams(v["params.theta"], v["params.rho"], v["params.beta"], v["params.u0"], source)

    def boundary_conditions(self):
        v = self.values
        kind = BCKind(v["bc.touch.kind"])
        if kind is BCKind.FIRM_STOP:
            touch = BoundaryCondition.firm_stop(v["bc.touch.value"])
        else:
            touch = BoundaryCondition(kind, v["bc.touch.value"], Location.TOUCH)
        deep = BoundaryCondition(BCKind(v["bc.deep.kind"]), v["bc.deep.value"], Location.DEEP)
        return touch, deep

    def solver_config(self) -> SolverConfig:
        v = self.values
        outs = v["solver.output_times"]
        if outs is None:
            outs = [v["initial.t"], v["solver.t_end"]]
        return SolverConfig(
            t_end=v["solver.t_end"],
            output_times=tuple(outs),
            cfl_safety=v["solver.cfl_safety"],
            mode=Mode(v["solver.mode"]),
            flux_model=FluxModel(v["solver.flux_model"]),
            record_every=v["solver.record_every"],
        )

    def initial_profile(self) -> BookProfile:
        v = self.values
        grid = self.grid()
        side = self.side
        kind = v["initial.kind"]
        t0 = v["initial.t"]
        if kind == "uniform_band":
            x = grid.centers
            h = np.where((x > v["initial.s_lo"]) & (x < v["initial.s_hi"]), v["initial.depth"], 0.0)
            prof = BookProfile(grid, h, side, t0)
        elif kind == "steady":
            prof = steady_profile(v["initial.a"], v["initial.s_b"], grid, side)
            prof = prof.with_depth(prof.h, t0)
        elif kind == "parabolic_cap":
            prof = parabolic_cap(v["initial.c_mass"], t0, v["initial.center"], grid)
            prof = BookProfile(grid, prof.h, side, t0)
        else:
            prof = BookProfile(grid, _read_column(self.base_dir / v["initial.file"], "h"), side, t0)
        if v["liquidity.take"] > 0:
            prof, _ = take_liquidity(prof, v["liquidity.take"])
        return prof


_REQUIRES = {
    ("initial.kind", "uniform_band"): ("initial.s_lo", "initial.s_hi"),
    ("initial.kind", "steady"): ("initial.a", "initial.s_b"),
    ("initial.kind", "parabolic_cap"): ("initial.c_mass",),
    ("initial.kind", "file"): ("initial.file",),
    ("source.kind", "relax"): ("source.kappa", "source.target"),
    ("source.kind", "tabulated"): ("source.file",),
    ("bc.touch.kind", "depth"): ("bc.touch.value",),
    ("bc.touch.kind", "slope"): ("bc.touch.value",),
    ("bc.touch.kind", "flux"): ("bc.touch.value",),
    ("bc.deep.kind", "depth"): ("bc.deep.value",),
    ("bc.deep.kind", "slope"): ("bc.deep.value",),
    ("bc.deep.kind", "flux"): ("bc.deep.value",),
}


def validate_config(text: str, base_dir=None) -> ScenarioConfig:
    """Parse config text, collecting every problem before raising ``ConfigError``."""
    errors = []
    raw, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r} (first set on line {where[key]})")
            continue
        raw[key], where[key] = value, lineno

    values = {}
    for key, (parse, required, default) in SCHEMA.items():
        if key not in raw:
            if required:
                errors.append(f"missing required key {key!r}")
            values[key] = default
            continue
        try:
            values[key] = parse(raw[key])
        except ValueError as exc:
            kind = getattr(parse, "__name__", "value")
            errors.append(f"line {where[key]}: {key} expects {kind}: {exc}")
            values[key] = default

    for (key, val), needed in _REQUIRES.items():
        if values.get(key) == val:
            for n in needed:
                if values.get(n) is None and not any(n in e for e in errors):
                    errors.append(f"missing key {n!r} required by {key} = {val}")
    if not errors:
        if values["grid.n_cells"] < 4:
            errors.append(f"line {where['grid.n_cells']}: grid.n_cells must be >= 4")
        if not values["grid.s_max"] > values["grid.s_min"]:
            errors.append(f"line {where['grid.s_max']}: grid.s_max must exceed grid.s_min")
        outs = values["solver.output_times"]
        if outs and (sorted(outs) != outs or outs[-1] > values["solver.t_end"]):
            errors.append(f"line {where['solver.output_times']}: output times must be sorted and <= t_end")
        if not 0 < values["solver.cfl_safety"] <= 1:
            errors.append(f"line {where['solver.cfl_safety']}: cfl_safety must lie in (0, 1]")
        w = values["analysis.window"]
        if w is not None and (len(w) != 2 or not w[0] < w[1]):
            errors.append(f"line {where['analysis.window']}: analysis.window needs two increasing times")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(values, text, Path(base_dir) if base_dir else Path.cwd())


def builtin_scenarios():
    return sorted(p.name[:-4] for p in resources.files("lobflow.scenarios").iterdir() if p.name.endswith(".cfg"))


def load_config(name_or_path) -> ScenarioConfig:
    """Load a config file, or a built-in scenario by name."""
    path = Path(name_or_path)
    if path.is_file():
        return validate_config(path.read_text(encoding="utf-8"), path.parent)
    builtin = resources.files("lobflow.scenarios") / f"{name_or_path}.cfg"
    if builtin.is_file():
        return validate_config(builtin.read_text(encoding="utf-8"))
    raise ConfigError([f"no config file or built-in scenario named {str(name_or_path)!r}"])


def golden_thresholds() -> dict:
    """n_cells -> maximum accepted L1 error for the barenblatt_golden scenario."""
    text = (resources.files("lobflow.scenarios") / "golden_thresholds.csv").read_text(encoding="utf-8")
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    return {int(r["n_cells"]): float(r["max_l1"]) for r in rows}


def _read_column(path, column):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        return np.array([float(r[column]) for r in rows])


# -- output -----------------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x}")
    return f"{x:.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunManifest:
    config: dict
    code_version: str
    grid: dict
    cfl_safety: float | None
    wall_clock: float
    files: list
    status: str = "ok"
    message: str = ""

    def write(self, out_dir: Path):
        _write_json(out_dir / "manifest.json", asdict(self))


_OWNED = ("snap_*.csv", "touch.csv", "analysis.json", "manifest.json", "similarity_*.csv")


def _prepare_dir(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for pattern in _OWNED:
        for stale in out_dir.glob(pattern):
            stale.unlink()


def write_snapshot(path: Path, profile: BookProfile, params: PhysicalParams):
    lines = [f"# t={_fmt(profile.t)}", "S,h,p"]
    p = params.theta * profile.h
    lines += [f"{_fmt(s)},{_fmt(h)},{_fmt(q)}" for s, h, q in zip(profile.centers, profile.h, p)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_touch(path: Path, traj):
    lines = ["t,S0,mass,peak_h"]
    for t, s, m, pk in zip(traj.times, traj.touch, traj.mass, traj.peak):
        if math.isfinite(s):
            lines.append(f"{_fmt(t)},{_fmt(s)},{_fmt(m)},{_fmt(pk)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fit_dict(fit):
    return {"exponent": fit.exponent, "prefactor": fit.prefactor, "window": fit.fit_window,
            "r_squared": fit.r_squared, "n_samples": fit.n_samples}


def analyse(cfg: ScenarioConfig, traj, initial: BookProfile) -> dict:
    v = cfg.values
    window = tuple(v["analysis.window"]) if v["analysis.window"] else None
    out = {}
    if v["analysis.fit_touch"]:
        try:
            out["touch_exponent"] = _fit_dict(fit_touch_exponent(traj, window))
        except UnfittableError as exc:
            out["touch_exponent"] = {"error": str(exc)}
    if v["analysis.fit_height"]:
        try:
            out["height_exponent"] = _fit_dict(fit_height_exponent(traj, window))
        except UnfittableError as exc:
            out["height_exponent"] = {"error": str(exc)}
    if v["analysis.collapse"]:
        rep = collapse(traj, v["analysis.collapse"])
        out["collapse"] = {"times": rep.times, "max_distance": rep.max_distance}
    if v["analysis.gamma"]:
        try:
            out["gamma"] = {"deep_book": estimate_gamma(traj, window),
                            "peak": estimate_gamma(traj, window, normalization="peak")}
        except UnfittableError as exc:
            out["gamma"] = {"error": str(exc)}
    if v["analysis.steady_distance"]:
        out["steady_distance"] = [{"t": p.t, "distance": steady_distance(p)}
                                  for p in traj.snapshots if p.h.sum() > 0]
    if v["analysis.golden"]:
        final = traj.snapshots[-1]
        exact = parabolic_cap(v["initial.c_mass"], final.t, v["initial.center"], final.grid)
        l1 = float(np.abs(final.h - exact.h).sum() * final.grid.dx)
        limit = golden_thresholds().get(v["grid.n_cells"])
        out["golden"] = {"t": final.t, "l1_error": l1, "threshold": limit,
                         "passed": None if limit is None else bool(l1 <= limit)}
    out["mass"] = {"initial": traj.mass[0], "final": traj.mass[-1],
                   "clipped": traj.clipped_mass, "boundary_outflow": traj.boundary_outflow}
    out["steps"] = traj.steps
    return out


def run_scenario(config: ScenarioConfig, out_dir=None) -> RunManifest:
    start = time.perf_counter()
    out_dir = Path(out_dir or config.values["output.dir"] or Path("out") / config.name)
    _prepare_dir(out_dir)
    params = config.params()
    scfg = config.solver_config()
    initial = config.initial_profile()
    files = []
    status, message = "ok", ""
    try:
        traj = run(initial, params, config.boundary_conditions(), scfg)
    except NumericalBlowupError as exc:
        traj, status, message = exc.trajectory, "numerical_failure", str(exc)
        log.error("solver failed: %s", exc)
    if traj is not None:
        for k, snap in enumerate(traj.snapshots):
            name = f"snap_{k:04d}.csv"
            write_snapshot(out_dir / name, snap, params)
            files.append({"name": name, "role": "snapshot"})
        write_touch(out_dir / "touch.csv", traj)
        files.append({"name": "touch.csv", "role": "touch_series"})
        if status == "ok":
            _write_json(out_dir / "analysis.json", analyse(config, traj, initial))
            files.append({"name": "analysis.json", "role": "analysis"})
    files.append({"name": "manifest.json", "role": "manifest"})
    g = config.grid()
    manifest = RunManifest(
        config=dict(config.values), code_version=__version__,
        grid={"s_min": g.s_min, "s_max": g.s_max, "n_cells": g.n_cells, "dx": g.dx},
        cfl_safety=scfg.cfl_safety, wall_clock=time.perf_counter() - start,
        files=files, status=status, message=message,
    )
    manifest.write(out_dir)
    if status != "ok":
        raise NumericalBlowupError(message, trajectory=traj)
    return manifest


def _solve_one(gamma, cfg):
    try:
        return gamma, solve_similarity(gamma, cfg), None
    except (NoPositiveSolutionError, RuntimeError, ValueError) as exc:
        return gamma, None, str(exc)


def run_similarity_sweep(gammas, cfg: ShootingConfig | None = None, out_dir="out/similarity",
                         workers: int = 1) -> RunManifest:
    start = time.perf_counter()
    cfg = cfg or ShootingConfig()
    out_dir = Path(out_dir)
    _prepare_dir(out_dir)
    gammas = [float(g) for g in gammas]
    if workers > 1 and len(gammas) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_solve_one, gammas, [cfg] * len(gammas)))
    else:
        results = [_solve_one(g, cfg) for g in gammas]

    files = []
    summary = ["gamma,v_inf,s_peak,residual,status,reason"]
    for g, prof, err in results:
        if prof is None:
            summary.append(f"{_fmt(g)},,,,failed,\"{err}\"")
            continue
        name = f"similarity_gamma_{g:g}.csv"
        rows = ["s,v,v_prime"] + [f"{_fmt(s)},{_fmt(v)},{_fmt(d)}"
                                  for s, v, d in zip(prof.s_grid, prof.v, prof.v_prime)]
        (out_dir / name).write_text("\n".join(rows) + "\n", encoding="utf-8")
        files.append({"name": name, "role": "similarity_profile"})
        summary.append(f"{_fmt(g)},{_fmt(prof.v_inf)},{_fmt(prof.s_peak)},{_fmt(prof.residual)},ok,")
    (out_dir / "similarity_summary.csv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    files.append({"name": "similarity_summary.csv", "role": "summary"})
    files.append({"name": "manifest.json", "role": "manifest"})
    manifest = RunManifest(config={"gammas": gammas, **asdict(cfg)}, code_version=__version__,
                           grid={}, cfl_safety=None, wall_clock=time.perf_counter() - start, files=files)
    manifest.write(out_dir)
    return manifest


# -- command line -----------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lobflow", description=__doc__.split("\n")[0])
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config or built-in scenario")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_sim = sub.add_parser("similarity", help="solve similarity profiles for a list of gammas")
    p_sim.add_argument("--gamma", required=True, help="comma separated gamma values")
    p_sim.add_argument("--out", default="out/similarity")
    p_sim.add_argument("--workers", type=int, default=1)
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    sub.add_parser("golden", help="run the acceptance criteria")
    for p in (p_run, p_sim, p_val):
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    say = (lambda *a: None) if args.quiet else print

    if args.command in ("run", "validate"):
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            for e in exc.errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_INVALID
        if args.command == "validate":
            say(f"{args.config}: ok")
            return EXIT_OK
        try:
            manifest = run_scenario(cfg, args.out)
        except NumericalBlowupError as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        except (ValueError, LookupError) as exc:
            print(f"invalid scenario: {exc}", file=sys.stderr)
            return EXIT_INVALID
        say(f"{cfg.name}: wrote {len(manifest.files)} files in {manifest.wall_clock:.1f} s")
        return EXIT_OK

    if args.command == "similarity":
        try:
            gammas = _floats(args.gamma) if args.gamma.strip() else []
        except ValueError as exc:
            print(f"bad --gamma list: {exc}", file=sys.stderr)
            return EXIT_INVALID
        manifest = run_similarity_sweep(gammas, out_dir=args.out, workers=args.workers)
        say(f"similarity sweep: wrote {len(manifest.files)} files")
        return EXIT_OK

    from .acceptance import run_all
    results = run_all(verbose=not args.quiet)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
