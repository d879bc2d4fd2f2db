"""Command-line front end: ``simulate``, ``benchmark``, ``calibrate``, ``isotherm``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import config as cfgmod
from .benchmark import RunSetup, run_benchmark
from .calibration import (
    CalibrationError,
    FitSpec,
    IsothermCurve,
    analyze_isotherm,
    fit,
    simulate_isotherm,
)
from .config import ConfigError
from .hybrid_wire import HybridModelError, WireSystem, initial_state
from .material import MaterialError, save_params, sigma_MW
from .mas import MasWireSystem
from .scenarios import StepSpec, loop_areas, resample, scenario_inputs, sinusoid, steps
from .solver import Constant, simulate
from .structure import CoupledSystem, StructureError

logger = logging.getLogger("sma_hybrid")

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_CALIBRATION = 0, 2, 3, 4


class SimulationFailure(RuntimeError):
    pass


def version_string() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{version}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


def manifest(command: str, cfg: dict, **extra) -> dict:
    out = {
        "command": command,
        "version": version_string(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "config": cfg,
    }
    out.update(extra)
    return out


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


def write_table(path: Path, columns: list[str], rows, meta: dict, fmt: str = "csv") -> Path:
    """CSV with a ``# manifest:`` comment line, or JSON lines with the manifest first."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            fh.write(json.dumps({"manifest": meta}, default=_jsonable) + "\n")
            for row in rows:
                fh.write(json.dumps(dict(zip(columns, map(_jsonable, row)))) + "\n")
        else:
            fh.write("# manifest: " + json.dumps(meta, default=_jsonable) + "\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_json(path: Path, data: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, default=_jsonable)
        fh.write("\n")
    return path


# --- input signals ------------------------------------------------------------------------

class _Mapped:
    """Signal whose value is ``fn(inner(t))``, keeping the breakpoints of ``inner``."""

    def __init__(self, inner, fn):
        self.inner, self.fn = inner, fn

    def __call__(self, t):
        return self.fn(self.inner(t))

    def segment(self, t):
        t_next, piece = self.inner.segment(t)
        return t_next, _Mapped(piece, self.fn)


def build_signal(cfg: dict, seed: int):
    inp = cfg["input"]
    kind = inp["type"]
    t_end = cfg["horizon"]["t_end"]
    if kind == "random-steps":
        dwell = inp.get("dwell", [2.0, 20.0])
        spec = StepSpec(inp.get("J_max", 2.0), dwell[0], dwell[1], t_end)
        return scenario_inputs(seed, 1, spec)[0]
    if kind == "steps":
        return steps(inp["durations"], inp["amplitudes"])
    if kind == "sinusoid":
        return sinusoid(inp.get("amplitude", 2.0), inp["frequency"], inp.get("offset", 0.0))
    return Constant(float(inp["value"]))


# --- commands -----------------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path, seed: int, base_dir: Path | None = None) -> dict:
    p = cfgmod.material(cfg, base_dir)
    model = cfg["model"]
    T_E = float(cfg["T_E"])
    t_end = float(cfg["horizon"]["t_end"])
    signal = build_signal(cfg, seed)
    dt = cfg["output"]["dt"]
    samples = np.linspace(0.0, t_end, int(round(t_end / dt)) + 1)
    fmt = cfg["output"]["format"]
    ext = "jsonl" if fmt == "jsonl" else "csv"

    if model.startswith("coupled-"):
        bp = cfgmod.beam(cfg)
        system = CoupledSystem(bp, p, T_E=T_E, variant=model.split("-")[1])
        x0 = system.initial_state()
        inputs = signal
        columns = system.columns()
        extra = {"beam": bp.to_dict()}
    else:
        wire = cfg["wire"]
        v = float(wire["v"])
        x_M0 = float(wire["x_M0"])
        eps0 = wire["eps0"]
        if eps0 is None:
            eps0 = stress_free_strain(p, T_E, x_M0)
        inputs = _Mapped(signal, lambda J: (v, max(0.0, float(J)), T_E))
        if model == "hybrid":
            system = WireSystem(p)
            x0 = initial_state(p, float(eps0), T_E, x_M0)
            columns = ["t_s", "j", "J_W", "eps", "T_K", "x3", "q", "xM", "sigma_Pa", "f_N"]
        else:
            system = MasWireSystem(p)
            x0 = (np.array([float(eps0), x_M0, T_E]), ())
            columns = ["t_s", "j", "J_W", "eps", "T_K", "xM", "sigma_Pa", "f_N"]
        extra = {}

    opts = cfgmod.solver_options(cfg, system.atol() if hasattr(system, "atol") else _wire_atol(model))
    traj = simulate(system, x0, inputs, t_end, j_max=cfg["horizon"]["j_max"], opts=opts, sample_times=samples)

    if isinstance(system, CoupledSystem):
        rows = list(system.rows(traj))
        system.check_small_deformation(traj)
    else:
        rows = [[t, int(j), u[1], *system.output(z, d)] for t, j, z, d, u in
                zip(traj.t, traj.j, traj.z, traj.d, traj.u)]

    jumps = [{"t_s": r.t, "j": r.j, "jump": _jsonable(r.jump), "d_before": _jsonable(r.d_before),
              "d_after": _jsonable(r.d_after)} for r in traj.jumps]
    summary = {"termination": traj.termination, "message": traj.message, "jumps": traj.n_jumps,
               "stats": {k: _jsonable(v) for k, v in traj.stats.items()}}
    if isinstance(system, CoupledSystem) and cfg["input"]["type"] == "sinusoid":
        grid = samples
        alpha = resample(traj, 2, grid)
        J = np.array([signal(t) for t in grid])
        period = 1.0 / cfg["input"]["frequency"]
        summary["loop_areas_rad_W"] = loop_areas(J, alpha, grid, period)

    meta = manifest("simulate", cfg, seed=seed, material=p.to_dict(),
                    solver={"method": opts.method, "rtol": opts.rtol, "atol": _jsonable(np.asarray(opts.atol)),
                            "guard_tol": opts.guard_tol, "event_tol": opts.event_tol},
                    **extra)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / f"trajectory.{ext}", columns, rows, meta, fmt)
    write_table(out / "jumps.csv", ["t_s", "j", "jump", "d_before", "d_after"],
                ([r["t_s"], r["j"], json.dumps(r["jump"]), json.dumps(r["d_before"]), json.dumps(r["d_after"])]
                 for r in jumps), meta)
    write_json(out / "manifest.json", {**meta, "result": summary})
    if traj.termination != "time-horizon":
        raise SimulationFailure(f"simulation ended with {traj.termination}: {traj.message}")
    return summary


def stress_free_strain(p, T_E: float, x_M: float) -> float:
    """Strain that holds the wire at sigma_MW(T_E) with phase fraction ``x_M``."""
    s = sigma_MW(p, T_E)
    return s * (x_M / p.E_M + (1 - x_M) / p.E_A) + p.eps_T * x_M


def _wire_atol(model: str):
    return [1e-8, 1e-6] if model == "hybrid" else [1e-8, 1e-9, 1e-6]


def cmd_benchmark(cfg: dict, out: Path, seed: int, repetitions: int | None = None,
                  variant: str | None = None, base_dir: Path | None = None) -> dict:
    p = cfgmod.material(cfg, base_dir)
    bp = cfgmod.beam(cfg)
    bench = cfg["benchmark"]
    reps = repetitions or bench["repetitions"]
    variants = (variant, variant) if variant else tuple(bench["variants"])
    inp = cfg["input"]
    dwell = inp.get("dwell", [2.0, 20.0]) if inp["type"] == "random-steps" else [2.0, 20.0]
    steps_spec = StepSpec(inp.get("J_max", 2.0) if inp["type"] == "random-steps" else 2.0,
                          dwell[0], dwell[1], cfg["horizon"]["t_end"])
    setup = RunSetup(bp, p, T_E=float(cfg["T_E"]), t_end=float(cfg["horizon"]["t_end"]),
                     dt=cfg["output"]["dt"], solver=dict(cfg["solver"]), j_max=cfg["horizon"]["j_max"])
    report = run_benchmark(setup, bench["scenarios"], seed, variants, reps, steps_spec, bench["workers"])
    data = report.to_dict()
    meta = manifest("benchmark", cfg, seed=seed, material=p.to_dict(), beam=bp.to_dict())
    write_json(out / "benchmark.json", {"manifest": meta, **data})
    a, b = report.variants
    rows = [[s.index, s.times.get(a), s.times.get(b), s.jumps.get(a), s.jumps.get(b), s.steps.get(a),
             s.steps.get(b), s.max_discrepancy, s.rms_discrepancy, s.alpha_range, s.error]
            for s in report.scenarios]
    write_table(out / "benchmark.csv",
                ["scenario", f"time_{a}_s", f"time_{b}_s", f"jumps_{a}", f"jumps_{b}", f"steps_{a}",
                 f"steps_{b}", "max_discrepancy", "rms_discrepancy", "alpha_range_rad", "error"], rows, meta)
    return data["summary"]


def _synthetic_curves(p, temps, eps_max, rate, n_samples):
    return [simulate_isotherm(p, T, eps_max, rate, n_samples) for T in temps]


def cmd_calibrate(cfg: dict, out: Path, seed: int, base_dir: Path | None = None) -> dict:
    cal = cfg["calibration"]
    truth = cfgmod.material(cfg, base_dir)
    iso = cfg["isotherm"]
    free = tuple(cal["free"]) if cal["free"] else FitSpec().free
    spec = FitSpec(tuple("lam" if n == "lambda" else n for n in free),
                   {("lam" if k == "lambda" else k): tuple(v) for k, v in cal["bounds"].items()},
                   rate=iso["rate"])
    if cal["synthetic"]:
        syn = cal["synthetic"]
        temps = syn.get("temperatures", [292.0, 315.0, 338.0])
        curves = _synthetic_curves(truth, temps, iso["eps_max"], iso["rate"], syn.get("n_samples", 201))
        rng = np.random.default_rng(seed)
        spread = float(syn.get("perturbation", 0.2))
        guess = truth.with_values(**{n: getattr(truth, n) * (1 + spread * rng.choice([-1.0, 1.0]))
                                     for n in spec.free})
    else:
        if not cal["curves"]:
            raise ConfigError("needs curve files or a 'synthetic' block", "calibration.curves")
        paths = [Path(c) if base_dir is None or Path(c).is_absolute() else base_dir / c for c in cal["curves"]]
        curves = [IsothermCurve.from_csv(path) for path in paths]
        guess = truth
        if cal["guess"] is not None:
            guess = cfgmod.material({"material": cal["guess"]}, base_dir)
    result = fit(curves, spec, guess)
    out.mkdir(parents=True, exist_ok=True)
    save_params(result.params, out / "fitted_params.json")
    report = {"loss_Pa2": result.loss, "guess": guess.to_dict(), "fitted": result.params.to_dict(),
              "diagnostics": result.diagnostics}
    if cal["synthetic"]:
        report["relative_error"] = {n: getattr(result.params, n) / getattr(truth, n) - 1 for n in spec.free}
    write_json(out / "fit_report.json", {"manifest": manifest("calibrate", cfg, seed=seed), **report})
    if not result.diagnostics.get("converged", False):
        raise CalibrationError("optimizer did not converge; best-so-far parameters written")
    return report


def cmd_isotherm(cfg: dict, out: Path, base_dir: Path | None = None) -> dict:
    p = cfgmod.material(cfg, base_dir)
    iso = cfg["isotherm"]
    curve = simulate_isotherm(p, float(iso["T_E"]), iso["eps_max"], iso["rate"], int(iso["n_samples"]))
    features = analyze_isotherm(curve)
    meta = manifest("isotherm", cfg, material=p.to_dict(), features=features)
    rows = [[e, s, "loading"] for e, s in zip(curve.load_eps, curve.load_sigma)]
    rows += [[e, s, "unloading"] for e, s in zip(curve.unload_eps, curve.unload_sigma)]
    write_table(out / f"isotherm_{iso['T_E']:g}K.csv", ["eps", "sigma_Pa", "branch"], rows, meta)
    return features


# --- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sma-hybrid", description="Hybrid SMA wire and flexible robot simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("simulate", "run one scenario and write its trajectory"),
                            ("benchmark", "hybrid vs MAS batch on random-step scenarios"),
                            ("calibrate", "fit material parameters to isotherms"),
                            ("isotherm", "quasi-static stress-strain sweep")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, help="JSON configuration file")
        cmd.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        cmd.add_argument("--seed", type=int, help="seed (overrides the config)")
        if name in ("simulate", "benchmark"):
            cmd.add_argument("--variant", choices=("hybrid", "mas"),
                             help="wire model (benchmark: compare this variant with itself)")
        if name == "benchmark":
            cmd.add_argument("--repetitions", type=int, help="timing repetitions per run")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        base_dir = args.config.parent if args.config else None
        seed = args.seed if args.seed is not None else cfg["seed"]
        if seed < 0:
            raise ConfigError("must be non-negative", "seed")
        if args.command == "simulate":
            if args.variant:
                cfg["model"] = ("coupled-" if cfg["model"].startswith("coupled-") else "") + args.variant
            result = cmd_simulate(cfg, args.out, seed, base_dir)
        elif args.command == "benchmark":
            if args.repetitions is not None and args.repetitions < 1:
                raise ConfigError("must be >= 1", "--repetitions")
            result = cmd_benchmark(cfg, args.out, seed, args.repetitions, args.variant, base_dir)
        elif args.command == "calibrate":
            result = cmd_calibrate(cfg, args.out, seed, base_dir)
        else:
            result = cmd_isotherm(cfg, args.out, base_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (SimulationFailure, HybridModelError, StructureError, MaterialError, ZeroDivisionError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    print(json.dumps(result, indent=2, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
