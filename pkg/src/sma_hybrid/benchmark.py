"""Hybrid-versus-MAS batch on seeded random-step scenarios of the coupled robot."""

from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .material import MaterialParams
from .scenarios import DEFAULT_T_END, StepSpec, discrepancy, resample, scenario_inputs
from .solver import HybridTrajectory, SolverOptions, simulate
from .structure import BeamParams, CoupledSystem

logger = logging.getLogger(__name__)

ALPHA = 2          # column of the tip angle in the coupled state


@dataclass
class RunSetup:
    bp: BeamParams
    p: MaterialParams
    T_E: float = 298.0
    t_end: float = DEFAULT_T_END
    dt: float = 0.05
    solver: dict = field(default_factory=dict)   # SolverOptions fields except atol
    j_max: int = 10**6

    def sample_times(self) -> np.ndarray:
        n = int(round(self.t_end / self.dt))
        return np.linspace(0.0, self.t_end, n + 1)


def run_coupled(setup: RunSetup, variant: str, inputs) -> tuple[HybridTrajectory, CoupledSystem, float]:
    """One coupled run; returns the trajectory, the system and the integration wall time."""
    system = CoupledSystem(setup.bp, setup.p, T_E=setup.T_E, variant=variant)
    opts = SolverOptions(atol=system.atol(), **setup.solver)
    x0 = system.initial_state()
    samples = setup.sample_times()
    start = time.perf_counter()
    traj = simulate(system, x0, inputs, setup.t_end, j_max=setup.j_max, opts=opts, sample_times=samples)
    elapsed = time.perf_counter() - start
    return traj, system, elapsed


@dataclass
class ScenarioResult:
    index: int
    times: dict[str, float] = field(default_factory=dict)
    jumps: dict[str, int] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)
    termination: dict[str, str] = field(default_factory=dict)
    max_discrepancy: float = float("nan")
    rms_discrepancy: float = float("nan")
    alpha_range: float = float("nan")
    error: str = ""


@dataclass
class BenchmarkReport:
    variants: tuple[str, str]
    seed: int
    repetitions: int
    scenarios: list[ScenarioResult]

    @property
    def ok(self) -> list[ScenarioResult]:
        return [s for s in self.scenarios if not s.error]

    def median_time(self, variant: str) -> float:
        return statistics.median(s.times[variant] for s in self.ok)

    @property
    def ratio(self) -> float:
        """Median time of the first variant over the median time of the second."""
        a, b = self.variants
        return self.median_time(a) / self.median_time(b)

    def summary(self) -> dict:
        a, b = self.variants
        ok = self.ok
        return {
            "variants": list(self.variants),
            "seed": self.seed,
            "scenarios": len(self.scenarios),
            "failed": len(self.scenarios) - len(ok),
            "repetitions": self.repetitions,
            f"median_time_{a}_s": self.median_time(a) if ok else None,
            f"median_time_{b}_s": self.median_time(b) if ok else None,
            f"mean_time_{a}_s": statistics.fmean(s.times[a] for s in ok) if ok else None,
            f"mean_time_{b}_s": statistics.fmean(s.times[b] for s in ok) if ok else None,
            "time_ratio": self.ratio if ok else None,
            "max_discrepancy": max(s.max_discrepancy for s in ok) if ok else None,
            "mean_rms_discrepancy": statistics.fmean(s.rms_discrepancy for s in ok) if ok else None,
            f"median_jumps_{a}": statistics.median(s.jumps[a] for s in ok) if ok else None,
        }

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "scenarios": [asdict(s) for s in self.scenarios]}


def run_scenario(setup: RunSetup, index: int, inputs, variants=("hybrid", "mas"),
                 repetitions: int = 3) -> ScenarioResult:
    res = ScenarioResult(index)
    samples = setup.sample_times()
    alphas = []
    try:
        for label in variants:
            variant = label.split("#")[0]
            times = []
            for _ in range(repetitions):
                traj, _, elapsed = run_coupled(setup, variant, inputs)
                times.append(elapsed)
            if traj.termination != "time-horizon":
                raise RuntimeError(f"{variant} run ended with {traj.termination}: {traj.message}")
            res.times[label] = statistics.median(times)
            res.jumps[label] = traj.n_jumps
            res.steps[label] = int(traj.stats.get("steps", 0))
            res.termination[label] = traj.termination
            alphas.append(resample(traj, ALPHA, samples))
        d = discrepancy(alphas[0], alphas[1])
        res.max_discrepancy, res.rms_discrepancy, res.alpha_range = d["max"], d["rms"], d["alpha_range"]
    except Exception as exc:    # a failing scenario is recorded, the batch goes on
        logger.error("scenario %d failed: %s", index, exc)
        res.error = f"{type(exc).__name__}: {exc}"
    return res


def _job(args):
    return run_scenario(*args)


def run_benchmark(setup: RunSetup, n: int = 30, seed: int = 0, variants=("hybrid", "mas"),
                  repetitions: int = 3, steps: StepSpec | None = None, workers: int = 1) -> BenchmarkReport:
    """Run ``n`` random-step scenarios with both variants.

    ``workers > 1`` spreads scenarios over processes; timings are then only
    comparable if the machine has that many idle cores.
    """
    if n < 1:
        raise ValueError("need at least one scenario")
    steps = steps or StepSpec(t_end=setup.t_end)
    steps = replace(steps, t_end=setup.t_end)
    inputs = scenario_inputs(seed, n, steps)
    variants = tuple(variants)
    if variants[0] == variants[1]:
        variants = (variants[0], variants[1] + "#2")     # self-comparison keeps two labels
    jobs = [(setup, k, inp, variants, repetitions) for k, inp in enumerate(inputs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_job(job))
            r = results[-1]
            logger.info("scenario %d: %s discrepancy %.3g", r.index, r.times, r.max_discrepancy)
    return BenchmarkReport(variants, seed, repetitions, results)
