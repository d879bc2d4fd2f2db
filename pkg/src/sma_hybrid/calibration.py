"""Identification of wire parameters from isothermal stress-strain curves.

A curve is produced by pulling the wire quasi-statically along a triangular
strain profile at a fixed ambient temperature. The fit replays that profile
with trial parameters and matches the stress at the measured strains.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .hybrid_wire import HybridModelError, WireSystem
from .material import MaterialError, MaterialParams
from .solver import PiecewiseConstant, SolverOptions, simulate

logger = logging.getLogger(__name__)

FITTABLE = ("E_A", "E_M", "eps_T", "sigma_T", "c_V", "lam", "sigma_MW_T0", "delta_sigma")
FIXED = ("T0", "r0", "l0", "rho_V")
DEFAULT_FREE = ("E_A", "E_M", "eps_T", "sigma_MW_T0", "delta_sigma", "sigma_T")
DEFAULT_RATE = 1e-4           # strain per second: self-heating stays in the mK range
PENALTY = 1e3                 # residual [MPa] returned for inadmissible trial parameters


class CalibrationError(ValueError):
    pass


@dataclass
class IsothermCurve:
    """Loading and unloading branches measured at one ambient temperature."""

    T_E: float
    load_eps: np.ndarray
    load_sigma: np.ndarray
    unload_eps: np.ndarray
    unload_sigma: np.ndarray

    def __post_init__(self):
        for name in ("load_eps", "load_sigma", "unload_eps", "unload_sigma"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.isfinite(arr).all():
                raise CalibrationError(f"{name} contains non-finite samples")
            setattr(self, name, arr)
        if len(self.load_eps) != len(self.load_sigma) or len(self.unload_eps) != len(self.unload_sigma):
            raise CalibrationError("strain and stress arrays differ in length")
        if np.any(np.diff(self.load_eps) < 0):
            raise CalibrationError("loading strains must be nondecreasing")
        if np.any(np.diff(self.unload_eps) > 0):
            raise CalibrationError("unloading strains must be nonincreasing")

    @property
    def has_both_branches(self) -> bool:
        return len(self.load_eps) >= 2 and len(self.unload_eps) >= 2

    @property
    def eps_max(self) -> float:
        return float(max(self.load_eps.max(initial=0.0), self.unload_eps.max(initial=0.0)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# T_E={self.T_E!r}\n")
            w = csv.writer(fh)
            w.writerow(["eps", "sigma_Pa", "branch"])
            for e, s in zip(self.load_eps, self.load_sigma):
                w.writerow([repr(float(e)), repr(float(s)), "loading"])
            for e, s in zip(self.unload_eps, self.unload_sigma):
                w.writerow([repr(float(e)), repr(float(s)), "unloading"])

    @classmethod
    def from_csv(cls, path: str | Path, T_E: float | None = None) -> "IsothermCurve":
        branches = {"loading": ([], []), "unloading": ([], [])}
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                if "T_E=" in line and T_E is None:
                    T_E = float(line.split("T_E=")[1])
                continue
            body.append(line)
        for row in csv.DictReader(body):
            branch = row["branch"].strip()
            if branch not in branches:
                raise CalibrationError(f"unknown branch {branch!r}")
            branches[branch][0].append(float(row["eps"]))
            branches[branch][1].append(float(row["sigma_Pa"]))
        if T_E is None:
            raise CalibrationError("ambient temperature missing (no '# T_E=' header)")
        (le, ls), (ue, us) = branches["loading"], branches["unloading"]
        return cls(T_E, np.array(le), np.array(ls), np.array(ue), np.array(us))


@dataclass
class FitSpec:
    free: tuple[str, ...] = DEFAULT_FREE
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    rate: float = DEFAULT_RATE
    max_nfev: int = 400

    def __post_init__(self):
        self.free = tuple(self.free)
        bad = [n for n in self.free if n not in FITTABLE]
        if bad:
            raise CalibrationError(f"not fittable: {bad} (fixed a priori: {FIXED})")
        if len(set(self.free)) != len(self.free) or not self.free:
            raise CalibrationError("free parameters must be a non-empty set")
        if self.rate <= 0:
            raise CalibrationError("strain rate must be positive")

    def bounds_for(self, name: str, reference: MaterialParams) -> tuple[float, float]:
        if name in self.bounds:
            lo, hi = self.bounds[name]
        else:
            value = getattr(reference, name)
            lo, hi = sorted((0.5 * value, 1.5 * value))
        if not lo < hi:
            raise CalibrationError(f"empty bounds for {name}")
        return float(lo), float(hi)

    @classmethod
    def from_json(cls, path: str | Path) -> "FitSpec":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        free = tuple("lam" if n == "lambda" else n for n in data.get("free", DEFAULT_FREE))
        bounds = {("lam" if k == "lambda" else k): tuple(v) for k, v in data.get("bounds", {}).items()}
        return cls(free, bounds, float(data.get("rate", DEFAULT_RATE)), int(data.get("max_nfev", 400)))


@dataclass
class FitResult:
    params: MaterialParams
    loss: float                 # mean squared stress residual [Pa^2]
    diagnostics: dict


# --- forward model ----------------------------------------------------------------

def _triangle(p: MaterialParams, T_E: float, eps_max: float, rate: float):
    t_turn = eps_max / rate
    v = rate * p.l0
    inputs = PiecewiseConstant([0.0, t_turn, 2 * t_turn], [(v, 0.0, T_E), (-v, 0.0, T_E), (0.0, 0.0, T_E)])
    return inputs, t_turn


def _run(p: MaterialParams, T_E: float, eps_max: float, rate: float, sample_times):
    system = WireSystem(p)
    inputs, t_turn = _triangle(p, T_E, eps_max, rate)
    traj = simulate(system, (np.array([0.0, T_E]), (0.0, 1)), inputs, 2 * t_turn,
                    opts=SolverOptions(atol=[1e-8, 1e-6]), sample_times=sample_times)
    if traj.termination != "time-horizon":
        raise HybridModelError(f"isotherm run ended early: {traj.termination} {traj.message}")
    return system, traj, t_turn


def simulate_isotherm(p: MaterialParams, T_E: float, eps_max: float = 0.12,
                      rate: float = DEFAULT_RATE, n_samples: int = 1001) -> IsothermCurve:
    """Quasi-static triangular pull from zero strain to ``eps_max`` and back (J = 0).

    Strains are reported on the nominal grid of the profile, so replaying a
    curve through :func:`predict` with the same parameters is exact.
    """
    if eps_max <= 0 or n_samples < 2:
        raise CalibrationError("need eps_max > 0 and at least two samples per branch")
    grid = np.linspace(0.0, eps_max, n_samples)
    probe = IsothermCurve(T_E, grid, np.zeros(n_samples), grid[::-1], np.zeros(n_samples))
    sl, su = predict(p, probe, rate)
    return IsothermCurve(T_E, grid, sl, grid[::-1].copy(), su)


def predict(p: MaterialParams, curve: IsothermCurve, rate: float = DEFAULT_RATE) -> tuple[np.ndarray, np.ndarray]:
    """Model stress at the strains of ``curve`` (loading, unloading)."""
    eps_max = curve.eps_max
    t_turn = eps_max / rate
    t_load = curve.load_eps / rate
    t_unload = 2 * t_turn - curve.unload_eps / rate
    times = np.concatenate([t_load, t_unload])
    order = np.argsort(times, kind="stable")
    system, traj, _ = _run(p, curve.T_E, eps_max, rate, np.sort(times))
    # the recorder yields every requested time once (plus jump and end points)
    sig_at = {}
    for t, z, d in zip(traj.t, traj.z, traj.d):
        sig_at[t] = system.output(z, d)[5]
    sig_sorted = np.array([sig_at[t] for t in np.sort(times)])
    sig = np.empty_like(sig_sorted)
    sig[order] = sig_sorted
    n = len(t_load)
    return sig[:n], sig[n:]


# --- curve analysis -------------------------------------------------------------------

def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    out, start = [], None
    for k, m in enumerate(mask):
        if m and start is None:
            start = k
        elif not m and start is not None:
            out.append((start, k))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def _slope(eps, sig, lo, hi, trim=2):
    a, b = lo + trim, hi - trim
    if b - a < 3:
        return math.nan
    return float(np.polyfit(eps[a:b], sig[a:b], 1)[0])


def branch_features(eps: np.ndarray, sig: np.ndarray, flat_fraction: float = 0.05) -> dict:
    """Elastic slopes at both ends and the median level of the flat part.

    Samples count as flat where the local slope is below ``flat_fraction``
    of the steepest local slope.
    """
    eps = np.asarray(eps, dtype=float)
    sig = np.asarray(sig, dtype=float)
    if len(eps) < 8:
        return {"first_slope": math.nan, "last_slope": math.nan, "plateau": math.nan, "plateau_width": 0.0}
    slope = np.gradient(sig, eps)
    flat = np.abs(slope) < flat_fraction * np.nanmax(np.abs(slope))
    steep = _runs(~flat)
    flats = _runs(flat)
    plateau, width = math.nan, 0.0
    if flats:
        lo, hi = max(flats, key=lambda r: abs(eps[r[1] - 1] - eps[r[0]]))
        width = abs(float(eps[hi - 1] - eps[lo]))
        if width > 0:
            plateau = float(np.median(sig[lo:hi]))
    first = _slope(eps, sig, *steep[0]) if steep else math.nan
    last = _slope(eps, sig, *steep[-1]) if len(steep) > 1 else math.nan
    return {"first_slope": first, "last_slope": last, "plateau": plateau, "plateau_width": width}


def analyze_isotherm(curve: IsothermCurve) -> dict:
    """Plateau levels, their gap and the elastic moduli seen on the loading branch.

    The loading branch is read in increasing strain: its first steep run is
    the austenite modulus, its last the martensite modulus.
    """
    load = branch_features(curve.load_eps, curve.load_sigma)
    unload = branch_features(curve.unload_eps[::-1], curve.unload_sigma[::-1])
    return {
        "T_E": curve.T_E,
        "E_austenite": load["first_slope"],
        "E_martensite": load["last_slope"],
        "loading_plateau": load["plateau"],
        "unloading_plateau": unload["plateau"],
        "plateau_gap": load["plateau"] - unload["plateau"],
        "has_plateau": bool(load["plateau_width"] > 0 and unload["plateau_width"] > 0),
    }


# --- fitting --------------------------------------------------------------------------

def fit(data: IsothermCurve | Sequence[IsothermCurve], spec: FitSpec | None = None,
        guess: MaterialParams | None = None) -> FitResult:
    """Bounded least squares on the stress residuals of every curve.

    Parameters are optimized as ratios to the initial guess so that moduli
    in Pa and strains near 0.07 share one scale.
    """
    curves = [data] if isinstance(data, IsothermCurve) else list(data)
    if not curves:
        raise CalibrationError("no isotherm data")
    if guess is None:
        raise CalibrationError("an initial guess is required")
    spec = spec or FitSpec()
    for c in curves:
        if not c.has_both_branches:
            raise CalibrationError(f"isotherm at {c.T_E} K has a single branch; need loading and unloading")

    diagnostics: dict = {"unidentifiable": []}
    features = [analyze_isotherm(c) for c in curves]
    free = list(spec.free)
    if not any(f["has_plateau"] for f in features):
        diagnostics["unidentifiable"].append("delta_sigma")
        logger.warning("no transformation plateau in the data: delta_sigma is not identifiable and stays fixed")
        free = [n for n in free if n != "delta_sigma"]
    temps = {round(c.T_E, 9) for c in curves}
    if len(temps) < 2 and "sigma_T" in free:
        diagnostics["unidentifiable"].append("sigma_T")
        logger.warning("a single temperature cannot separate sigma_T from sigma_MW_T0; sigma_T stays fixed")
        free = [n for n in free if n != "sigma_T"]
    if not free:
        raise CalibrationError("nothing left to fit")

    ref = np.array([getattr(guess, n) for n in free])
    lo, hi = np.array([spec.bounds_for(n, guess) for n in free]).T
    if np.any(ref < lo) or np.any(ref > hi):
        raise CalibrationError("initial guess outside the bounds")
    n_samples = sum(len(c.load_eps) + len(c.unload_eps) for c in curves)

    def params_at(theta):
        return guess.with_values(**{n: float(v) for n, v in zip(free, theta * ref)})

    def residuals(theta):
        try:
            p = params_at(theta)
            parts = []
            for c in curves:
                sl, su = predict(p, c, spec.rate)
                parts += [(sl - c.load_sigma) / 1e6, (su - c.unload_sigma) / 1e6]
            return np.concatenate(parts)
        except (MaterialError, HybridModelError, ZeroDivisionError) as exc:
            logger.debug("inadmissible trial %s: %s", theta, exc)
            return np.full(n_samples, PENALTY)

    def loss_of(r):
        return float(np.mean((r * 1e6) ** 2))

    theta0 = np.ones(len(free))
    r0 = residuals(theta0)
    loss0 = loss_of(r0)
    diagnostics.update(free=free, initial_loss=loss0, features=features)
    if loss0 <= 1e-18:
        diagnostics.update(iterations=0, nfev=1, converged=True, status="initial guess already fits")
        return FitResult(guess, loss0, diagnostics)

    res = least_squares(residuals, theta0, bounds=(lo / ref, hi / ref), method="trf",
                        diff_step=1e-4, x_scale="jac", max_nfev=spec.max_nfev,
                        xtol=1e-12, ftol=1e-12, gtol=1e-12)
    best = params_at(res.x)
    loss = loss_of(res.fun)
    converged = bool(res.success)
    if not converged:
        logger.warning("calibration did not converge (%s); returning best-so-far", res.message)
    diagnostics.update(iterations=int(res.njev or 0), nfev=int(res.nfev), converged=converged,
                       status=str(res.message), optimality=float(res.optimality))
    return FitResult(best, loss, diagnostics)
