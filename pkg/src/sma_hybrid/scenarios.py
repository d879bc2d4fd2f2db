"""Input signals and output metrics for the coupled robot scenarios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solver import HybridTrajectory, PiecewiseConstant, Sinusoid

DEFAULT_J_MAX = 2.0
DEFAULT_DWELL = (2.0, 20.0)
DEFAULT_T_END = 100.0


@dataclass(frozen=True)
class StepSpec:
    J_max: float = DEFAULT_J_MAX
    dwell_min: float = DEFAULT_DWELL[0]
    dwell_max: float = DEFAULT_DWELL[1]
    t_end: float = DEFAULT_T_END

    def __post_init__(self):
        if not (self.J_max >= 0 and 0 < self.dwell_min <= self.dwell_max and self.t_end > 0):
            raise ValueError("need J_max >= 0, 0 < dwell_min <= dwell_max and t_end > 0")


def random_steps(rng: np.random.Generator, spec: StepSpec = StepSpec()) -> PiecewiseConstant:
    """Steps with amplitudes uniform in [-J_max, J_max] and dwell times uniform in the dwell range."""
    times, values = [0.0], []
    while True:
        values.append(float(rng.uniform(-spec.J_max, spec.J_max)))
        t = times[-1] + float(rng.uniform(spec.dwell_min, spec.dwell_max))
        if t >= spec.t_end:
            break
        times.append(t)
    return PiecewiseConstant(times, values)


def scenario_inputs(seed: int, n: int, spec: StepSpec = StepSpec()) -> list[PiecewiseConstant]:
    """``n`` independent random-step inputs; input ``k`` depends only on (seed, k)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [random_steps(np.random.default_rng(c), spec) for c in children]


def steps(durations, amplitudes) -> PiecewiseConstant:
    durations = [float(d) for d in durations]
    if len(durations) != len(amplitudes) or not durations:
        raise ValueError("durations and amplitudes must be non-empty and of equal length")
    if any(d <= 0 for d in durations):
        raise ValueError("step durations must be positive")
    times = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    return PiecewiseConstant(list(times), [float(a) for a in amplitudes])


def sinusoid(amplitude: float = DEFAULT_J_MAX, frequency: float = 1e-3, offset: float = 0.0) -> Sinusoid:
    return Sinusoid(amplitude, frequency, offset)


# --- metrics ------------------------------------------------------------------------------

def resample(traj: HybridTrajectory, column: int, times: np.ndarray) -> np.ndarray:
    """Values of ``z[:, column]`` at ``times``; at jump instants the post-jump value is used."""
    t = traj.t
    z = traj.z[:, column]
    idx = np.searchsorted(t, times, side="right") - 1
    idx = np.clip(idx, 0, len(t) - 1)
    exact = t[idx] == times
    out = np.interp(times, t, z)
    out[exact] = z[idx[exact]]
    return out


def discrepancy(alpha_a: np.ndarray, alpha_b: np.ndarray) -> dict:
    """Max and RMS of ``|alpha_a - alpha_b|`` normalized by the range of ``alpha_b``."""
    diff = np.abs(np.asarray(alpha_a) - np.asarray(alpha_b))
    span = float(np.ptp(alpha_b))
    scale = span if span > 0 else 1.0
    return {"max": float(diff.max()) / scale, "rms": float(np.sqrt(np.mean(diff**2))) / scale,
            "alpha_range": span, "max_abs": float(diff.max())}


def loop_areas(J: np.ndarray, alpha: np.ndarray, t: np.ndarray, period: float) -> list[float]:
    """Signed area enclosed by the (J, alpha) curve over each full period (shoelace)."""
    J, alpha, t = map(np.asarray, (J, alpha, t))
    areas = []
    n_periods = int(math.floor((t[-1] - t[0]) / period + 1e-9))
    for k in range(n_periods):
        m = (t >= t[0] + k * period) & (t <= t[0] + (k + 1) * period)
        x, y = J[m], alpha[m]
        areas.append(0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))
    return areas
