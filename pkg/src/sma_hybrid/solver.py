"""Simulation of hybrid systems ``H = (C, f, D, G)`` on hybrid time domains.

A system handed to :func:`simulate` is any object providing

``flow(z, d, u)``
    time derivative of the continuous state ``z`` in discrete state ``d``;
``guards(z, d, u)``
    list of ``(value, jump_id)``; values are >= 0 inside the flow set and a
    value dropping below zero leaves it towards the paired jump set;
``enabled_jumps(z, d, u)``
    ids of every jump set containing the point;
``jump(z, d, jump_id)``
    the post-jump ``(z, d)``;

and optionally ``escaped(z, d)`` (returns a message once the state left
its admissible domain) and ``jump_priority(jump_id)`` (sort key used by the
default selection policy).

Flows are integrated with a scipy stiff-capable solver driven one step at a
time; after every step the guards are checked and the first crossing is
located on the dense output. Jumps are taken only where the state has left
the flow set (boundary points of ``C`` and ``D`` flow first), which picks one
solution out of the set-valued jump map deterministically.
"""

from __future__ import annotations

import bisect
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.integrate import BDF, LSODA, RK45, Radau

logger = logging.getLogger(__name__)

METHODS = {"LSODA": LSODA, "BDF": BDF, "Radau": Radau, "RK45": RK45}

TERMINATIONS = ("time-horizon", "jump-horizon", "zeno-guard", "escape", "solver-failure")


@dataclass
class SolverOptions:
    method: str = "Radau"
    rtol: float = 1e-8
    atol: float | Sequence[float] = 1e-8
    max_step: float = math.inf
    guard_tol: float = 1e-12      # a guard must drop below -guard_tol to count as a crossing
    event_tol: float = 1e-10      # |guard| at the located event
    zeno_jumps: int = 100
    zeno_window: float = 1e-6
    warm_start: bool = True       # reuse the last step size after a jump or input breakpoint
    interior_checks: int = 3      # guard evaluations inside each step, on the dense output

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}; choose from {sorted(METHODS)}")
        if self.rtol <= 0 or self.guard_tol < 0 or self.event_tol <= 0:
            raise ValueError("tolerances must be positive")


# --- input signals --------------------------------------------------------------

class Constant:
    def __init__(self, value):
        self.value = value

    def __call__(self, t):
        return self.value

    def segment(self, t):
        """Next breakpoint after ``t`` and the input valid up to it."""
        return math.inf, self


class PiecewiseConstant:
    """Sample-and-hold signal: ``values[k]`` applies on ``[times[k], times[k+1])``."""

    def __init__(self, times: Sequence[float], values: Sequence[Any]):
        if len(times) != len(values) or not len(times):
            raise ValueError("times and values must be non-empty and of equal length")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        self.times = list(map(float, times))
        self.values = list(values)

    @property
    def breakpoints(self):
        return self.times[1:]

    def _index(self, t):
        return max(0, bisect.bisect_right(self.times, t) - 1)

    def __call__(self, t):
        return self.values[self._index(t)]

    def segment(self, t):
        k = self._index(t)
        t_next = self.times[k + 1] if k + 1 < len(self.times) else math.inf
        return t_next, Constant(self.values[k])


class Sinusoid:
    """``offset + amplitude*sin(2*pi*frequency*t + phase)``, mapped through ``transform``.

    Breakpoints are placed at the zero crossings of the raw sine so that
    inputs derived by sign (such as antagonistic heating) stay smooth within
    every segment.
    """

    def __init__(self, amplitude: float, frequency: float, offset: float = 0.0,
                 phase: float = 0.0, transform: Callable | None = None):
        if frequency <= 0:
            raise ValueError("frequency must be positive")
        self.amplitude, self.frequency, self.offset, self.phase = amplitude, frequency, offset, phase
        self.transform = transform

    def raw(self, t):
        return self.offset + self.amplitude * math.sin(2 * math.pi * self.frequency * t + self.phase)

    def __call__(self, t):
        value = self.raw(t)
        return self.transform(value) if self.transform else value

    def segment(self, t):
        if self.offset != 0.0 or self.amplitude == 0.0:
            return math.inf, self
        # zero crossings of sin(w t + phase) at w t + phase = k*pi
        w = 2 * math.pi * self.frequency
        k = math.floor((w * t + self.phase) / math.pi) + 1
        t_next = (k * math.pi - self.phase) / w
        if t_next <= t:
            t_next = ((k + 1) * math.pi - self.phase) / w
        return t_next, self


# --- trajectories ---------------------------------------------------------------

@dataclass
class JumpRecord:
    t: float
    j: int
    jump: Any
    d_before: Any
    d_after: Any


@dataclass
class HybridTrajectory:
    t: np.ndarray
    j: np.ndarray
    z: np.ndarray
    d: list
    u: list
    jumps: list[JumpRecord]
    termination: str
    message: str = ""
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def flow_samples(self):
        """Indices of samples that are not the pre-jump copy of a jump point."""
        keep = np.ones(len(self.t), dtype=bool)
        keep[:-1] = ~((self.t[1:] == self.t[:-1]) & (self.j[1:] == self.j[:-1] + 1))
        return np.flatnonzero(keep)


class _Recorder:
    def __init__(self, sample_times):
        self.sample_times = np.asarray(sample_times if sample_times is not None else [], dtype=float)
        self.next_sample = 0
        self.t, self.j, self.z, self.d, self.u = [], [], [], [], []

    def add(self, t, j, z, d, u):
        self.t.append(float(t))
        self.j.append(j)
        self.z.append(np.array(z, dtype=float))
        self.d.append(d)
        self.u.append(u)

    def add_dense(self, t_old, t_new, dense, j, d, u_fun, include_end):
        ts = self.sample_times
        k = self.next_sample
        while k < len(ts) and (ts[k] < t_new or (include_end and ts[k] == t_new)):
            if ts[k] > t_old:
                self.add(ts[k], j, dense(ts[k]), d, u_fun(ts[k]))
            k += 1
        self.next_sample = k

    def skip_to(self, t):
        ts = self.sample_times
        while self.next_sample < len(ts) and ts[self.next_sample] <= t:
            self.next_sample += 1

    def finish(self, jumps, termination, message, stats):
        z = np.vstack(self.z) if self.z else np.empty((0, 0))
        return HybridTrajectory(np.array(self.t), np.array(self.j, dtype=int), z,
                                self.d, self.u, jumps, termination, message, stats)


# --- flows ----------------------------------------------------------------------

@dataclass
class FlowResult:
    t: float
    z: np.ndarray
    event: str | None          # None (reached t_end), "guard", "escape", "failure"
    crossed: list = field(default_factory=list)   # jump ids of guards that crossed
    message: str = ""


def _locate(h, ta, tb, ha, hb, h_tol, t_tol):
    """Illinois search for the first point past a crossing: returns ``tb`` with
    ``h(tb) < 0`` and ``|h(tb)| <= h_tol`` (or a bracket narrower than ``t_tol``)."""
    side = 0
    for _ in range(200):
        if -hb <= h_tol or tb - ta <= t_tol:
            break
        tc = (ta * hb - tb * ha) / (hb - ha)
        if not ta < tc < tb:
            tc = 0.5 * (ta + tb)
        hc = h(tc)
        if hc < 0.0:
            tb, hb = tc, hc
            if side == -1:
                ha *= 0.5
            side = -1
        else:
            ta, ha = tc, hc
            if side == 1:
                hb *= 0.5
            side = 1
    return tb, hb


def flow_segment(system, z0, d, t0: float, t_end: float, u_fun: Callable,
                 opts: SolverOptions, recorder: _Recorder | None = None, j: int = 0,
                 armed: np.ndarray | None = None, stats: dict | None = None) -> FlowResult:
    """Integrate the flow of ``system`` in discrete state ``d`` from ``t0``.

    Stops at ``t_end`` or just past the first guard that drops below
    ``-guard_tol`` (located to ``event_tol``). ``armed`` flags which guards
    may trigger; a guard already outside tolerance at the start is re-armed
    once it comes back.
    """
    stats = stats if stats is not None else {}
    z0 = np.asarray(z0, dtype=float)
    gtol = opts.guard_tol
    escaped = getattr(system, "escaped", None)

    def fun(t, z):
        return system.flow(z, d, u_fun(t))

    def guard_values(t, z):
        return system.guards(z, d, u_fun(t))

    g0 = guard_values(t0, z0)
    if armed is None:
        armed = np.array([g >= -gtol for g, _ in g0], dtype=bool)
    if t_end <= t0:
        return FlowResult(t0, z0, None)

    kwargs = {}
    h_last = stats.get("h_last")
    if opts.warm_start and h_last and opts.method != "LSODA":
        # restart with the last accepted step instead of re-deriving one from scratch
        kwargs["first_step"] = min(h_last, t_end - t0, opts.max_step)
    solver = METHODS[opts.method](fun, t0, z0, t_end, rtol=opts.rtol, atol=opts.atol,
                                  max_step=opts.max_step, **kwargs)
    stats["segments"] = stats.get("segments", 0) + 1
    while True:
        t_old = solver.t
        message = solver.step()
        stats["steps"] = stats.get("steps", 0) + 1
        if solver.status == "failed":
            stats["nfev"] = stats.get("nfev", 0) + solver.nfev
            return FlowResult(solver.t, np.array(solver.y), "failure", message=message or "step failed")
        t_new, z_new = solver.t, solver.y
        if solver.status == "running":
            stats["h_last"] = t_new - t_old
        gs = guard_values(t_new, z_new)
        ends = {}
        dense = None
        if opts.interior_checks and any(armed):
            # a guard can dip below zero and recover within one step (grazing)
            dense = solver.dense_output()
            for frac in np.arange(1, opts.interior_checks + 1) / (opts.interior_checks + 1):
                tc = t_old + frac * (t_new - t_old)
                for k, (g, _) in enumerate(guard_values(tc, dense(tc))):
                    if armed[k] and g < -gtol and k not in ends:
                        ends[k] = (tc, g)
        for k, (g, _) in enumerate(gs):
            if armed[k] and g < -gtol and k not in ends:
                ends[k] = (t_new, g)
        crossed = sorted(ends)
        if crossed:
            dense = dense or solver.dense_output()
            t_hit, idx_hit = t_new, []
            for k in crossed:
                def h(t, k=k):
                    return guard_values(t, dense(t))[k][0] + gtol
                ha = h(t_old)
                tb, gb = ends[k]
                if ha < 0.0:      # interpolant disagrees with the step start: take the start
                    tk = t_old
                else:
                    tk, _ = _locate(h, t_old, tb, ha, gb + gtol, opts.event_tol,
                                    4 * np.finfo(float).eps * max(1.0, abs(tb)))
                if tk < t_hit:
                    t_hit, idx_hit = tk, [k]
                elif tk == t_hit:
                    idx_hit.append(k)
            z_hit = dense(t_hit) if t_hit != t_new else np.array(z_new)
            if recorder is not None:
                recorder.add_dense(t_old, t_hit, dense, j, d, u_fun, include_end=True)
            stats["nfev"] = stats.get("nfev", 0) + solver.nfev
            g_hit = guard_values(t_hit, z_hit)
            ids = [g_hit[k][1] for k in range(len(g_hit)) if g_hit[k][0] < -gtol and armed[k]]
            if not ids:
                ids = [gs[k][1] for k in idx_hit]
            return FlowResult(t_hit, z_hit, "guard", crossed=ids)
        for k, (g, _) in enumerate(gs):
            if g >= -gtol:
                armed[k] = True
        done = solver.status == "finished"
        why = escaped(z_new, d) if escaped is not None else None
        if why:
            # bisect the step for the first point outside the domain
            dense = solver.dense_output()
            ta, tb = t_old, t_new
            for _ in range(100):
                if tb - ta <= 4 * np.finfo(float).eps * max(1.0, abs(tb)):
                    break
                tc = 0.5 * (ta + tb)
                if escaped(dense(tc), d):
                    tb = tc
                else:
                    ta = tc
            z_esc = dense(tb) if tb != t_new else np.array(z_new)
            if recorder is not None and len(recorder.sample_times):
                recorder.add_dense(t_old, ta, dense, j, d, u_fun, include_end=False)
            stats["nfev"] = stats.get("nfev", 0) + solver.nfev
            return FlowResult(tb, z_esc, "escape", message=escaped(z_esc, d) or why)
        if recorder is not None and (len(recorder.sample_times) or done):
            dense = dense or solver.dense_output()
            recorder.add_dense(t_old, t_new, dense, j, d, u_fun, include_end=done)
        if done:
            stats["nfev"] = stats.get("nfev", 0) + solver.nfev
            return FlowResult(t_new, np.array(z_new), None)


# --- jump selection ---------------------------------------------------------------

def default_policy(system) -> Callable[[list], Any]:
    """Lowest-priority-key enabled jump (for the SMA wire: completion first, then lowest index)."""
    key = getattr(system, "jump_priority", None)

    def select(candidates):
        return min(candidates, key=key) if key else candidates[0]
    return select


def _pending_jumps(system, z, d, u, gtol, only=None):
    """Jumps enabled at a point that has left the flow set through their guard."""
    violated = [jid for g, jid in system.guards(z, d, u) if g < -gtol]
    if only is not None:
        violated = [jid for jid in violated if jid in only] or violated
    if not violated:
        return []
    enabled = system.enabled_jumps(z, d, u)
    return [jid for jid in violated if jid in enabled]


def simulate(system, x0: tuple, inputs, t_end: float, j_max: int = 10**6,
             opts: SolverOptions | None = None, policy: Callable | None = None,
             sample_times: Sequence[float] | None = None) -> HybridTrajectory:
    """Run one solution pair of ``system`` from ``x0 = (z0, d0)``.

    Samples are recorded at ``t = 0``, at every requested sample time, on
    both sides of every jump and at the final point.
    """
    opts = opts or SolverOptions()
    policy = policy or default_policy(system)
    z, d = np.array(x0[0], dtype=float), x0[1]
    t, j = 0.0, 0
    recorder = _Recorder(sample_times)
    jumps: list[JumpRecord] = []
    recent = deque()
    stats: dict = {"steps": 0, "nfev": 0, "segments": 0, "ungated_exits": 0}
    gtol = opts.guard_tol

    t_next, u_fun = inputs.segment(t)
    recorder.add(t, j, z, d, u_fun(t))
    recorder.skip_to(t)
    termination, message = "time-horizon", ""
    only = None
    armed = None

    while True:
        if t >= t_end:
            break
        u = u_fun(t)
        pending = _pending_jumps(system, z, d, u, gtol, only)
        only = None
        if pending:
            if j >= j_max:
                termination = "jump-horizon"
                break
            jid = policy(pending)
            if recorder.t[-1] != t or recorder.j[-1] != j:
                recorder.add(t, j, z, d, u)      # pre-jump side of the jump point
            d_before = d
            z, d = system.jump(z, d, jid)
            z = np.array(z, dtype=float)
            jumps.append(JumpRecord(t, j, jid, d_before, d))
            j += 1
            recorder.add(t, j, z, d, u_fun(t))
            armed = None
            recent.append(t)
            while recent and t - recent[0] > opts.zeno_window:
                recent.popleft()
            if len(recent) > opts.zeno_jumps:
                termination = "zeno-guard"
                message = f"more than {opts.zeno_jumps} jumps within {opts.zeno_window:g} s at t={t:.9g}"
                break
            continue

        seg_end = min(t_next, t_end)
        res = flow_segment(system, z, d, t, seg_end, u_fun, opts, recorder, j, armed, stats)
        t, z = res.t, res.z
        armed = None
        if res.event == "failure":
            termination, message = "solver-failure", res.message
            recorder.add(t, j, z, d, u_fun(t))
            break
        if res.event == "escape":
            termination, message = "escape", res.message
            recorder.add(t, j, z, d, u_fun(t))
            break
        if res.event == "guard":
            if not _pending_jumps(system, z, d, u_fun(t), gtol, res.crossed):
                # left C through a guard whose jump set does not hold: keep flowing
                stats["ungated_exits"] += 1
                gs = system.guards(z, d, u_fun(t))
                armed = np.array([g >= -gtol for g, _ in gs], dtype=bool)
            else:
                only = res.crossed
            continue
        # reached the segment end: switch to the next input piece
        if t >= t_next:
            t_next, u_fun = inputs.segment(t)

    if recorder.t[-1] != t or recorder.j[-1] != j:
        recorder.add(t, j, z, d, u_fun(t))
    stats["jumps"] = len(jumps)
    stats.pop("h_last", None)
    return recorder.finish(jumps, termination, message, stats)
