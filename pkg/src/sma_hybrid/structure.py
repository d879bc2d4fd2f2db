"""Planar flexible module driven by two antagonistic SMA bundles.

The backbone is an Euler-Bernoulli cantilever whose tip carries a rigid
plate of width ``W``; generalized coordinates are ``q = (U_x, U_y, alpha)``.
Bundles are mounted at ``-W/2`` (bundle 1) and ``+W/2`` (bundle 2) and couple
to the beam through the skew-symmetric interconnection ``v = J q_dot``,
``tau = -J^T f``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import hybrid_wire as hw
from .mas import BarrierModel, LinearBarrier, _rates as _mas_rates
from .material import MaterialParams, sigma_MW, stress

logger = logging.getLogger(__name__)

ALPHA_WARN = 0.3
MIN_LENGTH = 1e-9


class StructureError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamParams:
    W: float = 10e-3
    L: float = 100e-3
    E_beam: float = 2e9
    h: float = 2.5e-3
    m_H: float = 10e-3
    J_H: float | None = None
    b_x: float = 2.0
    b_y: float = 2.0
    b_alpha: float = 2.0
    n: int = 10

    def __post_init__(self):
        if self.J_H is None:
            object.__setattr__(self, "J_H", self.W**2 * self.m_H / 12.0)
        for name in ("W", "L", "E_beam", "h", "m_H", "J_H", "b_x", "b_y", "b_alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"beam parameter {name} must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n (wires per bundle) must be an integer >= 1")

    @property
    def A_beam(self) -> float:
        return math.pi * self.h**2

    @property
    def I_beam(self) -> float:
        return math.pi * self.h**4 / 4.0

    def stiffness(self) -> np.ndarray:
        EI, L = self.E_beam * self.I_beam, self.L
        return np.array([[self.E_beam * self.A_beam / L, 0.0, 0.0],
                         [0.0, 12 * EI / L**3, -6 * EI / L**2],
                         [0.0, -6 * EI / L**2, 4 * EI / L]])

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("W", "L", "E_beam", "h", "m_H", "J_H",
                                              "b_x", "b_y", "b_alpha", "n")}


@dataclass(frozen=True)
class BeamState:
    q_gen: tuple[float, float, float]
    q_dot: tuple[float, float, float] = (0.0, 0.0, 0.0)


# --- kinematics ---------------------------------------------------------------------

def _kinematics(bp: BeamParams, Ux, Uy, alpha):
    half = 0.5 * bp.W
    s, c = math.sin(alpha), math.cos(alpha)
    a1 = Uy - half * (1.0 - c)
    b1 = bp.L + Ux - half * s
    a2 = Uy + half * (1.0 - c)
    b2 = bp.L + Ux + half * s
    l1, l2 = math.hypot(a1, b1), math.hypot(a2, b2)
    if l1 < MIN_LENGTH or l2 < MIN_LENGTH:
        raise StructureError(f"degenerate bundle length (l1={l1:.3g}, l2={l2:.3g})")
    row1 = (b1 / l1, a1 / l1, -half * (a1 * s + b1 * c) / l1)
    row2 = (b2 / l2, a2 / l2, half * (a2 * s + b2 * c) / l2)
    return l1, l2, row1, row2


def wire_lengths(bp: BeamParams, q_gen) -> tuple[float, float]:
    half = 0.5 * bp.W
    Ux, Uy, alpha = q_gen
    l1 = math.hypot(Uy - half * (1 - math.cos(alpha)), bp.L + Ux - half * math.sin(alpha))
    l2 = math.hypot(Uy + half * (1 - math.cos(alpha)), bp.L + Ux + half * math.sin(alpha))
    return l1, l2


def jacobian(bp: BeamParams, q_gen) -> np.ndarray:
    """2x3 matrix of d(l1, l2)/d(U_x, U_y, alpha)."""
    _, _, r1, r2 = _kinematics(bp, *q_gen)
    return np.array([r1, r2])


def interconnect(bp: BeamParams, q_gen, q_dot, f) -> tuple[np.ndarray, np.ndarray]:
    """Bundle elongation rates ``v = J q_dot`` and generalized forces ``tau = -J^T f``.

    ``f`` holds the bundle forces (single-wire force times ``n``).
    """
    Jq = jacobian(bp, q_gen)
    f = np.asarray(f, dtype=float)
    return Jq @ np.asarray(q_dot, dtype=float), -Jq.T @ f


def beam_rhs(bp: BeamParams, state: BeamState, tau) -> np.ndarray:
    Ux, Uy, alpha = state.q_gen
    dUx, dUy, dalpha = state.q_dot
    return _beam_acc(bp, Ux, Uy, alpha, dUx, dUy, dalpha, tau[0], tau[1], tau[2])


def _beam_acc(bp, Ux, Uy, alpha, dUx, dUy, dalpha, T, F, M):
    EI, L = bp.E_beam * bp.I_beam, bp.L
    ax = (-bp.E_beam * bp.A_beam / L * Ux - bp.b_x * dUx + T) / bp.m_H
    ay = (-12 * EI / L**3 * Uy + 6 * EI / L**2 * alpha - bp.b_y * dUy + F) / bp.m_H
    aa = (6 * EI / L**2 * Uy - 4 * EI / L * alpha - bp.b_alpha * dalpha + M) / bp.J_H
    return np.array([ax, ay, aa])


def split_Jeq(J_eq: float) -> tuple[float, float]:
    """Antagonistic heating: the sign of ``J_eq`` picks the bundle."""
    if J_eq > 0:
        return abs(J_eq), 0.0
    if J_eq < 0:
        return 0.0, abs(J_eq)
    return 0.0, 0.0


def interconnection_power(f, v, tau, q_dot) -> float:
    return float(np.dot(f, v) + np.dot(tau, q_dot))


# --- coupled system -------------------------------------------------------------------

@dataclass(frozen=True)
class Pretension:
    """Rest state of both bundles at the neutral equilibrium.

    ``stress=None`` means sigma_MW(T_E), the middle of the hysteresis, and
    ``x_M`` is the phase fraction the wires hold there (1 = martensite).
    """

    stress: float | None = None
    x_M: float = 1.0


@dataclass
class CoupledSystem:
    """Beam + two SMA bundles as one hybrid system.

    ``variant="hybrid"``: z = [U_x, U_y, alpha, dU_x, dU_y, dalpha, eps1, T1, eps2, T2],
    d = (x3_1, q_1, x3_2, q_2).
    ``variant="mas"``: z = [beam..., eps1, xM1, T1, eps2, xM2, T2], d = ().
    The input is the signed virtual heating command ``J_eq`` [W].
    """

    bp: BeamParams
    p: MaterialParams
    T_E: float = 298.0
    variant: str = "hybrid"
    pretension: Pretension = field(default_factory=Pretension)
    barrier: BarrierModel = field(default_factory=LinearBarrier)

    def __post_init__(self):
        if self.variant not in ("hybrid", "mas"):
            raise ValueError(f"unknown wire model variant {self.variant!r}")
        if self.T_E <= 0:
            raise ValueError("T_E must be positive")
        sig = self.pretension.stress
        self.sigma_pre = sigma_MW(self.p, self.T_E) if sig is None else sig
        x = self.pretension.x_M
        self.eps_pre = self.sigma_pre * (x / self.p.E_M + (1 - x) / self.p.E_A) + self.p.eps_T * x
        bp = self.bp
        f_pre = bp.n * self.p.area * self.sigma_pre
        self.Ux_eq = -2.0 * f_pre * bp.L / (bp.E_beam * bp.A_beam)
        l_eq = bp.L + self.Ux_eq
        # each bundle is a single-wire model with its own rest length
        self.wire = replace(self.p, l0=l_eq / (1.0 + self.eps_pre))
        self.n_wire = 2 if self.variant == "hybrid" else 3
        self.n_states = 6 + 2 * self.n_wire

    # initial condition ------------------------------------------------------------
    def initial_state(self):
        z = np.zeros(self.n_states)
        z[0] = self.Ux_eq
        x = self.pretension.x_M
        if self.variant == "hybrid":
            z[6:] = [self.eps_pre, self.T_E, self.eps_pre, self.T_E]
            if x == 1.0:
                dw = (1.0, 2)
            elif x == 0.0:
                dw = (0.0, 1)
            else:
                dw = (float(x), 3)
            return z, dw + dw
        z[6:] = [self.eps_pre, x, self.T_E, self.eps_pre, x, self.T_E]
        return z, ()

    def atol(self, eps=1e-8, T=1e-6, x=1e-9, disp=1e-8, angle=1e-7, rate=1e-5):
        """Per-state absolute tolerances.

        Beam entries are sized against the output: 1e-7 rad is about 1e-4 of
        a typical tip-angle excursion, and tighter values only buy resolution
        of the lightly damped axial ringing.
        """
        beam = [disp, disp, angle, rate, rate, rate]
        wire = [eps, T] if self.variant == "hybrid" else [eps, x, T]
        return np.array(beam + wire + wire)

    # pieces of the flow ----------------------------------------------------------------
    def _wires(self, z, d, J_eq, v1, v2):
        """Per wire: (deps, d_second, d_third | None, stress)."""
        J1, J2 = split_Jeq(J_eq)
        n, w = self.bp.n, self.wire
        if self.variant == "hybrid":
            e1, dT1, xm1 = hw.mode_rates(w, z[6], z[7], d[0], d[1], v1, J1 / n, self.T_E)
            e2, dT2, xm2 = hw.mode_rates(w, z[8], z[9], d[2], d[3], v2, J2 / n, self.T_E)
            s1 = (z[6] - w.eps_T * xm1) / (xm1 / w.E_M + (1 - xm1) / w.E_A)
            s2 = (z[8] - w.eps_T * xm2) / (xm2 / w.E_M + (1 - xm2) / w.E_A)
            return (e1, dT1), (e2, dT2), s1, s2
        b = self.barrier
        r1 = _mas_rates(w, b, z[6], z[7], z[8], v1, J1 / n, self.T_E)
        r2 = _mas_rates(w, b, z[9], z[10], z[11], v2, J2 / n, self.T_E)
        s1 = (z[6] - w.eps_T * z[7]) / (z[7] / w.E_M + (1 - z[7]) / w.E_A)
        s2 = (z[9] - w.eps_T * z[10]) / (z[10] / w.E_M + (1 - z[10]) / w.E_A)
        return r1, r2, s1, s2

    def flow(self, z, d, u):
        Ux, Uy, al, dUx, dUy, dal = z[0], z[1], z[2], z[3], z[4], z[5]
        _, _, r1, r2 = _kinematics(self.bp, Ux, Uy, al)
        v1 = r1[0] * dUx + r1[1] * dUy + r1[2] * dal
        v2 = r2[0] * dUx + r2[1] * dUy + r2[2] * dal
        w1, w2, s1, s2 = self._wires(z, d, u, v1, v2)
        scale = self.bp.n * self.wire.area
        f1, f2 = scale * s1, scale * s2
        acc = _beam_acc(self.bp, Ux, Uy, al, dUx, dUy, dal,
                        -(r1[0] * f1 + r2[0] * f2),
                        -(r1[1] * f1 + r2[1] * f2),
                        -(r1[2] * f1 + r2[2] * f2))
        out = np.empty(self.n_states)
        out[0:3] = (dUx, dUy, dal)
        out[3:6] = acc
        k = self.n_wire
        out[6:6 + k] = w1
        out[6 + k:] = w2
        return out

    def bundle_velocities(self, z):
        _, _, r1, r2 = _kinematics(self.bp, z[0], z[1], z[2])
        v1 = r1[0] * z[3] + r1[1] * z[4] + r1[2] * z[5]
        v2 = r2[0] * z[3] + r2[1] * z[4] + r2[2] * z[5]
        return v1, v2

    # hybrid data ------------------------------------------------------------------------
    def guards(self, z, d, u):
        if self.variant == "mas":
            return []
        J1, J2 = split_Jeq(u)
        v1, v2 = self.bundle_velocities(z)
        n, w = self.bp.n, self.wire
        g1 = hw.wire_guards(w, z[6], z[7], d[0], d[1], v1, J1 / n, self.T_E)
        g2 = hw.wire_guards(w, z[8], z[9], d[2], d[3], v2, J2 / n, self.T_E)
        return [(g, (1, i)) for g, i in g1] + [(g, (2, i)) for g, i in g2]

    def enabled_jumps(self, z, d, u):
        if self.variant == "mas":
            return []
        J1, J2 = split_Jeq(u)
        v1, v2 = self.bundle_velocities(z)
        n, w = self.bp.n, self.wire
        D1 = hw.jump_set_members(w, z[6], z[7], d[0], d[1], v1, J1 / n, self.T_E)
        D2 = hw.jump_set_members(w, z[8], z[9], d[2], d[3], v2, J2 / n, self.T_E)
        return [(1, i) for i in D1] + [(2, i) for i in D2]

    def jump(self, z, d, jump_id):
        wire, index = jump_id
        if wire == 1:
            x3, q = hw.jump_discrete(self.wire, z[6], z[7], d[0], index)
            return z, (x3, q, d[2], d[3])
        x3, q = hw.jump_discrete(self.wire, z[8], z[9], d[2], index)
        return z, (d[0], d[1], x3, q)

    def jump_priority(self, jump_id):
        return hw.priority_key(jump_id[1]), jump_id[0]

    def in_flow_set(self, z, d, u, tol=0.0):
        if self.variant == "mas":
            return True
        return all(g >= -tol for g, _ in self.guards(z, d, u))

    def escaped(self, z, d):
        if not np.isfinite(z).all():
            return "non-finite state"
        if self.variant == "mas":
            for x in (z[7], z[10]):
                if not -1e-9 <= x <= 1.0 + 1e-9:
                    return f"phase fraction {x:.12g} left [0, 1]"
        return None

    # outputs -----------------------------------------------------------------------------
    def wire_phase_fractions(self, z, d):
        w = self.wire
        if self.variant == "hybrid":
            return (hw.effective_x(w, z[6], z[7], d[0], d[1]),
                    hw.effective_x(w, z[8], z[9], d[2], d[3]))
        return min(max(z[7], 0.0), 1.0), min(max(z[10], 0.0), 1.0)

    def bundle_forces(self, z, d):
        xm1, xm2 = self.wire_phase_fractions(z, d)
        scale = self.bp.n * self.wire.area
        return (scale * stress(self.wire, z[6], xm1),
                scale * stress(self.wire, z[8] if self.variant == "hybrid" else z[9], xm2))

    def power_residual(self, z, d):
        """``f.v + tau.q_dot`` of the interconnection at a state, and its scale.

        The scale is ``sum |f_i v_i|``: antagonistic bundles often exchange
        nearly equal and opposite power, so ``|f.v|`` itself can cancel.
        """
        f = np.array(self.bundle_forces(z, d))
        q_gen, q_dot = z[0:3], z[3:6]
        v, tau = interconnect(self.bp, q_gen, q_dot, f)
        return interconnection_power(f, v, tau, q_dot), float(np.sum(np.abs(f * v)))

    def columns(self):
        base = ["t_s", "j", "J_eq_W", "U_x_m", "U_y_m", "alpha_rad", "l1_m", "l2_m", "f1_N", "f2_N"]
        if self.variant == "hybrid":
            per = ["q{k}", "x3_{k}", "eps{k}", "T{k}_K", "xM{k}"]
        else:
            per = ["eps{k}", "T{k}_K", "xM{k}"]
        return base + [c.format(k=1) for c in per] + [c.format(k=2) for c in per]

    def rows(self, traj):
        for t, j, z, d, u in zip(traj.t, traj.j, traj.z, traj.d, traj.u):
            l1, l2 = wire_lengths(self.bp, z[0:3])
            f1, f2 = self.bundle_forces(z, d)
            xm1, xm2 = self.wire_phase_fractions(z, d)
            row = [t, int(j), u, z[0], z[1], z[2], l1, l2, f1, f2]
            if self.variant == "hybrid":
                row += [d[1], d[0], z[6], z[7], xm1, d[3], d[2], z[8], z[9], xm2]
            else:
                row += [z[6], z[8], xm1, z[9], z[11], xm2]
            yield row

    def check_small_deformation(self, traj) -> float:
        peak = float(np.max(np.abs(traj.z[:, 2]))) if len(traj) else 0.0
        if peak > ALPHA_WARN:
            logger.warning("|alpha| reached %.3f rad, beyond the small-deformation regime", peak)
        return peak


def coupled_system(bp: BeamParams, p: MaterialParams, variant: str = "hybrid", **kwargs) -> CoupledSystem:
    return CoupledSystem(bp, p, variant=variant, **kwargs)
