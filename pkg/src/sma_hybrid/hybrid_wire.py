"""Hybrid reformulation of the single-crystal SMA wire.

The wire is the hybrid system ``(C, f, D, G)`` over the state
``(eps, T, x3, q)``: strain and temperature flow, while the frozen phase
fraction ``x3`` and the mode ``q`` only change at jumps.

Modes::

    1  full austenite          x_M = 0
    2  full martensite         x_M = 1
    3  inner loop              x_M = x3 (frozen)
    4  austenite -> martensite x_M = x_M4(eps, T), stress pinned to sigma_A(T)
    5  martensite -> austenite x_M = x_M5(eps, T), stress pinned to sigma_M(T)

The inner-loop flow set is ``x_M4 <= x3 <= x_M5``. Since the stress falls
with the phase fraction, this is the stress window ``sigma_M <= sigma <=
sigma_A``; the opposite ordering of the two bounds describes an empty set.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .material import (
    MaterialError,
    MaterialParams,
    WireInput,
    latent_coeffs,
    sigma_A,
    sigma_M,
    stress,
    wire_force,
)

# Rate guards (phi_xM, in 1/s) are multiplied by this time so that one
# dimensionless event tolerance serves both kinds of guard.
RATE_GUARD_TIME = 1e-3
DENOM_TOL = 1e-9
CLAMP_TOL = 1e-9

EDGES = frozenset({(1, 4), (2, 5), (3, 5), (3, 4), (4, 2), (4, 3), (5, 1), (5, 3)})
JUMP_EDGES = {1: (1, 4), 2: (2, 5), 3: (3, 5), 4: (3, 4),
              5: (4, 2), 6: (4, 3), 7: (5, 1), 8: (5, 3)}


class Mode(IntEnum):
    AUSTENITE = 1
    MARTENSITE = 2
    INNER_LOOP = 3
    A_TO_M = 4
    M_TO_A = 5


class HybridModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class HybridWireState:
    eps: float
    T: float
    x3: float
    q: Mode

    def __post_init__(self):
        object.__setattr__(self, "q", Mode(self.q))
        if not 0.0 <= self.x3 <= 1.0:
            raise MaterialError(f"frozen phase fraction {self.x3} outside [0, 1]")
        if self.q == Mode.AUSTENITE and self.x3 != 0.0:
            raise MaterialError("mode 1 requires x3 = 0")
        if self.q == Mode.MARTENSITE and self.x3 != 1.0:
            raise MaterialError("mode 2 requires x3 = 1")


# --- scalar kernels (hot path) ----------------------------------------------------

def _x_alg(p: MaterialParams, eps: float, T: float, forward: bool) -> tuple[float, float, float]:
    """Return (x_M, Sigma, sigma_tr) for the A->M (forward) or M->A branch."""
    s_tr = sigma_A(p, T) if forward else sigma_M(p, T)
    big = (p.E_A - p.E_M) * s_tr + p.E_A * p.E_M * p.eps_T
    if abs(big) < 1e-12 * p.E_A * p.E_M * p.eps_T:
        raise HybridModelError("singular transformation denominator (Sigma ~ 0)")
    return p.E_M * (p.E_A * eps - s_tr) / big, big, s_tr


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def transformation_rates(p: MaterialParams, eps: float, T: float,
                         v: float, J: float, T_E: float,
                         forward: bool) -> tuple[float, float, float]:
    """Temperature rate, phase-fraction rate and raw x_M of a transformation mode.

    ``forward=True`` gives mode 4 (stress on sigma_A), otherwise mode 5.
    """
    xm, big, s_tr = _x_alg(p, eps, T, forward)
    L_xM, L_T = latent_coeffs(p, s_tr, T, _clamp01(xm))
    ea_em = p.E_A * p.E_M
    m_aux = p.sigma_T * ((p.E_A - p.E_M) * eps + p.E_M * p.eps_T)
    big2 = big * big
    lead = (p.heat_capacity - L_T) * big2
    den = lead + ea_em * L_xM * m_aux
    if abs(den) < DENOM_TOL * abs(lead):
        raise HybridModelError("singular temperature-rate denominator in transformation mode")
    deps = v / p.l0
    phi_T = ((J - p.convection * (T - T_E)) * big2 + ea_em * L_xM * big * deps) / den
    phi_x = ea_em / big2 * (big * deps - m_aux * phi_T)
    return phi_T, phi_x, xm


def elastic_temperature_rate(p: MaterialParams, T: float, x_M: float,
                             J: float, T_E: float) -> float:
    _, L_T = latent_coeffs(p, 0.0, T, x_M)
    return (J - p.convection * (T - T_E)) / (p.heat_capacity - L_T)


def mode_rates(p: MaterialParams, eps: float, T: float, x3: float, q: int,
               v: float, J: float, T_E: float) -> tuple[float, float, float]:
    """``(deps/dt, dT/dt, effective x_M)`` for the current mode."""
    if q == 4 or q == 5:
        phi_T, _, xm = transformation_rates(p, eps, T, v, J, T_E, q == 4)
        return v / p.l0, phi_T, _clamp01(xm)
    xm = 0.0 if q == 1 else (1.0 if q == 2 else x3)
    return v / p.l0, elastic_temperature_rate(p, T, xm, J, T_E), xm


def effective_x(p: MaterialParams, eps: float, T: float, x3: float, q: int) -> float:
    if q == 1:
        return 0.0
    if q == 2:
        return 1.0
    if q == 3:
        return x3
    return _clamp01(_x_alg(p, eps, T, q == 4)[0])


def wire_guards(p: MaterialParams, eps: float, T: float, x3: float, q: int,
                v: float, J: float, T_E: float) -> list[tuple[float, int]]:
    """Exit guards of the current flow set as ``(value, jump index)`` pairs.

    Each value is >= 0 inside C_q; crossing below zero exits through the
    paired jump set.
    """
    if q == 1:
        return [(-_x_alg(p, eps, T, True)[0], 1)]
    if q == 2:
        return [(_x_alg(p, eps, T, False)[0] - 1.0, 2)]
    if q == 3:
        return [(_x_alg(p, eps, T, False)[0] - x3, 3),
                (x3 - _x_alg(p, eps, T, True)[0], 4)]
    if q == 4:
        _, phi_x, xm = transformation_rates(p, eps, T, v, J, T_E, True)
        return [(1.0 - xm, 5), (phi_x * RATE_GUARD_TIME, 6)]
    _, phi_x, xm = transformation_rates(p, eps, T, v, J, T_E, False)
    return [(xm, 7), (-phi_x * RATE_GUARD_TIME, 8)]


def jump_set_members(p: MaterialParams, eps: float, T: float, x3: float, q: int,
                     v: float, J: float, T_E: float) -> list[int]:
    """Indices i of every D_i containing the state (closed sets, no tolerance)."""
    if eps < 0.0 or T < 0.0:
        return []
    out = []
    if q == 1 or q == 3 or q == 4:
        _, phi4, xm4 = transformation_rates(p, eps, T, v, J, T_E, True)
    if q == 2 or q == 3 or q == 5:
        _, phi5, xm5 = transformation_rates(p, eps, T, v, J, T_E, False)
    if q == 1:
        if x3 == 0.0 and xm4 >= 0.0 and phi4 >= 0.0:
            out.append(1)
    elif q == 2:
        if x3 == 1.0 and xm5 <= 1.0 and phi5 <= 0.0:
            out.append(2)
    elif q == 3:
        if xm5 <= x3 and phi5 <= 0.0:
            out.append(3)
        if x3 <= xm4 and phi4 >= 0.0:
            out.append(4)
    elif q == 4:
        if xm4 >= 1.0 and phi4 >= 0.0:
            out.append(5)
        if xm4 <= 1.0 and phi4 <= 0.0:
            out.append(6)
    elif q == 5:
        if xm5 <= 0.0 and phi5 <= 0.0:
            out.append(7)
        if xm5 >= 0.0 and phi5 >= 0.0:
            out.append(8)
    return out


def jump_discrete(p: MaterialParams, eps: float, T: float, x3: float,
                  index: int) -> tuple[float, int]:
    """Discrete part ``(x3, q)`` after applying g_index."""
    if index == 1:
        return 0.0, 4
    if index == 2:
        return 1.0, 5
    if index == 3:
        return x3, 5
    if index == 4:
        return x3, 4
    if index == 5:
        return 1.0, 2
    if index == 7:
        return 0.0, 1
    if index in (6, 8):
        xm = _x_alg(p, eps, T, index == 6)[0]
        if xm < -CLAMP_TOL or xm > 1.0 + CLAMP_TOL:
            raise HybridModelError(f"g{index}: frozen fraction {xm} outside [0, 1]")
        return _clamp01(xm), 3
    raise ValueError(f"unknown jump index {index}")


def flow_set_index(p: MaterialParams, eps: float, T: float, x3: float, q: int,
                   v: float, J: float, T_E: float, tol: float = 0.0) -> int | None:
    """Return q if the state lies in C_q (guards >= -tol), else None."""
    if eps < -tol or T < 0.0 or not -tol <= x3 <= 1.0 + tol:
        return None
    if q == 1 and x3 != 0.0 or q == 2 and x3 != 1.0:
        return None
    if all(g >= -tol for g, _ in wire_guards(p, eps, T, x3, q, v, J, T_E)):
        return q
    return None


# --- dataclass-level API -----------------------------------------------------------

def flow_map(p: MaterialParams, x: HybridWireState, u: WireInput) -> tuple[float, float, float, float]:
    deps, dT, _ = mode_rates(p, x.eps, x.T, x.x3, int(x.q), u.v, u.J, u.T_E)
    return deps, dT, 0.0, 0.0


def phase_fraction_rate(p: MaterialParams, x: HybridWireState, u: WireInput) -> float:
    if x.q in (Mode.AUSTENITE, Mode.MARTENSITE, Mode.INNER_LOOP):
        return 0.0
    return transformation_rates(p, x.eps, x.T, u.v, u.J, u.T_E, x.q == Mode.A_TO_M)[1]


def effective_phase_fraction(p: MaterialParams, x: HybridWireState) -> float:
    return effective_x(p, x.eps, x.T, x.x3, int(x.q))


def in_flow_set(p: MaterialParams, x: HybridWireState, u: WireInput,
                tol: float = 0.0) -> tuple[bool, int | None]:
    idx = flow_set_index(p, x.eps, x.T, x.x3, int(x.q), u.v, u.J, u.T_E, tol)
    return idx is not None, idx


def enabled_jumps(p: MaterialParams, x: HybridWireState, u: WireInput) -> list[int]:
    return jump_set_members(p, x.eps, x.T, x.x3, int(x.q), u.v, u.J, u.T_E)


def apply_jump(p: MaterialParams, x: HybridWireState, index: int,
               u: WireInput | None = None, tol: float = 1e-9) -> HybridWireState:
    """Apply g_index. If ``u`` is given the D_index precondition is verified."""
    if JUMP_EDGES[index][0] != x.q:
        raise HybridModelError(f"g{index} is not defined in mode {int(x.q)}")
    if u is not None:
        residual = _guard_residual(p, x, u, index)
        if residual > tol:
            raise HybridModelError(f"state not in D{index} (guard residual {residual:.3g})")
    x3, q = jump_discrete(p, x.eps, x.T, x.x3, index)
    return HybridWireState(x.eps, x.T, x3, Mode(q))


def _guard_residual(p: MaterialParams, x: HybridWireState, u: WireInput, index: int) -> float:
    """How far (normalized) the state is from satisfying the D_index inequalities."""
    _, phi4, xm4 = transformation_rates(p, x.eps, x.T, u.v, u.J, u.T_E, True)
    _, phi5, xm5 = transformation_rates(p, x.eps, x.T, u.v, u.J, u.T_E, False)
    r4, r5 = phi4 * RATE_GUARD_TIME, phi5 * RATE_GUARD_TIME
    conditions = {
        1: (-xm4, -r4),
        2: (xm5 - 1.0, r5),
        3: (xm5 - x.x3, r5),
        4: (x.x3 - xm4, -r4),
        5: (1.0 - xm4, -r4),
        6: (xm4 - 1.0, r4),
        7: (xm5, r5),
        8: (-xm5, -r5),
    }[index]
    return max(0.0, *conditions)


def output_force(p: MaterialParams, x: HybridWireState) -> float:
    return wire_force(p, stress(p, x.eps, effective_phase_fraction(p, x)))


# --- single-wire hybrid system for the generic solver --------------------------------

class WireSystem:
    """One wire driven by prescribed inputs ``u = (v, J, T_E)``.

    Continuous state ``z = [eps, T]``, discrete state ``d = (x3, q)``.
    """

    n_states = 2

    def __init__(self, p: MaterialParams):
        self.p = p

    def flow(self, z, d, u):
        deps, dT, _ = mode_rates(self.p, z[0], z[1], d[0], d[1], u[0], u[1], u[2])
        return np.array([deps, dT])

    def guards(self, z, d, u):
        return wire_guards(self.p, z[0], z[1], d[0], d[1], u[0], u[1], u[2])

    def enabled_jumps(self, z, d, u):
        return jump_set_members(self.p, z[0], z[1], d[0], d[1], u[0], u[1], u[2])

    def jump(self, z, d, index):
        return z, jump_discrete(self.p, z[0], z[1], d[0], index)

    def in_flow_set(self, z, d, u, tol=0.0):
        return flow_set_index(self.p, z[0], z[1], d[0], d[1], u[0], u[1], u[2], tol) is not None

    def escaped(self, z, d):
        if z[0] < -1e-9:
            return "strain below zero (slack wire is not modeled)"
        if not (np.isfinite(z).all() and z[1] > 0.0):
            return "non-physical temperature"
        return None

    def jump_priority(self, index):
        return priority_key(index)

    def output(self, z, d):
        """eps, T, x3, q, x_M, sigma, f for CSV rows."""
        eps, T = float(z[0]), float(z[1])
        xm = effective_x(self.p, eps, T, d[0], d[1])
        sig = stress(self.p, eps, xm)
        return eps, T, d[0], d[1], xm, sig, wire_force(self.p, sig)


def priority_key(index: int) -> tuple[int, int]:
    """Completion jumps (g5, g7) first, then the lowest index."""
    return (0 if index in (5, 7) else 1, index)


def initial_state(p: MaterialParams, eps: float, T: float, x_M: float | None = None) -> tuple:
    """Pick a mode consistent with (eps, T) from rest: a state at rest in an
    elastic mode with the given phase fraction (default: austenite)."""
    if x_M is None or x_M == 0.0:
        return np.array([eps, T]), (0.0, 1)
    if x_M == 1.0:
        return np.array([eps, T]), (1.0, 2)
    return np.array([eps, T]), (float(x_M), 3)
