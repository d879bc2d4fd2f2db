"""Stiff MAS reference model of the SMA wire.

The phase fraction is a state driven by thermally activated transition
rates. The energy barriers are a pluggable :class:`BarrierModel`; the
shipped :class:`LinearBarrier` vanishes at the transformation stresses and
grows linearly away from them, which is all the quasi-static limit depends on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .material import MaterialParams, latent_coeffs, stress, wire_force

X_TOL = 1e-9


class BarrierModel:
    """Energy barriers ``(dg_AM, dg_MA)`` in J/m^3 as functions of (sigma, T)."""

    def barriers(self, p: MaterialParams, sigma: float, T: float) -> tuple[float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearBarrier(BarrierModel):
    """``dg_AM = c_g*max(0, sigma_A - sigma)``, ``dg_MA = c_g*max(0, sigma - sigma_M)``.

    ``c_g`` is dimensionless (J/m^3 per Pa). ``None`` means ``eps_T`` of the
    material, i.e. the transformation work missing to reach the
    transformation stress.
    """

    c_g: float | None = None

    def barriers(self, p, sigma, T):
        c = p.eps_T if self.c_g is None else self.c_g
        s_mw = p.sigma_MW_T0 + p.sigma_T * (T - p.T0)
        half = 0.5 * p.delta_sigma
        d_am = s_mw + half - sigma
        d_ma = sigma - s_mw + half
        return c * d_am if d_am > 0.0 else 0.0, c * d_ma if d_ma > 0.0 else 0.0


@dataclass(frozen=True)
class MasState:
    eps: float
    x_M: float
    T: float


def transition_probabilities(p: MaterialParams, barrier: BarrierModel,
                             sigma: float, T: float) -> tuple[float, float]:
    """Return ``(p_MA, p_AM)`` in 1/s."""
    dg_am, dg_ma = barrier.barriers(p, sigma, T)
    scale = p.V_L / (p.k_B * T)
    # exponents are capped at zero: trial points of the integrator may carry T < 0
    p_am = p.omega_x * math.exp(min(0.0, -scale * dg_am))
    p_ma = p.omega_x * math.exp(min(0.0, -scale * dg_ma))
    return p_ma, p_am


def _rates(p, barrier, eps, x_M, T, v, J, T_E):
    sig = (eps - p.eps_T * x_M) / (x_M / p.E_M + (1.0 - x_M) / p.E_A)
    p_ma, p_am = transition_probabilities(p, barrier, sig, T)
    dx = -p_ma * x_M + p_am * (1.0 - x_M)
    L_xM, L_T = latent_coeffs(p, sig, T, x_M)
    den = p.heat_capacity - L_T
    if abs(den) < 1e-9 * p.heat_capacity:
        raise ZeroDivisionError("singular heat-capacity denominator")
    dT = (J - p.convection * (T - T_E) + L_xM * dx) / den
    return v / p.l0, dx, dT


def mas_rhs(p: MaterialParams, barrier: BarrierModel, state: MasState, u) -> tuple[float, float, float]:
    """``(deps/dt, dx_M/dt, dT/dt)`` for inputs ``u`` with fields v, J, T_E."""
    return _rates(p, barrier, state.eps, state.x_M, state.T, u.v, u.J, u.T_E)


class MasWireSystem:
    """The MAS wire as a hybrid system with an empty jump set.

    ``z = [eps, x_M, T]``; ``u = (v, J, T_E)``.
    """

    n_states = 3

    def __init__(self, p: MaterialParams, barrier: BarrierModel | None = None):
        self.p = p
        self.barrier = barrier or LinearBarrier()

    def flow(self, z, d, u):
        return np.array(_rates(self.p, self.barrier, z[0], z[1], z[2], u[0], u[1], u[2]))

    def guards(self, z, d, u):
        return []

    def enabled_jumps(self, z, d, u):
        return []

    def jump(self, z, d, index):
        raise RuntimeError("the MAS model has no jumps")

    def escaped(self, z, d):
        if not -X_TOL <= z[1] <= 1.0 + X_TOL:
            return f"phase fraction {z[1]:.12g} left [0, 1]"
        if not (np.isfinite(z).all() and z[2] > 0.0):
            return "non-physical temperature"
        return None

    def output(self, z, d):
        """eps, T, x_M, sigma, f for CSV rows."""
        eps, xm, T = float(z[0]), float(z[1]), float(z[2])
        sig = stress(self.p, eps, min(max(xm, 0.0), 1.0))
        return eps, T, xm, sig, wire_force(self.p, sig)

