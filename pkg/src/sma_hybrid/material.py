"""Single-crystal SMA wire material: parameters and constitutive algebra.

Everything in here is a pure function of an immutable :class:`MaterialParams`
and scalar states, shared by the hybrid wire model and the stiff MAS
reference. Units are SI throughout (Pa, K, m, W, J).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

PHASE_TOL = 1e-12
SINGULAR_TOL = 1e-12

# JSON key -> attribute name ("lambda" is a Python keyword)
_JSON_ALIASES = {"lambda": "lam"}


class MaterialError(ValueError):
    """Invalid material parameters or an argument outside the model domain."""


@dataclass(frozen=True)
class MaterialParams:
    E_A: float
    E_M: float
    eps_T: float
    sigma_T: float
    sigma_MW_T0: float
    delta_sigma: float
    T0: float
    r0: float
    l0: float
    rho_V: float
    c_V: float
    lam: float
    omega_x: float = 100.0
    V_L: float = 5e-23
    k_B: float = 1.380649e-23

    Omega: float = field(init=False, repr=False, compare=False)
    A_s: float = field(init=False, repr=False, compare=False)
    area: float = field(init=False, repr=False, compare=False)
    compliance_gap: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("eps_T", "delta_sigma", "sigma_T", "r0", "l0", "rho_V",
                     "c_V", "lam", "omega_x", "V_L", "T0", "k_B"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise MaterialError(f"{name} must be positive and finite, got {value!r}")
        if not (self.E_A > self.E_M > 0):
            raise MaterialError(f"need E_A > E_M > 0, got E_A={self.E_A}, E_M={self.E_M}")
        if not math.isfinite(self.sigma_MW_T0):
            raise MaterialError("sigma_MW_T0 must be finite")
        object.__setattr__(self, "area", math.pi * self.r0**2)
        object.__setattr__(self, "Omega", math.pi * self.r0**2 * self.l0)
        object.__setattr__(self, "A_s", 2.0 * math.pi * self.r0 * self.l0)
        object.__setattr__(self, "compliance_gap", 1.0 / self.E_M - 1.0 / self.E_A)

    @property
    def heat_capacity(self) -> float:
        """Omega * rho_V * c_V, the lumped wire heat capacity [J/K]."""
        return self.Omega * self.rho_V * self.c_V

    @property
    def convection(self) -> float:
        """lambda * A_s [W/K]."""
        return self.lam * self.A_s

    def with_values(self, **changes) -> "MaterialParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if not f.init:
                continue
            key = "lambda" if f.name == "lam" else f.name
            out[key] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MaterialParams":
        known = {f.name for f in fields(cls) if f.init}
        kwargs = {}
        for key, value in data.items():
            name = _JSON_ALIASES.get(key, key)
            if name not in known:
                raise MaterialError(f"unknown material parameter {key!r}")
            kwargs[name] = float(value)
        missing = known - kwargs.keys() - {"omega_x", "V_L", "k_B"}
        if missing:
            raise MaterialError(f"missing material parameters: {sorted(missing)}")
        return cls(**kwargs)


def load_params(path: str | Path) -> MaterialParams:
    with open(path, encoding="utf-8") as fh:
        return MaterialParams.from_dict(json.load(fh))


def save_params(p: MaterialParams, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(p.to_dict(), fh, indent=2)
        fh.write("\n")


def default_params() -> MaterialParams:
    """The identified CuZnAl single-crystal parameter set bundled with the package."""
    text = resources.files("sma_hybrid").joinpath("params/cuznal_fu1993.json").read_text()
    return MaterialParams.from_dict(json.loads(text))


@dataclass(frozen=True)
class WireInput:
    v: float
    J: float
    T_E: float

    def __post_init__(self):
        if self.J < 0:
            raise MaterialError(f"Joule heating must be non-negative, got {self.J}")
        if self.T_E <= 0:
            raise MaterialError(f"environment temperature must be positive, got {self.T_E}")


# --- constitutive relations -------------------------------------------------

def stress(p: MaterialParams, eps: float, x_M: float) -> float:
    if x_M < -PHASE_TOL or x_M > 1.0 + PHASE_TOL:
        raise MaterialError(f"phase fraction {x_M} outside [0, 1]")
    return (eps - p.eps_T * x_M) / (x_M / p.E_M + (1.0 - x_M) / p.E_A)


def wire_force(p: MaterialParams, sigma: float) -> float:
    return p.area * sigma


def wire_length(p: MaterialParams, eps: float) -> float:
    return p.l0 * (1.0 + eps)


def strain_rate(p: MaterialParams, v: float) -> float:
    return v / p.l0


def sigma_MW(p: MaterialParams, T: float) -> float:
    return p.sigma_MW_T0 + p.sigma_T * (T - p.T0)


def sigma_A(p: MaterialParams, T: float) -> float:
    return p.sigma_MW_T0 + p.sigma_T * (T - p.T0) + 0.5 * p.delta_sigma


def sigma_M(p: MaterialParams, T: float) -> float:
    return p.sigma_MW_T0 + p.sigma_T * (T - p.T0) - 0.5 * p.delta_sigma


# --- latent heat ------------------------------------------------------------

def _gamma(p: MaterialParams, sigma: float) -> float:
    return p.compliance_gap * 0.5 * sigma * sigma + p.eps_T * sigma


def latent_coeffs(p: MaterialParams, sigma: float, T: float, x_M: float) -> tuple[float, float]:
    """Return ``(L_xM, L_T)`` of the latent heat rate ``L_xM*dx_M/dt + L_T*dT/dt``."""
    s_mw = sigma_MW(p, T)
    gamma_T = (p.compliance_gap * s_mw + p.eps_T) * p.sigma_T
    gamma_TT = p.compliance_gap * p.sigma_T**2
    L_xM = p.Omega * (T * gamma_T + _gamma(p, sigma) - _gamma(p, s_mw))
    L_T = p.Omega * T * gamma_TT * (x_M - 1.0)
    return L_xM, L_T


# --- algebraic phase fractions of the transformation modes ---------------------

def Sigma_A(p: MaterialParams, T: float) -> float:
    return (p.E_A - p.E_M) * sigma_A(p, T) + p.E_A * p.E_M * p.eps_T


def Sigma_M(p: MaterialParams, T: float) -> float:
    return (p.E_A - p.E_M) * sigma_M(p, T) + p.E_A * p.E_M * p.eps_T


def M_aux(p: MaterialParams, eps: float) -> float:
    return (p.E_A - p.E_M) * eps * p.sigma_T + p.E_M * p.eps_T * p.sigma_T


def _check_sigma(p: MaterialParams, value: float) -> float:
    if abs(value) < SINGULAR_TOL * p.E_A * p.E_M * p.eps_T:
        raise MaterialError("singular transformation denominator (Sigma ~ 0)")
    return value


def x_M4(p: MaterialParams, eps: float, T: float) -> float:
    """Phase fraction that puts the stress exactly on sigma_A(T)."""
    s = _check_sigma(p, Sigma_A(p, T))
    return p.E_M * (p.E_A * eps - sigma_A(p, T)) / s


def x_M5(p: MaterialParams, eps: float, T: float) -> float:
    """Phase fraction that puts the stress exactly on sigma_M(T)."""
    s = _check_sigma(p, Sigma_M(p, T))
    return p.E_M * (p.E_A * eps - sigma_M(p, T)) / s
