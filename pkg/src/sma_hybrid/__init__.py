"""Hybrid reformulation of the MAS shape-memory-alloy wire model.

Modules: ``material`` (constitutive algebra), ``hybrid_wire`` (hybrid wire
model), ``solver`` (hybrid-time simulation), ``mas`` (stiff reference model),
``structure`` (flexible robot module), ``calibration`` and ``cli``.
"""

from .hybrid_wire import HybridWireState, Mode, WireSystem
from .material import MaterialParams, WireInput, default_params
from .mas import LinearBarrier, MasWireSystem
from .solver import SolverOptions, simulate
from .structure import BeamParams, CoupledSystem

__all__ = [
    "BeamParams", "CoupledSystem", "HybridWireState", "LinearBarrier", "MasWireSystem",
    "MaterialParams", "Mode", "SolverOptions", "WireInput", "WireSystem", "default_params", "simulate",
]
