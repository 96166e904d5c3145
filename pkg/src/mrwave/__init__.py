"""Adaptive multi-rate envelope simulation of circuit DAEs.

Periodic spline Galerkin discretization on wavelet-adapted grids in the fast
time, BDF steps in the slow time, optional local frequency tracking.
"""

from .circuit import Circuit
from .envelope import (
    EnvelopeConfig,
    EnvelopeResult,
    compute_initial_envelope,
    envelope_step,
    reconstruct_univariate,
    simulate_envelope,
)
from .estimators import EnvelopeSimulator, PeriodicSteadyState, TransientSimulator, make_policy
from .exceptions import MrwaveError
from .netlist import format_netlist, parse_netlist, read_netlist
from .splines import KnotGrid, SplineCurve, uniform_grid
from .transient import TransientConfig, dc_operating_point
from .wavelets import RefinementPolicy

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "EnvelopeConfig",
    "EnvelopeResult",
    "EnvelopeSimulator",
    "KnotGrid",
    "MrwaveError",
    "PeriodicSteadyState",
    "RefinementPolicy",
    "SplineCurve",
    "TransientConfig",
    "TransientSimulator",
    "compute_initial_envelope",
    "dc_operating_point",
    "envelope_step",
    "format_netlist",
    "make_policy",
    "parse_netlist",
    "read_netlist",
    "reconstruct_univariate",
    "simulate_envelope",
    "uniform_grid",
]
