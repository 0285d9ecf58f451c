"""Stark-Zeeman systems with KS, Moser and loop-space regularizations."""

from .bov import (
    CriticalPoint,
    FunctionalReport,
    SolverOptions,
    action_gradient,
    action_value,
    find_critical_point,
    legendre_transform,
    verify_generalized_solution,
)
from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    NumericalError,
    StarkZeemanError,
    UnsupportedError,
)
from .ksgeom import KSPhasePoint, PhasePoint, bl, ks_diff, ks_diff_transpose, ks_lift, ks_map
from .loops import Loop
from .systems import StarkZeemanSystem, builtin_system, critical_energy, load_system

__version__ = "0.1.0"
