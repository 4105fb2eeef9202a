"""Lindblad simulation of driven Kerr parametric oscillators.

One or two parametrically pumped Kerr resonators with single-photon loss and
dephasing, pulse schedules for phase locking and chirped annealing, and
Husimi-based readout of the locked phase.
"""

from .drives import (
    DriveSettings,
    ModeParams,
    PulseSchedule,
    coherent_amplitude,
    pump_amp_from_power,
    rabi_from_power,
)
from .evolve import IntegratorConfig, Trajectory, integrate, lindblad_rhs
from .experiments import (
    ConfigError,
    Scenario,
    SweepResult,
    SweepRow,
    builtin_scenarios,
    emit,
    fast_variant,
    load_scenario,
    resolve_scenario,
    run_scenario,
    scenario_from_config,
)
from .fockspace import ComplexOperator, DensityMatrix, Truncation, coherent_state
from .model import SystemParams, collapse_ops, hamiltonian, ising_coefficients, solution_state
from .readout import OccurrenceProbs, QGrid, husimi_q, occurrence_one, occurrence_two, \
    window_average

__version__ = "0.1.0"

__all__ = [
    "ComplexOperator",
    "ConfigError",
    "DensityMatrix",
    "DriveSettings",
    "IntegratorConfig",
    "ModeParams",
    "OccurrenceProbs",
    "PulseSchedule",
    "QGrid",
    "Scenario",
    "SweepResult",
    "SweepRow",
    "SystemParams",
    "Trajectory",
    "Truncation",
    "builtin_scenarios",
    "coherent_amplitude",
    "coherent_state",
    "collapse_ops",
    "emit",
    "fast_variant",
    "hamiltonian",
    "husimi_q",
    "integrate",
    "ising_coefficients",
    "lindblad_rhs",
    "load_scenario",
    "occurrence_one",
    "occurrence_two",
    "pump_amp_from_power",
    "rabi_from_power",
    "resolve_scenario",
    "run_scenario",
    "scenario_from_config",
    "solution_state",
    "window_average",
]
