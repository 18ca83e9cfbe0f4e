"""Voltage stability analysis for islanded microgrids under quadratic droop.

The package models an AC microgrid as a connected graph of load and inverter
buses coupled through inductive lines. Inverters run a quadratic voltage droop
law; loads are static (impedance, current, power) or dynamic shunts. The
modules split along the analysis pipeline:

``netmodel``    network description and susceptance structure checks
``reduction``   Kron reduction onto the load buses and effective reactances
``loads``       static and dynamic load models
``equilibrium`` operating-point solvers (closed form, perturbative, Newton)
``stability``   spectral certificates for the operating point
``sharing``     steady-state reactive power sharing analysis
``optimality``  the network cost function minimized at equilibrium
``simulate``    time-domain integration of the closed loop
``cli``         network files, JSON reports, command line entry point
"""

__version__ = "0.1.0"

from .errors import (
    AlgebraicSingularityError,
    CapacitiveLoadError,
    DisconnectedNetworkError,
    HeavyLoadingError,
    HypothesisError,
    IllConditionedError,
    InductiveCurrentError,
    InternalConsistencyError,
    MicrogridError,
    ModelError,
    NetworkFileError,
    NonconvergenceError,
    VoltageCollapseError,
)
from .netmodel import (
    Branch,
    NetworkModel,
    SusceptanceBlocks,
    build_susceptance,
    rotate_uniform_ratio,
    validate_susceptance,
)
from .reduction import (
    EffectiveReactanceMap,
    ReducedNetwork,
    check_reduced_properties,
    controller_augmented_matrix,
    effective_reactances,
    kron_eliminate,
    kron_reduce,
    reduce_network,
)
from .loads import (
    DynShuntState,
    LoadKind,
    LoadSpec,
    dyn_shunt_equilibrium,
    dyn_shunt_power,
    dyn_shunt_rate,
    eval_load,
    load_jacobian,
)
from .equilibrium import (
    EquilibriumSolution,
    ShortCircuitMatrix,
    fixed_residual_tol,
    recover_inverter_voltages,
    reduced_residual,
    short_circuit_matrix,
    solve_dynamic_shunt,
    solve_newton,
    solve_zi,
    solve_zip_perturbative,
    verify_full_equilibrium,
)
from .stability import (
    StabilityReport,
    analyze,
    certify_hurwitz,
    dynamic_shunt_spectrum,
    full_dae_spectrum,
    reduced_jacobian,
    sufficient_condition,
)
from .sharing import (
    SharingReport,
    distance_based_injections,
    distance_sharing_matrix,
    high_gain_limit,
    low_gain_limit,
    low_gain_matrix,
    proportional_shares,
    realized_injections,
    sharing_diagnostics,
    sharing_matrix,
)
from .optimality import (
    CostBreakdown,
    OptimalityVerdict,
    cost_gradient,
    cost_hessian,
    cost_quadratic_form,
    evaluate_cost,
    minimize_cost,
    verify_optimality,
)
from .simulate import (
    DisturbanceSchedule,
    SimConfig,
    SimTrace,
    SinusoidalSegment,
    StepChange,
    linearize_at,
    simulate,
)
from .validation import ValidationItem, ValidationReport

__all__ = [
    "__version__",
    "AlgebraicSingularityError",
    "Branch",
    "CapacitiveLoadError",
    "CostBreakdown",
    "DisconnectedNetworkError",
    "DisturbanceSchedule",
    "DynShuntState",
    "EffectiveReactanceMap",
    "EquilibriumSolution",
    "HeavyLoadingError",
    "HypothesisError",
    "IllConditionedError",
    "InductiveCurrentError",
    "InternalConsistencyError",
    "LoadKind",
    "LoadSpec",
    "MicrogridError",
    "ModelError",
    "NetworkFileError",
    "NetworkModel",
    "NonconvergenceError",
    "OptimalityVerdict",
    "ReducedNetwork",
    "SharingReport",
    "ShortCircuitMatrix",
    "SimConfig",
    "SimTrace",
    "SinusoidalSegment",
    "StabilityReport",
    "StepChange",
    "SusceptanceBlocks",
    "ValidationItem",
    "ValidationReport",
    "VoltageCollapseError",
    "analyze",
    "build_susceptance",
    "certify_hurwitz",
    "check_reduced_properties",
    "controller_augmented_matrix",
    "cost_gradient",
    "cost_hessian",
    "cost_quadratic_form",
    "distance_based_injections",
    "distance_sharing_matrix",
    "dyn_shunt_equilibrium",
    "dyn_shunt_power",
    "dyn_shunt_rate",
    "dynamic_shunt_spectrum",
    "effective_reactances",
    "eval_load",
    "evaluate_cost",
    "fixed_residual_tol",
    "full_dae_spectrum",
    "high_gain_limit",
    "kron_eliminate",
    "kron_reduce",
    "linearize_at",
    "load_jacobian",
    "low_gain_limit",
    "low_gain_matrix",
    "minimize_cost",
    "proportional_shares",
    "realized_injections",
    "recover_inverter_voltages",
    "reduce_network",
    "reduced_jacobian",
    "reduced_residual",
    "rotate_uniform_ratio",
    "sharing_diagnostics",
    "sharing_matrix",
    "short_circuit_matrix",
    "simulate",
    "solve_dynamic_shunt",
    "solve_newton",
    "solve_zi",
    "solve_zip_perturbative",
    "sufficient_condition",
    "validate_susceptance",
    "verify_full_equilibrium",
    "verify_optimality",
]
