"""Energy-momentum conserving and energy-decaying integrators for point-mass dynamics."""

from .diagnostics import (
    ConvergenceRow,
    InvariantSeries,
    MonotonicityReport,
    ReferenceCheck,
    convergence_study,
    invariant_series,
    monotonicity_report,
    reference_solution,
    relative_errors,
    verified_reference,
)
from .errors import (
    ConfigError,
    ConvergenceStudyError,
    EmsplitError,
    IllPosedMassError,
    SingularConfigurationError,
    SplitValidationError,
    StepFailure,
    TangentSingularError,
)
from .experiments import gravitating_bodies, lj_pair, neo_hookean_spring
from .integrators import (
    ForceEval,
    IntegratorKind,
    RescueKind,
    lambda_generalized_eyre,
    lambda_labudde_greenspan,
    lambda_midpoint,
    lambda_perturbed_midpoint,
    lambda_perturbed_trapezoidal,
    pair_force,
    step_residual,
    step_tangent,
)
from .model import (
    CentralField,
    MassModel,
    PairTable,
    PhaseState,
    PotentialFamily,
    SplitPotential,
    SystemSpec,
    angular_momentum,
    center_of_mass,
    kinetic_energy,
    linear_momentum,
    potential_energy,
    total_energy,
)
from .potentials import (
    GRAVITATIONAL_CONSTANT,
    GravityParams,
    LennardJonesParams,
    NeoHookeanParams,
    gravitational,
    lennard_jones,
    neo_hookean,
    quadratic,
    zero,
)
from .solver import (
    Schedule,
    SolverConfig,
    StepReport,
    Trajectory,
    advance,
    integrate,
    segregated_increment,
)

__all__ = [
    "CentralField", "ConfigError", "ConvergenceRow", "ConvergenceStudyError", "EmsplitError",
    "ForceEval", "GRAVITATIONAL_CONSTANT", "GravityParams", "IllPosedMassError", "IntegratorKind",
    "InvariantSeries", "LennardJonesParams", "MassModel", "MonotonicityReport", "NeoHookeanParams",
    "PairTable", "PhaseState", "PotentialFamily", "ReferenceCheck", "RescueKind", "Schedule",
    "SingularConfigurationError", "SolverConfig", "SplitPotential", "SplitValidationError",
    "StepFailure", "StepReport", "SystemSpec", "TangentSingularError", "Trajectory", "advance",
    "angular_momentum", "center_of_mass", "convergence_study", "gravitating_bodies",
    "gravitational", "integrate", "invariant_series", "kinetic_energy", "lambda_generalized_eyre",
    "lambda_labudde_greenspan", "lambda_midpoint", "lambda_perturbed_midpoint",
    "lambda_perturbed_trapezoidal", "lennard_jones", "linear_momentum", "lj_pair",
    "monotonicity_report", "neo_hookean", "neo_hookean_spring", "pair_force", "potential_energy",
    "quadratic", "reference_solution", "relative_errors", "segregated_increment", "step_residual",
    "step_tangent", "total_energy", "verified_reference", "zero",
]
