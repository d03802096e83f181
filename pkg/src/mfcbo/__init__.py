"""Consensus-based optimization: particle solver, truncated mean-field solver
and the measure-space tools they share."""

from .dynamics import (
    CboParams,
    DiffusionModel,
    SimulationState,
    Trajectory,
    consensus_point,
    consensus_weights,
    drift_field,
    em_step,
    run_particle_cbo,
    sublinearity_check,
    truncated_consensus,
)
from .estimators import ConsensusBasedOptimizer, MeanFieldCBO
from .exceptions import CBOError, DataError, NumericalBlowUpError, UsageError
from .initial import Gaussian, PointMass, UniformBox
from .meanfield import (
    MeanFieldSolution,
    PicardConfig,
    bdg_constant,
    constants_report,
    contraction_constants,
    moment_bound_constants,
    picard_fixed_point,
    picard_map,
    propagation_of_chaos,
    solve_auxiliary,
    truncated_meanfield_solve,
    uniqueness_probe,
    verify_moment_bound,
)
from .measure import (
    Ensemble,
    MeasureCurve,
    TruncationConfig,
    cutoff_eta,
    moment_p,
    path_distance_upper,
    truncation_phi,
    wasserstein_1d,
    wasserstein_assignment,
    wasserstein_to_dirac0,
)
from .objective import (
    ObjectiveFunction,
    ObjectiveParams,
    as_objective,
    builtin_objective,
    critical_exponent,
    evaluate,
    validate_class_membership,
)

__version__ = "0.1.0"
