"""Geometric and elastostatic calibration of serial manipulators.

Identification of kinematic deviations and joint compliances from laser
tracker measurements whose noise varies strongly across the workspace, using
dispersion-aware weighted least squares with honest sandwich covariances.
"""

from .errors import (
    BucketMatchError,
    CalibrationError,
    MeasurementFormatError,
    MissingNoiseError,
    ModelFormatError,
    NoiseFormatError,
    RankDeficientError,
    ReplicateCountError,
    UnderDeterminedError,
)
from .estimator import (
    EstimationResult,
    IterationSnapshot,
    confidence_intervals,
    irls,
    ols_estimate,
    optimal_weights,
    robust_weights,
    wls_estimate,
)
from .kinematics import (
    Joint,
    ManipulatorModel,
    Pose,
    forward_kinematics,
    joint_jacobian,
    parameter_jacobian,
    perturbed,
    transform,
)
from .noise import (
    DEFAULT_SIGMA0,
    NoiseModel,
    build_sigma,
    deflection_dispersions,
    estimate_dispersions,
)
from .regressor import (
    ComplianceParameterMap,
    ExperimentRecord,
    StackedSystem,
    Wrench,
    elastostatic_regressor,
    geometric_regressor,
    stack_system,
)
from .simulator import (
    ComplianceVector,
    MonteCarloReport,
    StudyDesign,
    monte_carlo_compare,
    simulate_measurements,
)

__version__ = "0.1.0"

__all__ = [
    "BucketMatchError",
    "CalibrationError",
    "ComplianceParameterMap",
    "ComplianceVector",
    "DEFAULT_SIGMA0",
    "EstimationResult",
    "ExperimentRecord",
    "IterationSnapshot",
    "Joint",
    "ManipulatorModel",
    "MeasurementFormatError",
    "MissingNoiseError",
    "ModelFormatError",
    "MonteCarloReport",
    "NoiseFormatError",
    "NoiseModel",
    "Pose",
    "RankDeficientError",
    "ReplicateCountError",
    "StackedSystem",
    "StudyDesign",
    "UnderDeterminedError",
    "Wrench",
    "build_sigma",
    "confidence_intervals",
    "deflection_dispersions",
    "elastostatic_regressor",
    "estimate_dispersions",
    "forward_kinematics",
    "geometric_regressor",
    "irls",
    "joint_jacobian",
    "monte_carlo_compare",
    "ols_estimate",
    "optimal_weights",
    "parameter_jacobian",
    "perturbed",
    "robust_weights",
    "simulate_measurements",
    "stack_system",
    "transform",
    "wls_estimate",
]
