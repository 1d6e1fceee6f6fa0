"""Coadapted Brownian couplings on radially isoparametric model spaces.

Radial curvature data, the drift window for the inter-particle distance,
coupling controls that realize prescribed distance laws, a reduced distance
SDE simulator and a brute-force space-form oracle.
"""

from .control import (
    CouplingControl,
    CouplingMatrices,
    assemble_J,
    check_deterministic_conditions,
    complete_K,
    coupling_matrices,
    drift_of,
    radial_qv,
    reflection_control,
    spectral_trace_bound_check,
    synchronous_control,
)
from .estimators import AsymptoticSpeedEstimator, BinnedDriftEstimator
from .exceptions import (
    BlowUpError,
    ConfigError,
    CutLocusError,
    DegenerateControlError,
    DimensionMismatchError,
    DomainError,
    InfeasibleTargetError,
    NoLimitError,
    NotContractionError,
    PathTooShortError,
    RadCoupleError,
    WindowViolationError,
)
from .geometry import (
    CurvatureSpectrum,
    ModelManifold,
    PerturbedHyperbolic,
    RankOneSymmetric,
    RotSym,
    SpaceForm,
    comparison_certificate,
    principal_curvatures,
    radial_sectional_from_kappa,
    riccati_flow,
    s_K,
    s_K_log_derivative,
)
from .oracle import OracleReport, SpaceFormEmbedding, run_oracle, spaceform_two_point_drift, step_coupled
from .sde import (
    ControlSchedule,
    DistancePath,
    diffusion_coefficient,
    estimate_asymptotic_speed,
    integrate_deterministic,
    radial_process,
    simulate_distance,
)
from .window import (
    DriftWindow,
    asymptotic_interval,
    fixed_distance_feasible,
    pp_window,
    synthesize_controls,
    window,
    window_inclusion_report,
)

__all__ = [
    "assemble_J",
    "asymptotic_interval",
    "AsymptoticSpeedEstimator",
    "BinnedDriftEstimator",
    "BlowUpError",
    "check_deterministic_conditions",
    "comparison_certificate",
    "complete_K",
    "ConfigError",
    "ControlSchedule",
    "coupling_matrices",
    "CouplingControl",
    "CouplingMatrices",
    "CurvatureSpectrum",
    "CutLocusError",
    "DegenerateControlError",
    "diffusion_coefficient",
    "DimensionMismatchError",
    "DistancePath",
    "DomainError",
    "drift_of",
    "DriftWindow",
    "estimate_asymptotic_speed",
    "fixed_distance_feasible",
    "InfeasibleTargetError",
    "integrate_deterministic",
    "ModelManifold",
    "NoLimitError",
    "NotContractionError",
    "OracleReport",
    "PathTooShortError",
    "PerturbedHyperbolic",
    "pp_window",
    "principal_curvatures",
    "RadCoupleError",
    "radial_process",
    "radial_qv",
    "radial_sectional_from_kappa",
    "RankOneSymmetric",
    "reflection_control",
    "riccati_flow",
    "RotSym",
    "run_oracle",
    "s_K",
    "s_K_log_derivative",
    "simulate_distance",
    "SpaceForm",
    "spaceform_two_point_drift",
    "SpaceFormEmbedding",
    "spectral_trace_bound_check",
    "step_coupled",
    "synchronous_control",
    "synthesize_controls",
    "window",
    "window_inclusion_report",
    "WindowViolationError",
]

__version__ = "0.1.0"
