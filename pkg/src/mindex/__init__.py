"""Learning dynamics of shallow networks under giant-step SGD.

Subpackages:

- activations: Hermite-basis expansions, drift series, information exponent
- kernels: closed-form and Monte-Carlo Gaussian expectation kernels
- ode: dimension-free overlap dynamics and the finite-d full process map
- engine: one-pass SGD simulators (full and exact reduced GLM)
- experiments: phase-diagram theory, sweeps, scaling-law fits
- cli: command-line interface (simulate | ode | sweep | theory)
"""

__version__ = "0.1.0"

from .activations import (
    ActivationSpec,
    HermiteProfile,
    drift_phi,
    drift_psi,
    erf_scaled,
    hermite,
    hermite_coefficients,
    information_exponent,
    tanh_act,
)
from .engine import (
    StudentModel,
    TeacherModel,
    TrainConfig,
    Trajectory,
    init_student,
    orthonormal_teacher,
    run,
    student_from_overlaps,
)
from .experiments import (
    SweepRecord,
    SweepSpec,
    classify_region,
    fit_scaling,
    optimal_delta,
    predicted_time_exponent,
    run_sweep,
)
from .ode import (
    ODETrajectory,
    ScalingRegime,
    SufficientStats,
    escape_time,
    glm_stats,
    integrate,
    integrate_full_process,
)

__all__ = [
    "ActivationSpec",
    "HermiteProfile",
    "ODETrajectory",
    "ScalingRegime",
    "StudentModel",
    "SufficientStats",
    "SweepRecord",
    "SweepSpec",
    "TeacherModel",
    "TrainConfig",
    "Trajectory",
    "classify_region",
    "drift_phi",
    "drift_psi",
    "erf_scaled",
    "escape_time",
    "fit_scaling",
    "glm_stats",
    "hermite",
    "hermite_coefficients",
    "information_exponent",
    "init_student",
    "integrate",
    "integrate_full_process",
    "optimal_delta",
    "orthonormal_teacher",
    "predicted_time_exponent",
    "run",
    "run_sweep",
    "student_from_overlaps",
    "tanh_act",
    "__version__",
]
