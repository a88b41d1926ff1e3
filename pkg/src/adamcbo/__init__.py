"""Consensus-based global optimization (CBO) and its Adam-style variant.

Estimators follow the scikit-learn conventions: hyper-parameters go to the
constructor, ``minimize``/``fit`` learn, fitted state ends in ``_``.
"""

from .adam_cbo import AdamCBO, AdamCboParams, run_adam_cbo
from .benchmark import (
    RastriginSpec,
    TrialConfig,
    count_local_minima,
    rastrigin_eval,
    rastrigin_objective,
    reference_adam_params,
    reference_cbo_params,
    run_success_trials,
    scaling_probe,
)
from .cbo import CBO, CboParams, RunResult, run_cbo
from .core import Objective, consensus_point
from .exceptions import ConfigError, NumericError, UsageError
from .neural import MlpSpec, PdeSpec, forward, load_model, save_model
from .schedules import NoiseProcess, Phase, PhasePlan, SigmaSchedule
from .stability import StabilityParams, closed_form_eigenvalues, simulate_linearized
from .training import AdamCBORegressor, DeepRitzSolver

__version__ = "0.1.0"

__all__ = [
    "AdamCBO",
    "AdamCBORegressor",
    "AdamCboParams",
    "CBO",
    "CboParams",
    "ConfigError",
    "DeepRitzSolver",
    "MlpSpec",
    "NoiseProcess",
    "NumericError",
    "Objective",
    "PdeSpec",
    "Phase",
    "PhasePlan",
    "RastriginSpec",
    "RunResult",
    "SigmaSchedule",
    "StabilityParams",
    "TrialConfig",
    "UsageError",
    "closed_form_eigenvalues",
    "consensus_point",
    "count_local_minima",
    "forward",
    "load_model",
    "rastrigin_eval",
    "rastrigin_objective",
    "reference_adam_params",
    "reference_cbo_params",
    "run_adam_cbo",
    "run_cbo",
    "run_success_trials",
    "save_model",
    "scaling_probe",
    "simulate_linearized",
    "__version__",
]
