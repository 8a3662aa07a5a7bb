"""Population-average hazard ratio estimation for right-censored data.

Estimators: the standard treatment partial-score fit, an instrumented fit
that is robust to unmeasured confounding, inverse-probability-weighted fits
for measured confounders, a binary-instrument reweighting competitor with
bootstrap errors, and a pooled multi-instrument fit. A seeded Monte Carlo
harness generates endogenous survival data with a known population hazard
ratio and aggregates bias, spread, coverage, and failure rates.
"""

from .cox import (
    ScoreKernel,
    SurvivalCurve,
    breslow_baseline,
    fit_adjusted_covariate,
    fit_cox,
    kaplan_meier,
    number_at_risk,
    score_derivative,
    score_value,
)
from .dataset import RiskSetIndex, SurvivalDataset, build_risk_index, load_csv
from .errors import (
    BootstrapUnreliableError,
    ConfigurationError,
    ConvergenceError,
    HazardIVError,
    IdentificationError,
    IdentificationWarning,
    MultipleRootsWarning,
    NoSolutionError,
    SeparationWarning,
    UndefinedScoreError,
    UnsupportedError,
    ValidationError,
    WeakInstrumentError,
    WeakInstrumentWarning,
)
from .iv import first_stage_f, fit_iv, fit_pooled_iv, sandwich_variance
from .results import FitResult
from .simulation import (
    EstimatorSummary,
    ReplicateTruth,
    SimConfig,
    SimSummary,
    gamma4_cdf,
    generate_replicate,
    run_study,
    summary_rows,
    sweep,
)
from .weighting import (
    PropensityModel,
    WeightVector,
    bootstrap_se,
    dichotomize,
    fit_propensity,
    fit_wang,
    ipw_weights,
)

__version__ = "0.1.0"

__all__ = [
    "SurvivalDataset", "RiskSetIndex", "load_csv", "build_risk_index",
    "ScoreKernel", "SurvivalCurve", "score_value", "score_derivative",
    "fit_cox", "fit_adjusted_covariate", "breslow_baseline", "kaplan_meier",
    "number_at_risk", "FitResult", "fit_iv", "sandwich_variance",
    "fit_pooled_iv", "first_stage_f", "WeightVector", "PropensityModel",
    "fit_propensity", "ipw_weights", "fit_wang", "bootstrap_se", "dichotomize",
    "SimConfig", "SimSummary", "EstimatorSummary", "ReplicateTruth",
    "gamma4_cdf", "generate_replicate", "run_study", "sweep", "summary_rows",
    "HazardIVError", "ConfigurationError", "ValidationError",
    "IdentificationError", "UndefinedScoreError", "NoSolutionError",
    "ConvergenceError", "WeakInstrumentError", "UnsupportedError",
    "BootstrapUnreliableError", "IdentificationWarning",
    "WeakInstrumentWarning", "SeparationWarning", "MultipleRootsWarning",
    "__version__",
]
