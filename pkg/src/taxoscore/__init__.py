"""Scoring severity forecasts of cyber-loss classifications.

Peaks-over-threshold severity models with covariate-dependent generalized
Pareto parameters, weighted and residual proper scoring rules, forecast
comparison tests, and a rolling-window harness that ties them together.
"""

from .classifications import SCHEMES, ClassificationAssignment, build_scheme
from .data_model import Dataset, SynthConfig, load_events, synth_generate
from .evt_gpd import (FitError, GpdParams, NoValidThresholdError, ThresholdResult, gpd_cdf, gpd_fit_mle,
                      gpd_quantile, gpd_sample, select_threshold)
from .gamlss import CovariateSpec, FittedSeverityModel, build_design, fit, predict_params
from .harness import PipelineConfig, compare_schemes, power_study, run_pipeline
from .inference import AlignmentError, TestResult, forecast_comparison_test, frequency_chi2
from .scoring import (RefDist, ScoreKind, ScoreSeries, WeightKind, crps, energy_score, r_crps, r_es,
                      tw_crps)

__version__ = "0.1.0"

__all__ = [
    "SCHEMES", "AlignmentError", "ClassificationAssignment", "CovariateSpec", "Dataset", "FitError",
    "FittedSeverityModel", "GpdParams", "NoValidThresholdError", "PipelineConfig", "RefDist", "ScoreKind",
    "ScoreSeries", "SynthConfig", "TestResult", "ThresholdResult", "WeightKind", "build_design", "build_scheme",
    "compare_schemes", "crps", "energy_score", "fit", "forecast_comparison_test", "frequency_chi2",
    "gpd_cdf", "gpd_fit_mle", "gpd_quantile", "gpd_sample", "load_events", "power_study", "predict_params",
    "r_crps", "r_es", "run_pipeline", "select_threshold", "synth_generate", "tw_crps",
]
