"""IPW estimation of average treatment effects with a logistic propensity model.

Plug-in IPW, its second-order bias correction, Hajek variants, plug-in
variance estimates, a Monte Carlo oracle for population quantities, and a
simulation harness.
"""

from .data import Dataset, ScenarioKind, ScenarioSpec, SeedSpec, generate_dataset, true_propensity, true_tau
from .estimators import debiased_hajek, debiased_ipw, hajek, ipw, oracle_ipw
from .harness import ExperimentConfig, dimension_grid, run_experiment
from .inference import EstimateReport, Method, evaluate_methods
from .logistic import LogisticFit, fit_mle
from .oracle import mc_population

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EstimateReport",
    "ExperimentConfig",
    "LogisticFit",
    "Method",
    "ScenarioKind",
    "ScenarioSpec",
    "SeedSpec",
    "debiased_hajek",
    "debiased_ipw",
    "dimension_grid",
    "evaluate_methods",
    "fit_mle",
    "generate_dataset",
    "hajek",
    "ipw",
    "mc_population",
    "oracle_ipw",
    "run_experiment",
    "true_propensity",
    "true_tau",
]
