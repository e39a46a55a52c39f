"""Point estimators of the average treatment effect.

All fitted-propensity estimators share one logistic fit and one Fisher
inverse computed on the full sample; nothing is sample-split.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset
from .exceptions import DegenerateArmError, DegeneratePropensityError, InvalidArgumentError
from .logistic import LogisticFit, empirical_fisher, fisher_inverse, fit_mle, link

HAJEK_DENOM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProjectionEstimates:
    theta1_hat: np.ndarray
    theta0_hat: np.ndarray


@dataclass(frozen=True)
class BiasEstimates:
    b1_hat: float
    b0_hat: float


@dataclass(frozen=True, eq=False)
class DebiasArtifacts:
    fit: LogisticFit
    fisher_inv: np.ndarray
    projections: ProjectionEstimates
    biases: BiasEstimates
    tau_ipw: float
    tau_debias: float
    propensities: np.ndarray


def fitted_propensities(data: Dataset, fit: LogisticFit) -> np.ndarray:
    if not fit.converged:
        raise InvalidArgumentError("estimators require a converged logistic fit")
    beta = np.asarray(fit.beta_hat, dtype=np.float64)
    if beta.shape != (data.d,):
        raise InvalidArgumentError(f"fit has dimension {beta.shape}, data has d={data.d}")
    p = np.atleast_1d(link(data.covariates @ beta))
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DegeneratePropensityError("a fitted propensity is numerically 0 or 1")
    return p


def _ipw_summands(a, y, p):
    return a * y / p - (1.0 - a) * y / (1.0 - p)


def oracle_ipw(data: Dataset, true_props) -> float:
    """IPW with known propensities; unbiased for the ATE."""
    p = np.asarray(true_props, dtype=np.float64)
    if p.shape != (data.n,):
        raise InvalidArgumentError(f"true_props must have length {data.n}")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise InvalidArgumentError("true propensities must lie strictly inside (0, 1)")
    return float(np.mean(_ipw_summands(data.treatments, data.outcomes, p)))


def ipw(data: Dataset, fit: LogisticFit) -> float:
    p = fitted_propensities(data, fit)
    return float(np.mean(_ipw_summands(data.treatments, data.outcomes, p)))


def _projections(X, a, y, p) -> ProjectionEstimates:
    n = X.shape[0]
    theta1 = X.T @ (a * y * (1.0 - p) / p) / n
    theta0 = X.T @ ((1.0 - a) * y * p / (1.0 - p)) / n
    return ProjectionEstimates(theta1, theta0)


def _biases(X, a, y, p, jinv, proj: ProjectionEstimates) -> BiasEstimates:
    n = X.shape[0]
    V = np.column_stack([proj.theta1_hat, proj.theta0_hat])
    q, U = _kernels.fisher_forms(X, jinv, V)
    tilt = (2.0 * p - 1.0) * q
    b1 = np.sum((a * y / p - p * U[:, 0]) * (1.0 - p) * tilt) / (2 * n)
    b0 = np.sum(((1.0 - a) * y / (1.0 - p) + (1.0 - p) * U[:, 1]) * p * tilt) / (2 * n)
    return BiasEstimates(float(b1), float(b0))


def estimate_projections(data: Dataset, fit: LogisticFit) -> ProjectionEstimates:
    """Plug-in estimates of the Fisher-norm projection vectors for each arm."""
    p = fitted_propensities(data, fit)
    return _projections(data.covariates, data.treatments, data.outcomes, p)


def estimate_biases(data: Dataset, fit: LogisticFit, fisher_inv, proj: ProjectionEstimates) -> BiasEstimates:
    """Plug-in estimates of the two second-order bias constants.

    Each sample contributes its squared Fisher norm ``x_i^T J^{-1} x_i``
    weighted by ``(2 p_i - 1)``, so both vanish when every fitted
    propensity equals 1/2.
    """
    p = fitted_propensities(data, fit)
    jinv = np.asarray(fisher_inv, dtype=np.float64)
    if jinv.shape != (data.d, data.d):
        raise InvalidArgumentError(f"fisher_inv must be {data.d}x{data.d}")
    return _biases(data.covariates, data.treatments, data.outcomes, p, jinv, proj)


def debiased_ipw(data: Dataset, fit: LogisticFit | None = None) -> DebiasArtifacts:
    """Fit the propensity model, form IPW, then subtract the bias estimate ``(B1 - B0) / n``."""
    if fit is None:
        if data.n < data.d + 1:
            warnings.warn(f"n={data.n} < d+1={data.d + 1}; the logistic MLE is unlikely to exist", stacklevel=2)
        fit = fit_mle(data)
    p = fitted_propensities(data, fit)
    jinv = fisher_inverse(empirical_fisher(data, fit))
    X, a, y = data.covariates, data.treatments, data.outcomes
    proj = _projections(X, a, y, p)
    biases = _biases(X, a, y, p, jinv, proj)
    tau_ipw = float(np.mean(_ipw_summands(a, y, p)))
    tau_de = tau_ipw - (biases.b1_hat - biases.b0_hat) / data.n
    p.flags.writeable = False
    return DebiasArtifacts(fit, jinv, proj, biases, tau_ipw, tau_de, p)


def _arm_sums(a, y, p):
    w1 = a / p
    w0 = (1.0 - a) / (1.0 - p)
    return float(w1 @ y), float(w1.sum()), float(w0 @ y), float(w0.sum())


def _check_arms(data: Dataset):
    n1 = int(data.treatments.sum())
    if n1 == 0 or n1 == data.n:
        raise DegenerateArmError("Hajek estimators need at least one treated and one control sample")


def hajek(data: Dataset, fit: LogisticFit) -> float:
    """IPW with the weights normalized to sum to one within each arm."""
    _check_arms(data)
    p = fitted_propensities(data, fit)
    s1, w1, s0, w0 = _arm_sums(data.treatments, data.outcomes, p)
    return s1 / w1 - s0 / w0


def debiased_hajek(data: Dataset, artifacts: DebiasArtifacts | None = None) -> float:
    """Hajek ratio with the bias corrections subtracted from each numerator and denominator.

    Denominator corrections reuse the bias-correction formulas with every outcome
    replaced by 1.
    """
    _check_arms(data)
    if artifacts is None:
        artifacts = debiased_ipw(data)
    X, a, y = data.covariates, data.treatments, data.outcomes
    p = artifacts.propensities
    ones = np.ones(data.n)
    biases_one = _biases(X, a, ones, p, artifacts.fisher_inv, _projections(X, a, ones, p))
    s1, w1, s0, w0 = _arm_sums(a, y, p)
    den1 = w1 - biases_one.b1_hat
    den0 = w0 - biases_one.b0_hat
    if abs(den1) <= HAJEK_DENOM_TOL or abs(den0) <= HAJEK_DENOM_TOL:
        raise DegenerateArmError("corrected Hajek denominator vanishes")
    return (s1 - artifacts.biases.b1_hat) / den1 - (s0 - artifacts.biases.b0_hat) / den0
