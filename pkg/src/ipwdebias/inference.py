"""Variance estimates, 95% intervals and t-statistics for each estimator."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .estimators import (
    DebiasArtifacts,
    _arm_sums,
    _ipw_summands,
    _projections,
    debiased_hajek,
    debiased_ipw,
    fitted_propensities,
    hajek,
    oracle_ipw,
)
from .exceptions import ESTIMATION_ERRORS, InvalidArgumentError
from .logistic import LogisticFit, fit_mle

Z_95 = 1.96


class Method(enum.Enum):
    ORACLE = "Oracle"
    IPW = "IPW"
    DEBIASED_IPW = "DebiasedIPW"
    HAJEK = "Hajek"
    DEBIASED_HAJEK = "DebiasedHajek"

    @property
    def token(self) -> str:
        return _TOKENS[self]

    @classmethod
    def parse(cls, name: str) -> Method:
        key = name.strip().lower()
        for m in cls:
            if key in (m.value.lower(), m.token):
                return m
        raise InvalidArgumentError(f"unknown method {name!r}; expected one of {', '.join(m.token for m in cls)}")

    @property
    def uses_fit(self) -> bool:
        return self is not Method.ORACLE


_TOKENS = {
    Method.ORACLE: "oracle",
    Method.IPW: "ipw",
    Method.DEBIASED_IPW: "debias",
    Method.HAJEK: "hajek",
    Method.DEBIASED_HAJEK: "hajek-debias",
}


@dataclass(frozen=True)
class EstimateReport:
    method: Method
    tau_hat: float
    variance_hat: float
    std_err: float
    ci_low: float
    ci_high: float
    n: int
    d: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        return out


def _influence_variance(X, a, y, p, jinv, theta_sum, center) -> float:
    u = X @ (jinv @ theta_sum)
    r = _ipw_summands(a, y, p) - center - (a - p) * u
    return float(np.mean(r * r))


def variance_ipw_family(data: Dataset, art: DebiasArtifacts, tau_center: float) -> float:
    """Plug-in asymptotic variance centered at the method's own estimate.

    Mean of squared per-sample influence values: the IPW summand minus the
    center, minus its projection ``(a_i - p_i) (theta1 + theta0)^T J^{-1} x_i``
    onto the logistic score.
    """
    theta_sum = art.projections.theta1_hat + art.projections.theta0_hat
    return _influence_variance(
        data.covariates, data.treatments, data.outcomes, art.propensities, art.fisher_inv, theta_sum, tau_center
    )


def variance_hajek_family(data: Dataset, art: DebiasArtifacts) -> float:
    """The same plug-in with outcomes centered at their Hajek arm means.

    After centering, the weighted arm sums are exactly zero, so the center
    is zero.
    """
    X, a, y, p = data.covariates, data.treatments, data.outcomes, art.propensities
    s1, w1, s0, w0 = _arm_sums(a, y, p)
    yc = y - np.where(a == 1.0, s1 / w1, s0 / w0)
    proj = _projections(X, a, yc, p)
    return _influence_variance(X, a, yc, p, art.fisher_inv, proj.theta1_hat + proj.theta0_hat, 0.0)


def variance_oracle(data: Dataset, propensities, tau_true_hat: float) -> float:
    """Mean squared deviation of the IPW summands from the oracle estimate.

    ``propensities`` is either a :class:`LogisticFit` (the summands are then
    evaluated at the fitted propensities, as in the simulation protocol) or
    an explicit length-n vector.
    """
    if isinstance(propensities, LogisticFit):
        p = fitted_propensities(data, propensities)
    else:
        p = np.asarray(propensities, dtype=np.float64)
        if p.shape != (data.n,):
            raise InvalidArgumentError(f"propensities must have length {data.n}")
    r = _ipw_summands(data.treatments, data.outcomes, p) - tau_true_hat
    return float(np.mean(r * r))


def confidence_interval(tau_hat: float, variance_hat: float, n: int) -> tuple[float, float]:
    """95% normal interval ``tau_hat +/- 1.96 sqrt(variance_hat / n)``."""
    if variance_hat < 0:
        raise InvalidArgumentError("variance must be non-negative")
    if n < 1:
        raise InvalidArgumentError("n must be positive")
    half = Z_95 * math.sqrt(variance_hat / n)
    return tau_hat - half, tau_hat + half


def t_statistic(tau_hat: float, tau_star: float, sigma_hat: float) -> float:
    if sigma_hat == 0:
        raise ZeroDivisionError("t-statistic with zero standard error")
    if sigma_hat < 0:
        raise InvalidArgumentError("sigma_hat must be positive")
    return (tau_hat - tau_star) / sigma_hat


def make_report(method: Method, tau_hat: float, variance_hat: float, n: int, d: int) -> EstimateReport:
    low, high = confidence_interval(tau_hat, variance_hat, n)
    return EstimateReport(method, float(tau_hat), float(variance_hat), math.sqrt(variance_hat / n), low, high, n, d)


def evaluate_methods(data: Dataset, methods, true_props=None) -> dict:
    """Run every requested method on one dataset, sharing a single fit.

    Returns a dict mapping each :class:`Method` to its :class:`EstimateReport`,
    or to the estimation exception it raised. The oracle needs
    ``true_props``; its variance uses the fitted propensities when the fit
    succeeds and the true ones otherwise.
    """
    methods = [Method.parse(m) if isinstance(m, str) else m for m in methods]
    if Method.ORACLE in methods and true_props is None:
        raise InvalidArgumentError("the oracle method requires the true propensities")
    n, d = data.n, data.d
    results = {}

    fit = art = None
    fit_error = None
    try:
        fit = fit_mle(data)
        if any(m.uses_fit for m in methods):
            art = debiased_ipw(data, fit)
    except ESTIMATION_ERRORS as exc:
        fit_error = exc

    for m in methods:
        if m is Method.ORACLE:
            tau = oracle_ipw(data, true_props)
            try:
                plug = fitted_propensities(data, fit) if fit is not None else true_props
            except ESTIMATION_ERRORS:
                plug = true_props
            results[m] = make_report(m, tau, variance_oracle(data, plug, tau), n, d)
            continue
        if fit_error is not None:
            results[m] = fit_error
            continue
        try:
            if m is Method.IPW:
                tau = art.tau_ipw
                var = variance_ipw_family(data, art, tau)
            elif m is Method.DEBIASED_IPW:
                tau = art.tau_debias
                var = variance_ipw_family(data, art, tau)
            elif m is Method.HAJEK:
                tau = hajek(data, art.fit)
                var = variance_hajek_family(data, art)
            else:
                tau = debiased_hajek(data, art)
                var = variance_hajek_family(data, art)
            results[m] = make_report(m, tau, var, n, d)
        except ESTIMATION_ERRORS as exc:
            results[m] = exc
    return results
