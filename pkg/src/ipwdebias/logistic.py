"""Maximum-likelihood logistic regression and its Fisher information.

The model has no separate intercept: the propensity is ``expit(<x, beta>)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from . import _kernels
from .data import Dataset
from .exceptions import (
    InvalidArgumentError,
    NonConvergenceError,
    NumericalOverflowError,
    SingularFisherError,
)

SCORE_TOL = 1e-10
MAX_ITER = 100
MAX_BETA_NORM = 1e3
MAX_HALVINGS = 40
# lambda_min(J) below this fraction of mean ||x||^2 is treated as separation.
SINGULAR_RATIO = 1e-8
# Cholesky pivots spanning more than this range mean "not numerically PD".
_PIVOT_RATIO = 1e-14


@dataclass(frozen=True, eq=False)
class LogisticFit:
    beta_hat: np.ndarray
    iterations: int
    final_score_norm: float
    converged: bool
    log_likelihood: float = float("nan")
    history: tuple = ()


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    matrix: np.ndarray
    evaluated_at: np.ndarray


def link(z):
    """The logistic link ``1 / (1 + exp(-z))``."""
    out = expit(z)
    return float(out) if np.ndim(out) == 0 else out


def _beta(data: Dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (data.d,):
        raise InvalidArgumentError(f"beta must have length {data.d}, got shape {beta.shape}")
    return beta


def log_likelihood(data: Dataset, beta) -> float:
    """Average Bernoulli log-likelihood ``n^{-1} sum a log p + (1 - a) log(1 - p)``."""
    ll, _, _ = _kernels.newton_pass(data.covariates, data.treatments, _beta(data, beta))
    if not np.isfinite(ll):
        raise NumericalOverflowError("log-likelihood is not finite")
    return ll


def score(data: Dataset, beta) -> np.ndarray:
    """Gradient of :func:`log_likelihood`: ``n^{-1} sum x_i (a_i - p_i)``."""
    beta = _beta(data, beta)
    p = expit(data.covariates @ beta)
    return data.covariates.T @ (data.treatments - p) / data.n


def hessian(data: Dataset, beta) -> np.ndarray:
    """Hessian of :func:`log_likelihood`; equal to minus the empirical Fisher matrix at ``beta``."""
    _, _, fisher = _kernels.newton_pass(data.covariates, data.treatments, _beta(data, beta))
    return -fisher


def fit_mle(data: Dataset, tol: float = SCORE_TOL, max_iter: int = MAX_ITER) -> LogisticFit:
    """Damped Newton ascent from ``beta = 0``.

    Stops once ``||score|| <= tol * (1 + ||beta||)``. Each step is halved
    until the log-likelihood does not decrease.

    Raises
    ------
    NonConvergenceError
        On separation (``||beta|| > 1e3`` or a numerically singular Hessian),
        a failed line search, or after ``max_iter`` iterations.
    """
    X, a = data.covariates, data.treatments
    beta = np.zeros(data.d)
    ll, g, J = _kernels.newton_pass(X, a, beta)
    scale = float(np.einsum("ij,ij->", X, X)) / data.n
    history = [ll]

    for it in range(max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol * (1.0 + float(np.linalg.norm(beta))):
            return LogisticFit(beta, it, gnorm, True, ll, tuple(history))
        if it == max_iter:
            break
        if np.linalg.eigvalsh(J)[0] <= SINGULAR_RATIO * scale:
            raise NonConvergenceError("Hessian numerically singular; data likely separated", it)
        try:
            step = linalg.cho_solve(linalg.cho_factor(J), g)
        except linalg.LinAlgError:
            raise NonConvergenceError("Hessian not positive definite", it) from None

        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            ll_c, g_c, J_c = _kernels.newton_pass(X, a, cand)
            if np.isfinite(ll_c) and ll_c >= ll - 1e-14 * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            raise NonConvergenceError("step halving failed to increase the likelihood", it)

        beta, ll, g, J = cand, ll_c, g_c, J_c
        history.append(ll)
        if np.linalg.norm(beta) > MAX_BETA_NORM:
            raise NonConvergenceError("coefficient norm exceeded 1e3; data separated", it + 1)

    raise NonConvergenceError(f"no convergence within {max_iter} iterations", max_iter)


def empirical_fisher(data: Dataset, fit: LogisticFit) -> FisherMatrix:
    """``n^{-1} sum p_i (1 - p_i) x_i x_i^T`` at the fitted coefficient."""
    if not fit.converged:
        raise InvalidArgumentError("empirical_fisher requires a converged fit")
    beta = _beta(data, fit.beta_hat)
    _, _, J = _kernels.newton_pass(data.covariates, data.treatments, beta)
    return FisherMatrix(J, beta.copy())


def fisher_inverse(fisher: FisherMatrix | np.ndarray) -> np.ndarray:
    """Inverse of a Fisher matrix through its Cholesky factor.

    Raises :class:`SingularFisherError` if the matrix is not numerically
    positive definite; there is no pseudo-inverse fallback.
    """
    J = fisher.matrix if isinstance(fisher, FisherMatrix) else np.asarray(fisher, dtype=np.float64)
    try:
        c, lower = linalg.cho_factor(J)
    except linalg.LinAlgError:
        raise SingularFisherError("Fisher matrix is not positive definite") from None
    pivots = np.abs(np.diag(c))
    if pivots.min() ** 2 <= _PIVOT_RATIO * pivots.max() ** 2:
        raise SingularFisherError("Fisher matrix is numerically singular")
    inv = linalg.cho_solve((c, lower), np.eye(J.shape[0]))
    return 0.5 * (inv + inv.T)
