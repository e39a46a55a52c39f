"""Numpy implementations of the inner-loop kernels.

These are the reference semantics for ``_ckernels``; both must agree to
rounding error on every input.
"""

import numpy as np
from scipy.special import expit


def log1pexp(z):
    """Elementwise ``log(1 + exp(z))`` without overflow."""
    return np.logaddexp(0.0, z)


def newton_pass(X, a, beta):
    """Average log-likelihood, score and empirical Fisher matrix at ``beta``.

    Parameters
    ----------
    X : ndarray, shape (n, d)
    a : ndarray, shape (n,)
        Treatment indicators as floats.
    beta : ndarray, shape (d,)

    Returns
    -------
    loglik : float
    score : ndarray, shape (d,)
    fisher : ndarray, shape (d, d)
        ``n^{-1} sum_i p_i (1 - p_i) x_i x_i^T``, i.e. minus the Hessian.
    """
    n = X.shape[0]
    eta = X @ beta
    loglik = float(np.sum(a * eta - log1pexp(eta)) / n)
    p = expit(eta)
    score = X.T @ (a - p) / n
    w = p * (1.0 - p)
    fisher = (X.T * w) @ X / n
    # symmetrize against BLAS rounding in the two triangles
    fisher = 0.5 * (fisher + fisher.T)
    return loglik, score, fisher


def fisher_forms(X, jinv, V):
    """Per-sample quadratic and bilinear forms under ``jinv``.

    Returns ``q[i] = x_i^T jinv x_i`` and ``U[i, k] = V[:, k]^T jinv x_i``.
    """
    W = X @ jinv
    q = np.einsum("ij,ij->i", W, X)
    U = W @ V
    return q, U
