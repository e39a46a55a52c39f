"""Kernel dispatch: compiled extension when importable, numpy otherwise.

The Newton pass runs about six times per logistic fit and is the largest
single cost of a low-dimensional trial. Its fused compiled loop beats
numpy's per-call overhead for small d but loses to BLAS once the O(n d^2)
Gram accumulation dominates, so dispatch is by dimension. The per-sample
Fisher forms are one BLAS product and always use numpy.
Set ``IPWDEBIAS_PURE=1`` to force the numpy path.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

# Crossover measured by benchmarks/bench_kernels.py (n=1000).
COMPILED_MAX_DIM = 10

_mode = "python" if os.environ.get("IPWDEBIAS_PURE") else "auto"


def compiled_available():
    return _ckernels is not None


def get_backend():
    return _mode


def set_backend(mode):
    """Select ``"auto"``, ``"python"`` or ``"compiled"``; returns the previous mode."""
    global _mode
    if mode not in ("auto", "python", "compiled"):
        raise ValueError(f"unknown kernel backend {mode!r}")
    if mode == "compiled" and _ckernels is None:
        raise RuntimeError("compiled kernels are not built")
    previous, _mode = _mode, mode
    return previous


def _impl(d):
    if _mode == "python" or _ckernels is None:
        return _pykernels
    if _mode == "compiled" or d <= COMPILED_MAX_DIM:
        return _ckernels
    return _pykernels


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def newton_pass(X, a, beta):
    return _impl(X.shape[1]).newton_pass(_c(X), _c(a), _c(beta))


def fisher_forms(X, jinv, V):
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    return _pykernels.fisher_forms(X, jinv, V)
