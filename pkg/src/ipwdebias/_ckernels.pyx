# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Newton-step kernel for the logistic MLE.

Single sweep over the rows of the design matrix, no temporaries of size n.
Semantics mirror ``ipwdebias._pykernels`` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline double _log1pexp_expit(double z, double* p) noexcept nogil:
    # one exp serves both log(1 + e^z) and expit(z)
    cdef double e = exp(-z if z >= 0.0 else z)
    if z >= 0.0:
        p[0] = 1.0 / (1.0 + e)
        return z + log1p(e)
    p[0] = e / (1.0 + e)
    return log1p(e)


def newton_pass(const double[:, ::1] X, const double[::1] a, const double[::1] beta):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double eta, p, r, w, wx, ll = 0.0
    score_arr = np.zeros(d, dtype=np.float64)
    fisher_arr = np.zeros((d, d), dtype=np.float64)
    cdef double[::1] score = score_arr
    cdef double[:, ::1] fisher = fisher_arr

    with nogil:
        for i in range(n):
            eta = 0.0
            for j in range(d):
                eta = eta + X[i, j] * beta[j]
            ll = ll + a[i] * eta - _log1pexp_expit(eta, &p)
            r = a[i] - p
            w = p * (1.0 - p)
            for j in range(d):
                score[j] = score[j] + r * X[i, j]
                wx = w * X[i, j]
                for k in range(j, d):
                    fisher[j, k] = fisher[j, k] + wx * X[i, k]
        for j in range(d):
            score[j] = score[j] / n
            for k in range(j, d):
                fisher[j, k] = fisher[j, k] / n
                fisher[k, j] = fisher[j, k]
    return ll / n, score_arr, fisher_arr
