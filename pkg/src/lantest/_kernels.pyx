# cython: language_level=3
"""Compiled recursion for the built-in AR / AR-ARCH models under a local alternative."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def ar_recursion(const double[::1] eps, const double[::1] rho, double beta,
                 int b_kind, double drift_amp, double scale_amp,
                 double g0, double g1, int den_lags):
    """Run the recursion over ``eps``; returns ``(y, fail_index)``.

    fail_index is -1 on success, otherwise the first index where the
    (perturbed) scale was not strictly positive.
    """
    cdef Py_ssize_t T = eps.shape[0]
    cdef Py_ssize_t s = rho.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double m, y1, yk, den, shape, b, arg, sig, scale
    y_arr = np.zeros(T, dtype=np.float64)
    cdef double[::1] y = y_arr
    for i in range(T):
        m = 0.0
        for j in range(s):
            if i - 1 - j >= 0:
                m += rho[j] * y[i - 1 - j]
        y1 = y[i - 1] if i >= 1 else 0.0
        den = 1.0
        for k in range(den_lags):
            if i - 1 - k >= 0:
                yk = y[i - 1 - k]
                den += yk * yk
        shape = (g0 + g1 * y1) / den
        if b_kind == 0:
            b = y1 * y1 / (1.0 + y1 * y1)
        else:
            b = y1 * y1
        arg = 1.0 + beta * b
        if not arg > 0.0:
            return y_arr, i
        sig = sqrt(arg)
        scale = sig + scale_amp * shape
        if not scale > 0.0:
            return y_arr, i
        y[i] = m + drift_amp * shape + scale * eps[i]
    return y_arr, -1
