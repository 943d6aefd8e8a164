"""Pure-Python twin of ``_kernels.pyx``.

Operation order matches the compiled version exactly, so both backends
produce bit-identical paths.
"""
import math

import numpy as np


def ar_recursion(eps, rho, beta, b_kind, drift_amp, scale_amp, g0, g1, den_lags):
    eps = [float(e) for e in eps]
    rho = [float(r) for r in rho]
    beta = float(beta)
    drift_amp = float(drift_amp)
    scale_amp = float(scale_amp)
    g0 = float(g0)
    g1 = float(g1)
    T = len(eps)
    s = len(rho)
    y = [0.0] * T
    sqrt = math.sqrt
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
            return np.array(y), i
        scale = sqrt(arg) + scale_amp * shape
        if not scale > 0.0:
            return np.array(y), i
        y[i] = m + drift_amp * shape + scale * eps[i]
    return np.array(y), -1
