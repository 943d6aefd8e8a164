"""Least squares, discretization, correction constants and the modified discrete estimator.

Parameter vectors are laid out as ``(rho_1..rho_ell, theta_1..theta_p)``
throughout.  Built-in models estimate only the mean parameters; the scale
parameter of the AR(1)-ARCH model is held at its known value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lantest import score
from lantest.errors import GradientTooSmall, SingularDesign
from lantest.tsmodel import LocalAlternative, ModelSpec, SeriesPath, residuals, simulate_null

ANALYTIC = "analytic"
ERGODIC = "ergodic"


def _series(data) -> np.ndarray:
    return np.asarray(data.y if isinstance(data, SeriesPath) else data, dtype=float)


def lse_ar(data, order: int, cond_max: float = 1e12) -> np.ndarray:
    """Least-squares AR coefficients from in-sample lags only.

    Regression rows start at the (order+1)-th observation, so no pre-sample
    values enter the fit.
    """
    y = _series(data)
    n = len(y)
    if order < 1 or n <= order:
        raise SingularDesign(f"need more than {order} observations for an AR({order}) fit")
    if order == 1:
        den = float(np.dot(y[:-1], y[:-1]))
        if den == 0.0:
            raise SingularDesign("all lagged values are zero")
        return np.array([float(np.dot(y[1:], y[:-1])) / den])
    X = np.column_stack([y[order - k - 1: n - k - 1] for k in range(order)])
    target = y[order:]
    xtx = X.T @ X
    if not np.all(np.isfinite(xtx)) or np.linalg.cond(xtx) > cond_max:
        raise SingularDesign("design matrix X'X is numerically singular")
    return np.linalg.solve(xtx, X.T @ target)


def discrete_index(estimate, n: int, c: float = 1.0) -> np.ndarray:
    step = c / math.sqrt(n)
    return np.floor(np.asarray(estimate, dtype=float) / step + 0.5).astype(np.int64)


def discretize(estimate, n: int, c: float = 1.0) -> np.ndarray:
    """Nearest point of the grid {k c / sqrt(n)}; exact half steps round up."""
    if n < 1 or c <= 0:
        raise ValueError("need n >= 1 and c > 0")
    return discrete_index(estimate, n, c) * (c / math.sqrt(n))


@dataclass
class CorrectionConstants:
    K: np.ndarray
    K_prime: np.ndarray
    J: np.ndarray
    J_prime: np.ndarray
    mode: str = ANALYTIC
    n_aux: int = 0
    stderr: dict = field(default_factory=dict)

    def combined(self, alt: LocalAlternative) -> tuple[np.ndarray, np.ndarray]:
        """(h K + h' K', h J + h' J')."""
        return (alt.h * self.K + alt.h_prime * self.K_prime,
                alt.h * self.J + alt.h_prime * self.J_prime)

    def scaled(self, factor: float) -> "CorrectionConstants":
        """Constants for the direction multiplied by ``factor`` (all are linear in G, S)."""
        return CorrectionConstants(
            self.K * factor, self.K_prime * factor, self.J * factor, self.J_prime * factor,
            self.mode, self.n_aux, {k: v * abs(factor) for k, v in self.stderr.items()})


def _batch_mean_se(x: np.ndarray, n_batches: int = 100) -> np.ndarray:
    """Standard error of column means by non-overlapping batch means."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    n = x.shape[0]
    nb = min(n_batches, n)
    size = n // nb
    if nb < 2 or size < 1:
        return np.full(x.shape[1], np.nan)
    means = x[: nb * size].reshape(nb, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(nb)


def constant_integrands(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                        noise: score.NoiseSpec, eps=None) -> dict:
    """Per-observation integrands of K, K', J, J' at the model's true parameters."""
    rho = np.asarray(model.rho, dtype=float)
    theta = np.asarray(model.theta, dtype=float)
    Z = path.z
    sig = model.scale_fn(theta, Z)
    eps = path.eps if eps is None else eps
    sv = score.scores(noise, eps)
    G = alt.G(Z) / sig
    S = alt.S(Z) / sig
    mg = model.mean_grad(rho, Z) / sig[:, None]
    sg = model.scale_grad(theta, Z) / sig[:, None]
    return {
        "K": mg * (sv.m_dot * G)[:, None],
        "K_prime": mg * (sv.n_dot * S)[:, None],
        "J": sg * (eps * sv.m_dot * G)[:, None],
        "J_prime": sg * (eps * sv.n_dot * S)[:, None],
    }


def correction_constants(model: ModelSpec, alt: LocalAlternative, noise: score.NoiseSpec,
                         mode: str = ANALYTIC, rng: np.random.Generator | None = None,
                         n_aux: int = 10**6, burnin: int = 500,
                         path: SeriesPath | None = None,
                         estimate_theta: bool = False) -> CorrectionConstants:
    """Estimate K, K', J, J' from a long auxiliary null path.

    ``ergodic`` averages the four integrands directly.  ``analytic`` uses the
    independence of eps_0 and Z_0 to factor each expectation into a noise
    moment (exact) times a Z-average (ergodic); entries whose noise factor
    vanishes for a symmetric law, and the scale entries when theta is not
    estimated, are exact zeros.
    """
    if mode not in (ANALYTIC, ERGODIC):
        raise ValueError(f"unknown constants mode {mode!r}")
    if path is None:
        path = simulate_null(model, noise, n_aux, burnin, rng, width=alt.lags)
    n_aux = path.n
    ell, p = model.ell, model.p

    if mode == ERGODIC:
        parts = constant_integrands(path, model, alt, noise)
        means = {k: v.mean(axis=0) for k, v in parts.items()}
        ses = {k: _batch_mean_se(v) for k, v in parts.items()}
        return CorrectionConstants(means["K"], means["K_prime"], means["J"], means["J_prime"],
                                   ERGODIC, n_aux, ses)

    mom = score.moments(noise)
    rho = np.asarray(model.rho, dtype=float)
    theta = np.asarray(model.theta, dtype=float)
    Z = path.z
    sig2 = model.scale_fn(theta, Z) ** 2
    G = alt.G(Z)
    S = alt.S(Z)
    mg = model.mean_grad(rho, Z)
    sg = model.scale_grad(theta, Z)

    zk = mg * (G / sig2)[:, None]
    # integration by parts: E[M_dot] = -E[M^2] = -I0 and E[eps N_dot] = K1 + 2 - I2
    K = -mom.I0 * zk.mean(axis=0)
    K_se = mom.I0 * _batch_mean_se(zk)
    K_prime = np.zeros(ell)
    J = np.zeros(p)
    J_prime = np.zeros(p)
    stderr = {"K": K_se, "K_prime": np.zeros(ell), "J": np.zeros(p), "J_prime": np.zeros(p)}
    if estimate_theta and p:
        zj = sg * (S / sig2)[:, None]
        factor = mom.K1 + 2.0 - mom.I2
        J_prime = factor * zj.mean(axis=0)
        stderr["J_prime"] = abs(factor) * _batch_mean_se(zj)
    return CorrectionConstants(K, K_prime, J, J_prime, ANALYTIC, n_aux, stderr)


def central_gradient(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                     noise: score.NoiseSpec, params) -> np.ndarray:
    """Gradient of the central sequence V with respect to (rho, theta) at ``params``."""
    rho, theta = model.split(params)
    Z = path.z
    n = path.n
    sig = model.scale_fn(theta, Z)
    eps = residuals(model, path, rho, theta)
    sv = score.scores(noise, eps)
    G = alt.G(Z)
    S = alt.S(Z)
    w_dot = (alt.h * sv.m_dot * G + alt.h_prime * sv.n_dot * S) / sig
    w = (alt.h * sv.m * G + alt.h_prime * sv.n * S) / sig
    mg = model.mean_grad(rho, Z)
    d_rho = (mg * (w_dot / sig)[:, None]).sum(axis=0)
    sg = model.scale_grad(theta, Z)
    d_theta = (sg * ((eps * w_dot + w) / sig)[:, None]).sum(axis=0)
    return np.concatenate([d_rho, d_theta]) / math.sqrt(n)


def d_n(discrete, true_params, constants: CorrectionConstants, alt: LocalAlternative,
        n: int) -> float:
    """Predicted shift of V at the discrete estimate, with its sign flipped.

    D = -[sqrt(n)(rho_hat - rho_0).(h K + h' K') + sqrt(n)(theta_hat - theta_0).(h J + h' J')]
    """
    diff = math.sqrt(n) * (np.asarray(discrete, dtype=float) - np.asarray(true_params, dtype=float))
    ell = len(constants.K)
    kk, jj = constants.combined(alt)
    return -float(diff[:ell] @ kk + diff[ell:] @ jj)


def gradient_floor(dn: float) -> float:
    return 1e-8 * max(1.0, abs(dn))


def modified_estimator(discrete, dn: float, gradient, component: int = 0) -> np.ndarray:
    """Shift one component of the discrete estimate by D / (dV/d param)."""
    out = np.array(discrete, dtype=float)
    g = float(np.asarray(gradient, dtype=float)[component])
    if not abs(g) > gradient_floor(dn):
        raise GradientTooSmall(f"|dV/d param[{component}]| = {abs(g):.3g} below floor")
    out[component] = out[component] + dn / g
    return out


@dataclass
class EstimateSet:
    lse: np.ndarray
    discrete: np.ndarray
    mde: np.ndarray
    corrected_component: int
    d_n: float
    gradient: np.ndarray
    fallback: bool = False


def fit_lse(path: SeriesPath, model: ModelSpec) -> np.ndarray:
    """LSE of the full parameter vector; theta stays at its known value."""
    rho_hat = lse_ar(path, model.mean_order)
    return np.concatenate([rho_hat, np.asarray(model.theta, dtype=float)])


def estimate_all(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                 noise: score.NoiseSpec, constants: CorrectionConstants,
                 c: float = 1.0, component: int = 0, reference=None) -> EstimateSet:
    """LSE -> discretized LSE -> modified discrete estimator.

    ``reference`` is the parameter used in D (defaults to the true one).
    A vanishing gradient leaves the discrete estimate in place and sets
    ``fallback``.
    """
    n = path.n
    lse = fit_lse(path, model)
    ell = model.ell
    disc = lse.copy()
    disc[:ell] = discretize(lse[:ell], n, c)
    grad = central_gradient(path, model, alt, noise, disc)
    ref = model.params if reference is None else np.asarray(reference, dtype=float)
    dn = d_n(disc, ref, constants, alt, n)
    try:
        mde = modified_estimator(disc, dn, grad, component)
        fallback = False
    except GradientTooSmall:
        mde = disc.copy()
        fallback = True
    return EstimateSet(lse, disc, mde, component, dn, grad, fallback)
