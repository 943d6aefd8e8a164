"""Parametric mean/scale time-series models, local alternatives and simulation.

A model is ``Y_i = m(rho, Z_i) + sigma(theta, Z_i) eps_i`` with the lag state
``Z_i = (Y_{i-1}, ..., Y_{i-s})``.  The local alternative adds
``h n^{-1/2} G(Z_i)`` to the mean and ``h' n^{-1/2} S(Z_i)`` to the scale.

Model and alternative callables are vectorized over the rows of a lag
matrix ``Z`` of shape ``(n, width)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from lantest import score
from lantest._backend import BACKEND, ar_recursion
from lantest.errors import ConfigError, NonstationaryModel, ScaleNotPositive

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

B_BOUNDED = "bounded"
B_SQUARE = "square"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    mean_order: int
    rho: tuple
    theta: tuple
    mean_fn: ArrayFn
    scale_fn: ArrayFn
    mean_grad: ArrayFn
    scale_grad: ArrayFn
    mean_hess: ArrayFn | None = None
    scale_hess: ArrayFn | None = None
    kind: str = "custom"  # "ar", "ar1-arch" or "custom"
    exo_order: int = 0
    arch_b: str = B_BOUNDED

    @property
    def ell(self) -> int:
        return len(self.rho)

    @property
    def p(self) -> int:
        return len(self.theta)

    @property
    def params(self) -> np.ndarray:
        return np.array(self.rho + self.theta, dtype=float)

    def split(self, params) -> tuple[np.ndarray, np.ndarray]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.ell + self.p,):
            raise ValueError(f"expected {self.ell + self.p} parameters, got {params.shape}")
        return params[: self.ell], params[self.ell:]

    @property
    def beta(self) -> float:
        return self.theta[0] if self.kind == "ar1-arch" else 0.0

    def validate(self) -> None:
        if self.kind == "ar":
            if sum(abs(r) for r in self.rho) >= 1:
                raise NonstationaryModel(
                    f"AR coefficients {self.rho} violate sum |rho_j| < 1")
        elif self.kind == "ar1-arch":
            (r,) = self.rho
            (beta,) = self.theta
            if abs(r) >= 1:
                raise NonstationaryModel(f"AR(1)-ARCH needs |rho| < 1, got {r}")
            if self.arch_b == B_BOUNDED and beta <= -1:
                raise NonstationaryModel("bounded ARCH term needs beta > -1")
            if self.arch_b == B_SQUARE and not (0 <= beta and r * r + beta < 1):
                raise NonstationaryModel("squared ARCH term needs beta >= 0 and rho^2 + beta < 1")

    def with_params(self, rho=None, theta=None) -> "ModelSpec":
        return replace(self,
                       rho=self.rho if rho is None else tuple(float(v) for v in rho),
                       theta=self.theta if theta is None else tuple(float(v) for v in theta))


def ar_model(rho) -> ModelSpec:
    """AR(m) with unit scale; m = len(rho)."""
    rho = tuple(float(r) for r in np.atleast_1d(rho))
    s = len(rho)

    def mean_fn(r, Z):
        return Z[:, :s] @ np.asarray(r, dtype=float)

    def scale_fn(t, Z):
        return np.ones(Z.shape[0])

    def mean_grad(r, Z):
        return Z[:, :s].copy()

    def scale_grad(t, Z):
        return np.zeros((Z.shape[0], 0))

    def mean_hess(r, Z):
        return np.zeros((Z.shape[0], s, s))

    def scale_hess(t, Z):
        return np.zeros((Z.shape[0], 0, 0))

    return ModelSpec(f"ar{s}", s, rho, (), mean_fn, scale_fn, mean_grad, scale_grad,
                     mean_hess, scale_hess, kind="ar")


def _arch_b(kind: str):
    if kind == B_BOUNDED:
        return lambda z1: z1 * z1 / (1.0 + z1 * z1)
    if kind == B_SQUARE:
        return lambda z1: z1 * z1
    raise ConfigError(f"unknown ARCH term {kind!r}")


def ar1_arch_model(rho: float, beta: float, arch_b: str = B_BOUNDED) -> ModelSpec:
    """AR(1) mean with scale sqrt(1 + beta B(Y_{i-1}))."""
    B = _arch_b(arch_b)

    def mean_fn(r, Z):
        return r[0] * Z[:, 0]

    def scale_fn(t, Z):
        return np.sqrt(1.0 + t[0] * B(Z[:, 0]))

    def mean_grad(r, Z):
        return Z[:, :1].copy()

    def scale_grad(t, Z):
        b = B(Z[:, 0])
        return (b / (2.0 * np.sqrt(1.0 + t[0] * b)))[:, None]

    def mean_hess(r, Z):
        return np.zeros((Z.shape[0], 1, 1))

    def scale_hess(t, Z):
        b = B(Z[:, 0])
        return (-b * b / (4.0 * (1.0 + t[0] * b) ** 1.5))[:, None, None]

    return ModelSpec("ar1-arch", 1, (float(rho),), (float(beta),), mean_fn, scale_fn,
                     mean_grad, scale_grad, mean_hess, scale_hess,
                     kind="ar1-arch", arch_b=arch_b)


@dataclass(frozen=True, eq=False)
class LocalAlternative:
    """Directions (G, S) and steps (h, h') of the contiguous alternative.

    Built-ins share the shape ``(g0 + g1 z_1) / (1 + z_1^2 + ... + z_L^2)``;
    ``G = drift_coef * a * shape`` and ``S = scale_coef * a * shape``.
    """

    name: str
    a: float
    h: float = 1.0
    h_prime: float = 1.0
    drift_coef: float = 0.0
    scale_coef: float = 0.0
    g0: float = 1.0
    g1: float = 0.0
    lags: int = 1
    G_fn: Callable[[np.ndarray], np.ndarray] | None = None
    S_fn: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def builtin(self) -> bool:
        return self.G_fn is None and self.S_fn is None

    @property
    def s_zero(self) -> bool:
        return self.builtin and self.scale_coef == 0.0

    def shape(self, Z: np.ndarray) -> np.ndarray:
        den = 1.0 + np.sum(Z[:, : self.lags] ** 2, axis=1)
        return (self.g0 + self.g1 * Z[:, 0]) / den

    def G(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        if self.G_fn is not None:
            return np.asarray(self.G_fn(Z), dtype=float)
        return self.drift_coef * self.a * self.shape(Z)

    def S(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(Z)
        if self.S_fn is not None:
            return np.asarray(self.S_fn(Z), dtype=float)
        if self.scale_coef == 0.0:
            return np.zeros(Z.shape[0])
        return self.scale_coef * self.a * self.shape(Z)

    def with_a(self, a: float) -> "LocalAlternative":
        return replace(self, a=float(a))

    def with_steps(self, h: float, h_prime: float) -> "LocalAlternative":
        return replace(self, h=float(h), h_prime=float(h_prime))


def ex1(a: float, h: float = 1.0, h_prime: float = 1.0) -> LocalAlternative:
    """G(z) = 6a / (1 + z_1^2), S = 0."""
    return LocalAlternative("ex1", float(a), h, h_prime, drift_coef=6.0)


def ex2(a: float, h: float = 1.0, h_prime: float = 1.0) -> LocalAlternative:
    """G(z) = 5a / (1 + z_1^2), S = G / 4."""
    return LocalAlternative("ex2", float(a), h, h_prime, drift_coef=5.0, scale_coef=1.25)


def ex3(a: float, h: float = 1.0, h_prime: float = 1.0) -> LocalAlternative:
    """G(z) = S(z) = 8a / (1 + z_1^2 + z_2^2)."""
    return LocalAlternative("ex3", float(a), h, h_prime, drift_coef=8.0, scale_coef=8.0,
                            lags=2)


def ex1_odd(a: float, h: float = 1.0, h_prime: float = 1.0) -> LocalAlternative:
    """G(z) = 6a z_1 / (1 + z_1^2), S = 0.

    Odd in z_1, so the mean-gradient limit E[Y_{-1} G(Z_0)] is non-zero;
    the even built-ins give a zero limit under any symmetric stationary law.
    """
    return LocalAlternative("ex1-odd", float(a), h, h_prime, drift_coef=6.0, g0=0.0, g1=1.0)


ALTERNATIVES = {"ex1": ex1, "ex2": ex2, "ex3": ex3, "ex1-odd": ex1_odd}


def custom_alternative(G, S=None, a: float = 1.0, h: float = 1.0, h_prime: float = 1.0,
                       lags: int = 1, name: str = "custom") -> LocalAlternative:
    S = S if S is not None else (lambda Z: np.zeros(Z.shape[0]))
    return LocalAlternative(name, float(a), h, h_prime, lags=lags, G_fn=G, S_fn=S)


@dataclass
class SeriesPath:
    y: np.ndarray
    z: np.ndarray
    eps: np.ndarray
    regime: str  # "null" or "alternative"
    n_used: int
    burnin: int
    backend: str = BACKEND
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.y)


def lag_matrix(y_all: np.ndarray, width: int) -> np.ndarray:
    """Rows (y_{t-1}, ..., y_{t-width}) for every t, zeros before the start."""
    T = len(y_all)
    padded = np.concatenate([np.zeros(width), y_all])
    Z = np.empty((T, width))
    for k in range(width):
        Z[:, k] = padded[width - 1 - k: width - 1 - k + T]
    return Z


def _innovations(noise, n_total, rng, innovations):
    if innovations is None:
        return np.asarray(score.sample(noise, rng, n_total), dtype=float)
    eps = np.asarray(innovations, dtype=float)
    if eps.shape != (n_total,):
        raise ValueError(f"innovations must have length burnin + n = {n_total}")
    return eps.copy()


def _generic_recursion(model, alt, eps, drift_scale, scale_scale, width):
    rho = np.asarray(model.rho)
    theta = np.asarray(model.theta)
    T = len(eps)
    y = np.zeros(T)
    for i in range(T):
        z = np.array([[y[i - 1 - k] if i - 1 - k >= 0 else 0.0 for k in range(width)]])
        mean = model.mean_fn(rho, z)[0]
        scale = model.scale_fn(theta, z)[0]
        if alt is not None:
            mean = mean + drift_scale * alt.G(z)[0]
            scale = scale + scale_scale * alt.S(z)[0]
        if not scale > 0.0:
            raise ScaleNotPositive(f"scale {scale} <= 0 at step {i}")
        y[i] = mean + scale * eps[i]
    return y


def _simulate(model, alt, noise, n, burnin, rng, innovations, width):
    if n < 1 or burnin < 0:
        raise ConfigError("need n >= 1 and burnin >= 0")
    model.validate()
    need = max(model.mean_order, alt.lags if alt is not None else 0)
    width = max(need, width or 0, 1)
    eps = _innovations(noise, n + burnin, rng, innovations)
    root_n = math.sqrt(n)
    drift_scale = alt.h / root_n if alt is not None else 0.0
    scale_scale = alt.h_prime / root_n if alt is not None else 0.0

    if model.kind != "custom" and (alt is None or alt.builtin):
        if alt is None:
            drift_amp = scale_amp = 0.0
            g0, g1, den_lags = 1.0, 0.0, 0
        else:
            drift_amp = drift_scale * alt.drift_coef * alt.a
            scale_amp = scale_scale * alt.scale_coef * alt.a
            g0, g1, den_lags = alt.g0, alt.g1, alt.lags
        b_kind = 0 if model.arch_b == B_BOUNDED else 1
        y_all, fail = ar_recursion(eps, np.asarray(model.rho, dtype=float), model.beta,
                                   b_kind, drift_amp, scale_amp, g0, g1, den_lags)
        if fail >= 0:
            raise ScaleNotPositive(f"scale not positive at step {fail}")
        backend = BACKEND
    else:
        y_all = _generic_recursion(model, alt, eps, drift_scale, scale_scale, width)
        backend = "generic"

    Z = lag_matrix(y_all, width)[burnin:]
    regime = "null" if alt is None else "alternative"
    return SeriesPath(y_all[burnin:].copy(), Z, eps[burnin:].copy(), regime, n, burnin, backend)


def simulate_null(model: ModelSpec, noise: score.NoiseSpec, n: int, burnin: int,
                  rng: np.random.Generator | None, innovations=None,
                  width: int | None = None) -> SeriesPath:
    """Simulate ``n`` observations under the null after ``burnin`` discarded steps.

    Lags start at zero.  ``width`` widens the stored lag matrix (e.g. so an
    AR(1) path can feed a two-lag direction G).
    """
    return _simulate(model, None, noise, n, burnin, rng, innovations, width)


def simulate_alternative(model: ModelSpec, alt: LocalAlternative, noise: score.NoiseSpec,
                         n: int, burnin: int, rng: np.random.Generator | None,
                         innovations=None, width: int | None = None) -> SeriesPath:
    """Simulate under the local alternative; the n^{-1/2} drift uses the post-burn-in n."""
    return _simulate(model, alt, noise, n, burnin, rng, innovations, width)


def residuals(model: ModelSpec, path: SeriesPath, rho=None, theta=None) -> np.ndarray:
    rho = np.asarray(model.rho if rho is None else rho, dtype=float)
    theta = np.asarray(model.theta if theta is None else theta, dtype=float)
    if rho.shape != (model.ell,) or theta.shape != (model.p,):
        raise ValueError("parameter lengths do not match the model")
    sig = model.scale_fn(theta, path.z)
    if np.any(~(sig > 0)):
        raise ScaleNotPositive("scale not positive while computing residuals")
    return (path.y - model.mean_fn(rho, path.z)) / sig
