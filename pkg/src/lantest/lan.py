"""Central sequence, log-likelihood ratio, tau^2 and the Neyman-Pearson test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from lantest import score
from lantest.errors import InvalidScaleShift, NegativeTau2, NonpositiveTau2, ScaleNotPositive
from lantest.tsmodel import LocalAlternative, ModelSpec, SeriesPath, residuals

LECAM = "lecam"
TAU_SQUARED = "paper"  # config value kept for interface stability


@dataclass
class CentralSequenceReport:
    v: float
    r_part: float
    q_part: float
    u_terms: np.ndarray
    tau2: float = math.nan
    lam: float = math.nan
    lan_residual: float = math.nan
    c1: float = math.nan
    c2: float = math.nan
    c3_gap: float = math.nan


def u_term(model: ModelSpec, alt: LocalAlternative, noise: score.NoiseSpec, z, eps, n: int,
           theta=None):
    """U_{n,i} = -n^{-1/2} {h M(eps) G/sigma + h' (1 + eps M(eps)) S/sigma} (vectorized over rows of z)."""
    r, q = _u_parts(model, alt, noise, np.atleast_2d(z), np.atleast_1d(eps), n, theta)
    out = r + q
    return float(out[0]) if np.ndim(eps) == 0 else out


def _u_parts(model, alt, noise, Z, eps, n, theta=None):
    theta = np.asarray(model.theta if theta is None else theta, dtype=float)
    sig = model.scale_fn(theta, Z)
    if np.any(~(sig > 0)):
        raise ScaleNotPositive("scale not positive in the central sequence")
    sv = score.scores(noise, eps)
    root_n = math.sqrt(n)
    r = -alt.h * sv.m * alt.G(Z) / sig / root_n
    if alt.s_zero:
        q = np.zeros_like(r)
    else:
        q = -alt.h_prime * sv.n * alt.S(Z) / sig / root_n
    return r, q


def central_sequence(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                     noise: score.NoiseSpec, params=None) -> CentralSequenceReport:
    """V = r + q evaluated with residuals at ``params`` (default: the model's true values)."""
    rho, theta = model.split(model.params if params is None else params)
    eps = residuals(model, path, rho, theta)
    r, q = _u_parts(model, alt, noise, path.z, eps, path.n, theta)
    u = r + q
    return CentralSequenceReport(v=float(u.sum()), r_part=float(r.sum()), q_part=float(q.sum()),
                                 u_terms=u)


@dataclass(frozen=True)
class TauExpectations:
    gg: float  # E (G/sigma)^2
    ss: float  # E (S/sigma)^2
    gs: float  # E (G S / sigma^2)

    def scaled(self, factor: float) -> "TauExpectations":
        f2 = factor * factor
        return TauExpectations(self.gg * f2, self.ss * f2, self.gs * f2)


def tau_expectations(model: ModelSpec, alt: LocalAlternative, Z: np.ndarray,
                     theta=None) -> TauExpectations:
    theta = np.asarray(model.theta if theta is None else theta, dtype=float)
    sig = model.scale_fn(theta, Z)
    g = alt.G(Z) / sig
    s = alt.S(Z) / sig
    return TauExpectations(float(np.mean(g * g)), float(np.mean(s * s)), float(np.mean(g * s)))


def tau_squared(alt: LocalAlternative, model: ModelSpec | None, noise: score.NoiseSpec,
                expectations: TauExpectations, moments: score.Moments | None = None) -> float:
    """h^2 I0 E(G/s)^2 + h'^2 (I2 - 1) E(S/s)^2 + 2 h h' I1 E(GS/s^2)."""
    mom = score.moments(noise) if moments is None else moments
    h, hp = alt.h, alt.h_prime
    tau2 = (h * h * mom.I0 * expectations.gg
            + hp * hp * (mom.I2 - 1.0) * expectations.ss
            + 2.0 * h * hp * mom.I1 * expectations.gs)
    if tau2 < 0:
        raise NegativeTau2(f"tau^2 = {tau2:.3g} < 0; inconsistent expectations")
    return float(tau2)


def plugin_moments(noise: score.NoiseSpec, eps: np.ndarray) -> score.Moments:
    """Gaussian: I_j replaced by the sample mean of eps^(j+2); other laws keep quadrature values."""
    if noise.family != score.GAUSSIAN:
        return score.moments(noise)
    e2 = eps * eps
    return score.Moments(float(e2.mean()), float((e2 * eps).mean()), float((e2 * e2).mean()),
                         0.0, -float(e2.mean()), 0.0)


def plugin_tau_squared(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                       noise: score.NoiseSpec, params=None) -> float:
    """tau^2 from averages over the observed path with residuals at ``params``."""
    rho, theta = model.split(model.params if params is None else params)
    eps = residuals(model, path, rho, theta)
    ex = tau_expectations(model, alt, path.z, theta)
    return tau_squared(alt, model, noise, ex, plugin_moments(noise, eps))


def log_likelihood_ratio(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
                         noise: score.NoiseSpec) -> tuple[float, np.ndarray]:
    """Lambda = sum_i log g_i at the true parameters; returns (Lambda, g_terms)."""
    theta = np.asarray(model.theta, dtype=float)
    sig = model.scale_fn(theta, path.z)
    eps = residuals(model, path)
    root_n = math.sqrt(path.n)
    alpha = alt.h * alt.G(path.z) / sig / root_n
    beta = 1.0 + alt.h_prime * alt.S(path.z) / sig / root_n
    if np.any(~(beta > 0)):
        raise InvalidScaleShift("perturbed scale factor beta <= 0")
    # difference of log-densities, never a ratio of densities
    log_g = (score.log_density(noise, (eps - alpha) / beta) - np.log(beta)
             - score.log_density(noise, eps))
    return float(log_g.sum()), np.exp(log_g)


def condition_checks(g_terms: np.ndarray, v: float) -> dict:
    d = np.asarray(g_terms) - 1.0
    return {
        "c1": float(np.max(np.abs(d))) if d.size else 0.0,
        "c2": float(np.sum(d * d)),
        "c3_gap": float(np.sum(d) - v),
    }


def lan_report(path: SeriesPath, model: ModelSpec, alt: LocalAlternative,
               noise: score.NoiseSpec, tau2: float) -> CentralSequenceReport:
    """Central sequence at the true parameters plus Lambda and the g-term condition statistics."""
    rep = central_sequence(path, model, alt, noise)
    lam, g = log_likelihood_ratio(path, model, alt, noise)
    checks = condition_checks(g, rep.v)
    rep.tau2 = float(tau2)
    rep.lam = lam
    rep.lan_residual = lam - (rep.v - tau2 / 2.0)
    rep.c1, rep.c2, rep.c3_gap = checks["c1"], checks["c2"], checks["c3_gap"]
    return rep


@dataclass(frozen=True)
class TestDecision:
    reject: bool
    statistic: float
    critical: float


def critical_value(alpha: float) -> float:
    """Upper-alpha standard normal quantile Z(alpha), Phi(Z(alpha)) = 1 - alpha."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(stats.norm.isf(alpha))


def np_test(v: float, tau2: float, alpha: float) -> TestDecision:
    """Reject when V / tau >= Z(alpha)."""
    if not tau2 > 0:
        raise NonpositiveTau2(f"tau^2 = {tau2} must be positive")
    crit = critical_value(alpha)
    stat = v / math.sqrt(tau2)
    return TestDecision(bool(stat >= crit), float(stat), crit)


def analytic_power(tau2: float, alpha: float, convention: str = LECAM) -> float:
    """Asymptotic power: 1 - Phi(Z(alpha) - tau) (lecam) or 1 - Phi(Z(alpha) - tau^2) ("paper")."""
    if tau2 < 0:
        raise ValueError("tau^2 must be non-negative")
    crit = critical_value(alpha)
    if convention == LECAM:
        shift = math.sqrt(tau2)
    elif convention == TAU_SQUARED:
        shift = tau2
    else:
        raise ValueError(f"unknown power convention {convention!r}")
    return float(stats.norm.sf(crit - shift))
