"""Reproducible Monte Carlo harness: power, size, LAN and estimator diagnostics.

Every replicate draws its own generator from ``derive_seed(seed, n, a, rep)``,
so results do not depend on execution order or on the number of worker
processes.  Replicates emit flat record dicts; aggregate rows are a fold
over the records sorted by ``(n, a, rep, policy)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from lantest import estimate, lan, score
from lantest._backend import BACKEND
from lantest.config import POLICIES, ExperimentConfig
from lantest.errors import LantestError, ScaleNotPositive
from lantest.rng import derive_seed, make_rng
from lantest.tsmodel import (ALTERNATIVES, LocalAlternative, ModelSpec, ar1_arch_model,
                             ar_model, simulate_alternative, simulate_null)

POWER = "power"
SIZE = "size"
LAN = "lan"
ESTIMATOR = "estimator"

POWER_COLUMNS = ("n", "a", "policy", "rejection_rate", "analytic_power_lecam",
                 "analytic_power_paper", "tau2_hat", "failures")


# -- builders ---------------------------------------------------------------

def build_model(cfg: ExperimentConfig) -> ModelSpec:
    if cfg.model == "ar1-arch":
        model = ar1_arch_model(cfg.rho[0], cfg.beta, cfg.arch_b)
    else:
        model = ar_model(cfg.rho)
    model.validate()
    return model


def build_noise(cfg: ExperimentConfig) -> score.NoiseSpec:
    if cfg.noise == "student":
        return score.NoiseSpec.student(cfg.dof)
    return score.NoiseSpec.gaussian()


def build_alt(cfg: ExperimentConfig, a: float) -> LocalAlternative:
    return ALTERNATIVES[cfg.alt](a, cfg.h, cfg.hprime)


def test_direction(a: float) -> float:
    """Direction used by the test: the data's ``a``, or 1 under the null (V/tau is scale free)."""
    return a if a != 0 else 1.0


# -- auxiliary quantities ----------------------------------------------------

@dataclass
class Context:
    """Everything a replicate needs that is shared across replicates (picklable)."""

    config: ExperimentConfig
    moments: score.Moments
    unit_tau: lan.TauExpectations
    unit_constants: estimate.CorrectionConstants

    def tau2(self, a: float) -> float:
        alt = build_alt(self.config, a)
        return lan.tau_squared(alt, None, build_noise(self.config),
                               self.unit_tau.scaled(a), self.moments)

    def constants(self, a: float) -> estimate.CorrectionConstants:
        return self.unit_constants.scaled(a)


_CONTEXT_CACHE: dict = {}


def _aux_key(cfg: ExperimentConfig):
    return (cfg.model, cfg.rho, cfg.beta, cfg.arch_b, cfg.alt, cfg.h, cfg.hprime, cfg.noise,
            cfg.dof, cfg.seed, cfg.burnin, cfg.constants_mode, cfg.n_aux)


def build_context(cfg: ExperimentConfig) -> Context:
    """Auxiliary null path (simulated once per config) -> tau^2 inputs and K, K', J, J'."""
    key = _aux_key(cfg)
    if key in _CONTEXT_CACHE:
        ctx = _CONTEXT_CACHE[key]
        return Context(cfg, ctx.moments, ctx.unit_tau, ctx.unit_constants)
    model = build_model(cfg)
    noise = build_noise(cfg)
    unit = build_alt(cfg, 1.0)
    rng = make_rng(derive_seed(cfg.seed, "aux"))
    path = simulate_null(model, noise, cfg.n_aux, cfg.burnin, rng, width=unit.lags)
    mom = score.moments(noise)
    taus = lan.tau_expectations(model, unit, path.z)
    if cfg.constants_mode == "zero":
        z_l, z_p = np.zeros(model.ell), np.zeros(model.p)
        consts = estimate.CorrectionConstants(z_l, z_l.copy(), z_p, z_p.copy(), "zero", path.n)
    else:
        consts = estimate.correction_constants(model, unit, noise, cfg.constants_mode, path=path)
    ctx = Context(cfg, mom, taus, consts)
    _CONTEXT_CACHE[key] = ctx
    return ctx


def tune_a_for_tau(cfg: ExperimentConfig, target_tau: float = 1.0) -> float:
    """The ``a`` whose auxiliary tau equals ``target_tau`` (tau is linear in a)."""
    ctx = build_context(cfg)
    return target_tau / math.sqrt(ctx.tau2(1.0))


# -- replicates --------------------------------------------------------------

def replicate_seed(cfg: ExperimentConfig, n: int, a: float, rep: int) -> int:
    return derive_seed(cfg.seed, int(n), float(a), int(rep))


def _simulate(ctx: Context, kind: str, n: int, a: float, rng):
    cfg = ctx.config
    model = build_model(cfg)
    noise = build_noise(cfg)
    width = build_alt(cfg, 1.0).lags
    if kind == POWER:
        return simulate_alternative(model, build_alt(cfg, a), noise, n, cfg.burnin, rng,
                                    width=width)
    return simulate_null(model, noise, n, cfg.burnin, rng, width=width)


def _policy_params(policies, est, model):
    out = {}
    for p in policies:
        if p == "true":
            out[p] = model.params
        elif est is not None:
            out[p] = {"lse": est.lse, "discrete": est.discrete, "mde": est.mde}[p]
    return out


def _test_records(ctx: Context, kind: str, n: int, a: float, rep: int) -> list[dict]:
    cfg = ctx.config
    seed = replicate_seed(cfg, n, a, rep)
    base = {"n": n, "a": a, "rep": rep, "seed": seed}
    try:
        path = _simulate(ctx, kind, n, a, make_rng(seed))
    except ScaleNotPositive as exc:
        return [dict(base, policy=p, v=math.nan, statistic=math.nan, tau2=math.nan,
                     reject=False, estimate=math.nan, fallback=False, sim_failed=True,
                     failure=type(exc).__name__) for p in cfg.policies]

    model = build_model(cfg)
    noise = build_noise(cfg)
    a_test = test_direction(a)
    alt = build_alt(cfg, a_test)
    j = cfg.corrected_component
    est, est_failure = None, ""
    if any(p != "true" for p in cfg.policies):
        try:
            est = estimate.estimate_all(path, model, alt, noise, ctx.constants(a_test),
                                        cfg.c, j)
        except LantestError as exc:
            est_failure = type(exc).__name__
    params = _policy_params(cfg.policies, est, model)
    aux_tau2 = ctx.tau2(a_test)

    out = []
    for p in cfg.policies:
        rec = dict(base, policy=p, v=math.nan, statistic=math.nan, tau2=math.nan, reject=False,
                   estimate=math.nan, fallback=bool(est is not None and est.fallback
                                                    and p == "mde"),
                   sim_failed=False, failure="")
        if p not in params:
            rec["failure"] = est_failure
            out.append(rec)
            continue
        theta_vec = params[p]
        rec["estimate"] = float(theta_vec[j])
        try:
            v = lan.central_sequence(path, model, alt, noise, theta_vec).v
            tau2 = aux_tau2 if cfg.tau_mode == "aux" else \
                lan.plugin_tau_squared(path, model, alt, noise, theta_vec)
            dec = lan.np_test(v, tau2, cfg.alpha)
            rec.update(v=v, statistic=dec.statistic, tau2=tau2, reject=dec.reject)
        except LantestError as exc:
            rec["failure"] = type(exc).__name__
        out.append(rec)
    return out


def _lan_record(ctx: Context, n: int, a: float, rep: int) -> dict:
    cfg = ctx.config
    seed = replicate_seed(cfg, n, a, rep)
    base = {"n": n, "a": a, "rep": rep, "seed": seed, "sim_failed": False, "failure": ""}
    try:
        path = _simulate(ctx, LAN, n, a, make_rng(seed))
        model, noise, alt = build_model(cfg), build_noise(cfg), build_alt(cfg, a)
        tau2 = ctx.tau2(a)
        rep_ = lan.lan_report(path, model, alt, noise, tau2)
    except LantestError as exc:
        return dict(base, sim_failed=isinstance(exc, ScaleNotPositive),
                    failure=type(exc).__name__, v=math.nan, tau2=math.nan, lam=math.nan,
                    lan_residual=math.nan, c1=math.nan, c2=math.nan, c3_gap=math.nan)
    return dict(base, v=rep_.v, tau2=tau2, lam=rep_.lam, lan_residual=rep_.lan_residual,
                c1=rep_.c1, c2=rep_.c2, c3_gap=rep_.c3_gap)


def _estimator_record(ctx: Context, n: int, a: float, rep: int) -> dict:
    cfg = ctx.config
    seed = replicate_seed(cfg, n, a, rep)
    j = cfg.corrected_component
    base = {"n": n, "a": a, "rep": rep, "seed": seed, "sim_failed": False, "failure": ""}
    nan_fields = ("err_lse", "err_discrete", "err_mde", "norm_lse", "norm_mde", "v0", "v_discrete",
                  "v_mde", "shift_pred", "shift_residual", "grad_gap", "d_n")
    try:
        path = _simulate(ctx, ESTIMATOR, n, a, make_rng(seed))
        model, noise = build_model(cfg), build_noise(cfg)
        a_test = test_direction(a)
        alt = build_alt(cfg, a_test)
        consts = ctx.constants(a_test)
        est = estimate.estimate_all(path, model, alt, noise, consts, cfg.c, j)
        truth = model.params
        root_n = math.sqrt(n)
        v0 = lan.central_sequence(path, model, alt, noise, truth).v
        v_disc = lan.central_sequence(path, model, alt, noise, est.discrete).v
        v_mde = lan.central_sequence(path, model, alt, noise, est.mde).v
        shift_pred = -est.d_n
        g_lse = estimate.central_gradient(path, model, alt, noise, est.lse)[j] / root_n
        g_0 = estimate.central_gradient(path, model, alt, noise, truth)[j] / root_n
    except LantestError as exc:
        rec = dict(base, sim_failed=isinstance(exc, ScaleNotPositive), failure=type(exc).__name__,
                   fallback=False)
        rec.update({k: math.nan for k in nan_fields})
        return rec
    ell = model.ell
    return dict(
        base,
        err_lse=root_n * float(est.lse[j] - truth[j]),
        err_discrete=root_n * float(est.discrete[j] - truth[j]),
        err_mde=root_n * float(est.mde[j] - truth[j]),
        norm_lse=root_n * float(np.max(np.abs(est.lse[:ell] - truth[:ell]))),
        norm_mde=root_n * float(np.max(np.abs(est.mde[:ell] - truth[:ell]))),
        v0=v0, v_discrete=v_disc, v_mde=v_mde, shift_pred=shift_pred,
        shift_residual=abs((v_disc - v0) - shift_pred),
        grad_gap=abs(g_lse - g_0), d_n=est.d_n, fallback=est.fallback,
    )


def run_replicates(ctx: Context, kind: str, n: int, a: float, reps) -> list[dict]:
    out = []
    for rep in reps:
        if kind in (POWER, SIZE):
            out.extend(_test_records(ctx, kind, n, a, rep))
        elif kind == LAN:
            out.append(_lan_record(ctx, n, a, rep))
        elif kind == ESTIMATOR:
            out.append(_estimator_record(ctx, n, a, rep))
        else:
            raise ValueError(f"unknown experiment kind {kind!r}")
    return out


def _run_task(args):
    return run_replicates(*args)


def _collect(ctx: Context, kind: str, rep_order=None, chunk: int = 50) -> list[dict]:
    cfg = ctx.config
    order = list(range(cfg.m)) if rep_order is None else [int(r) for r in rep_order]
    if sorted(order) != list(range(cfg.m)):
        raise ValueError("rep_order must be a permutation of range(m)")
    tasks = [(ctx, kind, int(n), float(a), order[i:i + chunk])
             for n in cfg.n_list for a in cfg.a_grid for i in range(0, len(order), chunk)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(_run_task, tasks))
    else:
        parts = [_run_task(t) for t in tasks]
    records = [r for part in parts for r in part]
    return sort_records(records, cfg)


def sort_records(records: list[dict], cfg: ExperimentConfig) -> list[dict]:
    n_idx = {n: i for i, n in enumerate(cfg.n_list)}
    a_idx = {a: i for i, a in enumerate(cfg.a_grid)}
    p_idx = {p: i for i, p in enumerate(POLICIES)}
    return sorted(records, key=lambda r: (n_idx[r["n"]], a_idx[r["a"]], r["rep"],
                                          p_idx.get(r.get("policy"), -1)))


# -- aggregation -------------------------------------------------------------

def _median(x) -> float:
    x = np.asarray([v for v in x if not math.isnan(v)], dtype=float)
    return float(np.median(x)) if x.size else math.nan


def _mean(x) -> float:
    x = [v for v in x if not math.isnan(v)]
    return math.fsum(x) / len(x) if x else math.nan


def _sd(x) -> float:
    x = [v for v in x if not math.isnan(v)]
    if len(x) < 2:
        return math.nan
    mu = math.fsum(x) / len(x)
    return math.sqrt(math.fsum((v - mu) ** 2 for v in x) / (len(x) - 1))


def _quantile(x, q) -> float:
    x = np.asarray([v for v in x if not math.isnan(v)], dtype=float)
    return float(np.quantile(x, q)) if x.size else math.nan


def _groups(records, keys):
    out: dict = {}
    for r in records:
        out.setdefault(tuple(r[k] for k in keys), []).append(r)
    return out


def _ks_pvalue(values) -> float:
    x = [v for v in values if not math.isnan(v)]
    if len(x) < 2:
        return math.nan
    return float(stats.kstest(np.sort(x), "norm").pvalue)


def aggregate_tests(records: list[dict], ctx: Context, kind: str) -> list[dict]:
    """One row per (n, a, policy) for power/size records."""
    cfg = ctx.config
    rows = []
    truth = cfg.rho[cfg.corrected_component]
    for (n, a, policy), recs in _groups(records, ("n", "a", "policy")).items():
        used = [r for r in recs if not r["sim_failed"]]
        decided = [r for r in used if not r["failure"]]
        m_used = len(used)
        tau2_data = ctx.tau2(a) if kind == POWER else 0.0
        errs = [math.sqrt(n) * (r["estimate"] - truth) for r in decided]
        rows.append({
            "n": n, "a": a, "policy": policy,
            "rejection_rate": (sum(1 for r in used if r["reject"]) / m_used) if m_used else math.nan,
            "analytic_power_lecam": lan.analytic_power(tau2_data, cfg.alpha, lan.LECAM),
            "analytic_power_paper": lan.analytic_power(tau2_data, cfg.alpha, lan.TAU_SQUARED),
            "analytic_power": lan.analytic_power(tau2_data, cfg.alpha, cfg.power_convention),
            "tau2_hat": _mean([r["tau2"] for r in decided]),
            "failures": sum(1 for r in recs if r["failure"]),
            "replicates": len(recs),
            "used": m_used,
            "tau2_aux": ctx.tau2(test_direction(a)),
            "mean_v": _mean([r["v"] for r in decided]),
            "median_v": _median([r["v"] for r in decided]),
            "mean_stat": _mean([r["statistic"] for r in decided]),
            "sd_stat": _sd([r["statistic"] for r in decided]),
            "ks_pvalue": _ks_pvalue([r["statistic"] for r in decided]),
            "bias_sqrt_n": _mean(errs),
            "rmse_sqrt_n": math.sqrt(_mean([e * e for e in errs])) if errs else math.nan,
            "fallback_fraction": (sum(1 for r in recs if r["fallback"]) / len(recs)),
        })
    return rows


def aggregate_lan(records: list[dict], ctx: Context) -> list[dict]:
    rows = []
    for (n, a), recs in _groups(records, ("n", "a")).items():
        ok = [r for r in recs if not r["failure"]]
        tau2 = ctx.tau2(a)
        c2_abs = [abs(r["c2"] - tau2) for r in ok]
        rel = [0.0 if d == 0 else (d / tau2 if tau2 > 0 else math.inf) for d in c2_abs]
        stat = [r["v"] / math.sqrt(tau2) for r in ok] if tau2 > 0 else []
        rows.append({
            "n": n, "a": a, "tau2": tau2,
            "median_abs_lan_residual": _median([abs(r["lan_residual"]) for r in ok]),
            "median_c1": _median([r["c1"] for r in ok]),
            "median_abs_c2_gap": _median(c2_abs),
            "median_rel_c2_gap": _median(rel),
            "median_abs_c3_gap": _median([abs(r["c3_gap"]) for r in ok]),
            "mean_v": _mean([r["v"] for r in ok]),
            "median_v": _median([r["v"] for r in ok]),
            "mean_stat": _mean(stat) if stat else math.nan,
            "sd_stat": _sd(stat) if stat else math.nan,
            "ks_pvalue": _ks_pvalue(stat),
            "failures": len(recs) - len(ok),
            "replicates": len(recs),
        })
    return rows


def aggregate_estimator(records: list[dict], ctx: Context) -> list[dict]:
    rows = []
    for (n, a), recs in _groups(records, ("n", "a")).items():
        ok = [r for r in recs if not r["failure"]]

        def col(k):
            return [r[k] for r in ok]

        rows.append({
            "n": n, "a": a,
            "bias_lse": _mean(col("err_lse")),
            "bias_mde": _mean(col("err_mde")),
            "rmse_lse": math.sqrt(_mean([e * e for e in col("err_lse")])) if ok else math.nan,
            "rmse_mde": math.sqrt(_mean([e * e for e in col("err_mde")])) if ok else math.nan,
            "p95_norm_lse": _quantile(col("norm_lse"), 0.95),
            "p95_norm_mde": _quantile(col("norm_mde"), 0.95),
            "median_shift_residual": _median(col("shift_residual")),
            "median_abs_v_mde_shift": _median([abs(r["v_mde"] - r["v0"]) for r in ok]),
            "median_abs_v_discrete_shift": _median([abs(r["v_discrete"] - r["v0"]) for r in ok]),
            "median_grad_gap": _median(col("grad_gap")),
            "fallback_fraction": sum(1 for r in recs if r["fallback"]) / len(recs),
            "failures": len(recs) - len(ok),
            "replicates": len(recs),
        })
    return rows


# -- experiments -------------------------------------------------------------

@dataclass
class ExperimentResult:
    kind: str
    config: ExperimentConfig
    config_hash: str
    rows: list[dict]
    records: list[dict]
    meta: dict = field(default_factory=dict)

    def row(self, **match) -> dict:
        hits = [r for r in self.rows if all(r[k] == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def column(self, name: str, **match) -> list:
        return [r[name] for r in self.rows if all(r[k] == v for k, v in match.items())]


def _finish(kind, ctx, records, rows) -> ExperimentResult:
    cfg = ctx.config
    h = cfg.config_hash()
    meta = {
        "backend": BACKEND,
        "tau2_unit_direction": ctx.tau2(1.0),
        "constants_mode": ctx.unit_constants.mode,
        "K_unit": ctx.unit_constants.K.tolist(),
        "K_prime_unit": ctx.unit_constants.K_prime.tolist(),
        "J_unit": ctx.unit_constants.J.tolist(),
        "J_prime_unit": ctx.unit_constants.J_prime.tolist(),
        "n_aux": ctx.unit_constants.n_aux,
        "tau_mode": cfg.tau_mode,
        "power_convention": cfg.power_convention,
    }
    return ExperimentResult(kind, cfg, h, rows, records, meta)


def aggregate(kind: str, records: list[dict], ctx: Context) -> list[dict]:
    """Deterministic fold over records (sorted first, so input order is irrelevant)."""
    cfg = ctx.config
    records = sort_records(records, cfg)
    if kind in (POWER, SIZE):
        rows = aggregate_tests(records, ctx, kind)
    elif kind == LAN:
        rows = aggregate_lan(records, ctx)
    else:
        rows = aggregate_estimator(records, ctx)
    h = cfg.config_hash()
    for r in rows:
        r["config_hash"] = h
        r["seed"] = cfg.seed
    return rows


def _run(kind: str, cfg: ExperimentConfig, rep_order=None) -> ExperimentResult:
    cfg.validate()
    ctx = build_context(cfg)
    records = _collect(ctx, kind, rep_order)
    return _finish(kind, ctx, records, aggregate(kind, records, ctx))


def run_power_experiment(cfg: ExperimentConfig, rep_order=None) -> ExperimentResult:
    """Simulate under the alternative at each (n, a) and test under each policy."""
    return _run(POWER, cfg, rep_order)


def run_size_experiment(cfg: ExperimentConfig, rep_order=None) -> ExperimentResult:
    """As the power experiment, but every path is simulated under the null."""
    return _run(SIZE, cfg, rep_order)


def run_lan_diagnostic(cfg: ExperimentConfig, rep_order=None) -> ExperimentResult:
    """Null paths; per (n, a) medians of the LAN residual and of the g-term condition statistics."""
    return _run(LAN, cfg, rep_order)


def run_estimator_diagnostic(cfg: ExperimentConfig, rep_order=None) -> ExperimentResult:
    """Null paths; estimator errors, central-sequence shifts and fallback fraction."""
    return _run(ESTIMATOR, cfg, rep_order)


RUNNERS = {POWER: run_power_experiment, SIZE: run_size_experiment, LAN: run_lan_diagnostic,
           ESTIMATOR: run_estimator_diagnostic}
