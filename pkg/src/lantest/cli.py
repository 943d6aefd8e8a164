"""Command-line front end.

Subcommands: simulate, power, size, lan-check, estimator-check, score-audit.
Exit codes: 0 ok, 2 config error, 3 runtime error, 4 ``--assert`` check failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

from lantest import __version__, mc, score
from lantest._backend import BACKEND
from lantest.config import ExperimentConfig, build_config, load_file
from lantest.errors import ConfigError, LantestError
from lantest.rng import derive_seed, make_rng
from lantest.tsmodel import simulate_alternative, simulate_null

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 2, 3, 4

# flag -> config key
_OVERRIDES = {
    "model": "model", "rho": "rho", "beta": "beta", "arch_b": "arch_b", "alt": "alt",
    "h": "h", "hprime": "hprime", "noise": "noise", "dof": "dof", "n_list": "n_list",
    "m": "m", "a_grid": "a_grid", "policies": "policies", "alpha": "alpha",
    "burnin": "burnin", "c": "c", "component": "corrected_component",
    "constants_mode": "constants_mode", "n_aux": "n_aux", "tau_mode": "tau_mode",
    "power_convention": "power_convention", "seed": "seed", "threads": "threads",
}


# -- serialization -----------------------------------------------------------

def format_value(v) -> str:
    """Shortest round-trip text for floats; bools as 0/1."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_csv(path: Path, rows: list[dict], columns=None) -> Path:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r[c]) for c in columns])
    return path


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, cfg: ExperimentConfig | None, seed,
                   files: list[Path], started: str, extra: dict | None = None) -> Path:
    payload = {
        "tool": "lantest",
        "version": __version__,
        "command": command,
        "backend": BACKEND,
        "config_hash": cfg.config_hash() if cfg else None,
        "config": cfg.canonical() if cfg else None,
        "seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": sorted(p.name for p in files),
    }
    payload.update(extra or {})
    return write_json(out_dir / "manifest.json", payload)


# -- argument parsing ----------------------------------------------------------

def _add_global(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--out-dir", default="lantest-out")
    g.add_argument("--config", help="INI config file")
    g.add_argument("--preset")
    g.add_argument("--assert", dest="check", action="store_true",
                   help="exit 4 when the command's sanity checks fail")


def _add_model(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("ar1", "ar2", "ar1-arch"))
    g.add_argument("--rho", help="comma-separated mean parameters")
    g.add_argument("--beta", type=float)
    g.add_argument("--arch-b", choices=("bounded", "square"))
    g.add_argument("--alt", choices=tuple(mc.ALTERNATIVES))
    g.add_argument("--h", type=float)
    g.add_argument("--hprime", type=float)
    g.add_argument("--noise", choices=("gaussian", "student"))
    g.add_argument("--dof", type=int)
    g.add_argument("--burnin", type=int)


def _add_experiment(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--n-list", help="comma-separated sample sizes")
    g.add_argument("--m", type=int, help="replicates per (n, a)")
    g.add_argument("--a-grid", help="comma-separated values of a")
    g.add_argument("--policies", help="subset of true,lse,discrete,mde")
    g.add_argument("--alpha", type=float)
    g.add_argument("--c", type=float, help="discretization mesh constant")
    g.add_argument("--component", type=int, help="mean parameter corrected by the MDE")
    g.add_argument("--constants-mode", choices=("analytic", "ergodic", "zero"))
    g.add_argument("--n-aux", type=int)
    g.add_argument("--tau-mode", choices=("aux", "plugin"))
    g.add_argument("--power-convention", choices=("lecam", "paper"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lantest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lantest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one path and write it as CSV")
    _add_global(p)
    _add_model(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--a", type=float, help="simulate under the alternative with this a")

    for name, helptext in (("power", "empirical power curves"),
                           ("size", "empirical size under the null"),
                           ("lan-check", "LAN residual and g-term condition diagnostics"),
                           ("estimator-check", "estimator and central-sequence shift diagnostics")):
        p = sub.add_parser(name, help=helptext)
        _add_global(p)
        _add_model(p)
        _add_experiment(p)

    p = sub.add_parser("score-audit", help="check the score regularity conditions")
    _add_global(p)
    p.add_argument("--noise", choices=("gaussian", "student"), default="gaussian")
    p.add_argument("--dof", type=int, default=5)
    p.add_argument("--grid-halfwidth", type=float, default=50.0)
    p.add_argument("--grid-step", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-6)
    return parser


def config_from_args(args) -> ExperimentConfig:
    file_values = load_file(args.config) if args.config else {}
    overrides = {}
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if getattr(args, "command", None) == "simulate":
        overrides["n_list"] = (args.n,)
    return build_config(args.preset, file_values, overrides)


# -- checks used by --assert ---------------------------------------------------

def _nonincreasing(values, slack=0.10) -> bool:
    return all(b <= a * (1 + slack) for a, b in zip(values, values[1:]))


def assert_checks(kind: str, result: mc.ExperimentResult) -> dict:
    cfg = result.config
    checks = {}
    if kind == mc.POWER:
        band = 2 * math.sqrt(cfg.alpha * (1 - cfg.alpha) / cfg.m)
        zero = [r for r in result.rows if r["a"] == 0.0]
        checks["size_at_a0"] = all(abs(r["rejection_rate"] - cfg.alpha) <= band for r in zero)
    elif kind == mc.SIZE:
        band = 3 * math.sqrt(cfg.alpha * (1 - cfg.alpha) / cfg.m)
        checks["size_band"] = all(abs(r["rejection_rate"] - cfg.alpha) <= band
                                  for r in result.rows)
    elif kind == mc.LAN:
        for a in cfg.a_grid:
            seq = [result.row(n=n, a=a)["median_abs_lan_residual"] for n in cfg.n_list]
            checks[f"lan_residual_trend_a={a!r}"] = _nonincreasing(seq)
    elif kind == mc.ESTIMATOR:
        checks["fallback_in_unit_interval"] = all(0 <= r["fallback_fraction"] <= 1
                                                  for r in result.rows)
        for a in cfg.a_grid:
            seq = [result.row(n=n, a=a)["median_shift_residual"] for n in cfg.n_list]
            checks[f"shift_residual_trend_a={a!r}"] = _nonincreasing(seq)
    rates = [r.get("rejection_rate") for r in result.rows if "rejection_rate" in r]
    checks["rates_in_unit_interval"] = all(0 <= x <= 1 for x in rates if not math.isnan(x))
    return checks


# -- commands -----------------------------------------------------------------

def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_simulate(args) -> int:
    started = _now()
    cfg = config_from_args(args)
    model, noise = mc.build_model(cfg), mc.build_noise(cfg)
    n = args.n
    rng = make_rng(derive_seed(cfg.seed, "simulate", n))
    width = mc.build_alt(cfg, 1.0).lags
    if args.a is None:
        path = simulate_null(model, noise, n, cfg.burnin, rng, width=width)
    else:
        path = simulate_alternative(model, mc.build_alt(cfg, args.a), noise, n, cfg.burnin,
                                    rng, width=width)
    out = _out_dir(args)
    rows = [{"i": i, "y": float(y), "eps": float(e)}
            for i, (y, e) in enumerate(zip(path.y, path.eps), start=1)]
    f = write_csv(out / "path.csv", rows, ("i", "y", "eps"))
    write_manifest(out, "simulate", cfg, cfg.seed, [f], started,
                   {"n": n, "a": args.a, "regime": path.regime})
    print(f"wrote {f} ({n} rows, {path.regime})")
    return EXIT_OK


_TABLE_NAMES = {mc.POWER: "power", mc.SIZE: "size", mc.LAN: "lan", mc.ESTIMATOR: "estimator"}


def _run_experiment(kind: str, args) -> int:
    started = _now()
    cfg = config_from_args(args)
    result = mc.RUNNERS[kind](cfg)
    out = _out_dir(args)
    name = _TABLE_NAMES[kind]
    files = []
    if kind in (mc.POWER, mc.SIZE):
        files.append(write_csv(out / f"{name}.csv", result.rows, mc.POWER_COLUMNS))
        files.append(write_csv(out / f"{name}_full.csv", result.rows))
    else:
        files.append(write_csv(out / f"{name}.csv", result.rows))
    files.append(write_csv(out / "records.csv", result.records))
    checks = assert_checks(kind, result)
    files.append(write_json(out / "report.json", {"kind": kind, "checks": checks,
                                                  "meta": result.meta,
                                                  "config_hash": result.config_hash}))
    write_manifest(out, args.command, cfg, cfg.seed, files, started)
    for r in result.rows:
        print(" ".join(f"{k}={format_value(r[k])}" for k in list(r)[:6]))
    if args.check and not all(checks.values()):
        failed = [k for k, ok in checks.items() if not ok]
        print(f"assertion checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_score_audit(args) -> int:
    started = _now()
    noise = (score.NoiseSpec.student(args.dof) if args.noise == "student"
             else score.NoiseSpec.gaussian())
    report = score.audit_regularity(noise, args.grid_halfwidth, args.grid_step, args.tol)
    out = _out_dir(args)
    payload = report.to_dict()
    payload["moments"] = score.moments(noise, method="quadrature").as_dict()
    f = write_json(out / "audit.json", payload)
    g = write_csv(out / "audit.csv", [
        {"name": it.name, "value": it.value,
         "target": "" if it.target is None else it.target,
         "bound": "" if it.bound is None else it.bound, "passed": it.passed}
        for it in report.items])
    write_manifest(out, "score-audit", None, args.seed, [f, g], started,
                   {"noise": noise.label()})
    for it in report.items:
        ref = f"target={it.target!r}" if it.target is not None else f"bound={it.bound!r}"
        print(f"{'PASS' if it.passed else 'FAIL'} {it.name} value={it.value!r} {ref}")
    # a failed audit is the command's own result, so it is always an error exit
    return EXIT_OK if report.passed else EXIT_ASSERT


COMMANDS = {
    "simulate": cmd_simulate,
    "power": lambda a: _run_experiment(mc.POWER, a),
    "size": lambda a: _run_experiment(mc.SIZE, a),
    "lan-check": lambda a: _run_experiment(mc.LAN, a),
    "estimator-check": lambda a: _run_experiment(mc.ESTIMATOR, a),
    "score-audit": cmd_score_audit,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LantestError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
