"""``expo-entropy`` command-line entry point.

Subcommands::

    estimate   --config PATH --data PATH [--out PATH] [--format csv|json]
    risk-table --config PATH --out PATH [--reps N] [--seed S] [--format csv|json]
    validate   [--grid default|full] [--reps N] [--tol T] [--out PATH]

The worker count for simulations comes from ``EXPO_ENTROPY_WORKERS``
(unset means one worker per CPU).  Exit status is 0 iff nothing went wrong.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from .errors import ExpoEntropyError
from .estimators import SufficientStats, bayes_squared_error, brewster_zidek, mrie, stein
from .losses import compute_constants
from .report_io import ConfigError, RunConfig, load_config, read_populations, write_tables
from .sampling import reduce
from .simulation import SimulationPlan, pri_table
from .validation import run_suite

log = logging.getLogger("expo_entropy")

ESTIMATE_FIELDS = ("estimator", "theta_hat", "shannon", "renyi_alpha", "renyi", "clipped", "fallback_branch")


def _estimate_rows(cfg: RunConfig, raw: list) -> list[dict]:
    scheme = cfg.scheme_config()
    loss = cfg.loss_model()
    stats: SufficientStats = reduce(scheme, raw)
    constants = compute_constants(loss, scheme.k, scheme.n, shape_m=scheme.shape_m)
    reports = []
    for name in cfg.estimators:
        if name == "mrie":
            reports.append(mrie(stats, constants, cfg.alpha))
        elif name == "stein":
            reports.append(stein(stats, constants, cfg.alpha))
        elif name == "bz":
            reports.append(brewster_zidek(stats, constants, loss, alpha=cfg.alpha))
        elif name == "bayes":
            if scheme.kind != "iid" or loss.kind != "squared_error":
                raise ConfigError("the bayes estimator needs scheme = iid and loss = squared_error")
            reports.append(bayes_squared_error(raw, cfg.mu0, cfg.sigma0, cfg.nu, cfg.alpha))
        else:
            raise ConfigError(f"unknown estimator {name!r}; expected mrie, stein, bz or bayes")
    rows = []
    for rep in reports:
        alpha, renyi = rep.renyi_alpha if rep.renyi_alpha is not None else (None, None)
        rows.append(
            {
                "estimator": rep.estimator,
                "theta_hat": rep.theta_hat,
                "shannon": rep.shannon,
                "renyi_alpha": alpha,
                "renyi": renyi,
                "clipped": rep.clipped,
                "fallback_branch": rep.fallback_branch,
            }
        )
    return rows


def _render_estimates(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in r.items()} for r in rows]
        return json.dumps(clean, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ESTIMATE_FIELDS)
    for r in rows:
        writer.writerow(["NA" if r[f] is None else (repr(r[f]) if isinstance(r[f], float) else r[f]) for f in ESTIMATE_FIELDS])
    return buf.getvalue()


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    fmt = args.format or cfg.output_format
    text = _render_estimates(_estimate_rows(cfg, read_populations(args.data)), fmt)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_risk_table(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise ConfigError("risk-table needs a seed (config key 'seed' or --seed)")
    if not cfg.theta_grid:
        raise ConfigError("risk-table needs a theta_grid")
    reps = args.reps if args.reps is not None else cfg.replications
    unknown = set(cfg.estimators) - {"mrie", "stein", "bz"}
    if unknown:
        raise ConfigError(f"risk-table supports mrie, stein and bz, not {sorted(unknown)}")
    estimators = ["mrie"] + [e for e in cfg.estimators if e != "mrie"]
    loss = cfg.loss_model()
    tables = []
    for n in cfg.n_values:
        plan = SimulationPlan(
            scheme=cfg.scheme_config(n),
            theta_grid=cfg.theta_grid,
            loss=loss,
            sigma=cfg.sigma,
            estimators=estimators,
            replications=reps,
            master_seed=seed,
            common_random_numbers=cfg.common_random_numbers,
        )
        log.info("n=%d: %d cells x %d replications", n, len(cfg.theta_grid), reps)
        tables.append(pri_table(plan))
    write_tables(tables, args.out, args.format or cfg.output_format)
    return 0


def cmd_validate(args) -> int:
    results = run_suite(
        grid=args.grid, tol=args.tol, inject_constant_error=args.inject_constant_error, reps=args.reps
    )
    text = json.dumps({"passed": all(r.passed for r in results), "checks": [r.as_dict() for r in results]}, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    for r in results:
        if not r.passed:
            print(f"error: check {r.name} failed (residual {r.residual:.3g}, tolerance {r.tolerance:.3g}) {r.detail}", file=sys.stderr)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expo-entropy", description="Entropy estimation for several exponential populations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate ln sigma and entropy from data")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="one population per line")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("risk-table", help="simulate risks and PRIs over a theta grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_risk_table)

    p = sub.add_parser("validate", help="run the numerical and Monte Carlo self-checks")
    p.add_argument("--grid", choices=("default", "full"), default="default")
    p.add_argument("--reps", type=int, default=20_000)
    p.add_argument("--tol", type=float, help="override the quadrature cross-check tolerance")
    p.add_argument("--out")
    p.add_argument("--inject-constant-error", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ExpoEntropyError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
