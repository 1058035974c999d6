"""Self-checks run by ``expo-entropy validate``.

Each check returns a :class:`CheckResult` carrying its largest measured
residual and the tolerance it was held to.  Numerical exceptions inside a
check are reported as a failure of that check, never propagated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ExpoEntropyError
from .estimators import bz_closed_form_k2, bz_offset
from .losses import _closed_form, _numeric_root, check_dominance_condition, compute_constants, linex_loss, squared_error_loss
from .numerics import DEFAULT_QUAD, QuadratureSpec, trigamma
from .sampling import SchemeConfig, generate_batch, reduce_batch
from .simulation import SimulationPlan, pri_table, scan_table
from .streams import replication_exponentials, stream_key

__all__ = [
    "CheckResult",
    "IID_GRID",
    "RECORD_GRID",
    "table_grid",
    "run_suite",
]

IID_GRID = ((0.1, 0.2, 0.4, 0.7), (0.1, 0.2, 0.5, 0.6, 0.7, 0.8))
RECORD_GRID = ((0.1, 0.5, 0.7, 0.9), (0.1, 0.2, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.3, 1.5))
CONSTANT_GRID = tuple(itertools.product((2, 3), (4, 6, 8)))
LINEX_A = (-0.5, 1.0, 2.0)
BZ_Z = (0.1, 0.25, 0.5, 1.0, 2.0)


def table_grid(grid) -> list[tuple[float, float]]:
    """``(theta_1, theta_2)`` cells, ordered by theta_2 then theta_1."""
    theta2s, theta1s = grid
    return [(t1, t2) for t2 in theta2s for t1 in theta1s]


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("residual", "tolerance"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out


def _losses():
    yield squared_error_loss()
    for a in LINEX_A:
        yield linex_loss(a)


def check_constants(tol: float = 1e-9, quad: QuadratureSpec = DEFAULT_QUAD, inject: float = 0.0) -> CheckResult:
    """Numerical roots against closed forms; ``inject`` perturbs the closed forms (negative control)."""
    worst = 0.0
    for k, n in CONSTANT_GRID:
        for loss in _losses():
            for shape in (k * (n - 1), k * n):
                if loss.kind == "linex" and loss.linex_a <= -shape:
                    continue
                ref = _closed_form(loss, shape) + inject
                worst = max(worst, abs(_numeric_root(loss, shape, quad) - ref))
    return CheckResult("constants", worst <= tol, worst, tol)


def check_dominance_condition_grid(quad: QuadratureSpec = DEFAULT_QUAD, tol: float = 1e-10) -> CheckResult:
    worst_value = -math.inf
    for k, n in CONSTANT_GRID:
        for loss in _losses():
            c = compute_constants(loss, k, n, quad)
            worst_value = max(worst_value, check_dominance_condition(loss, k, n, c, quad))
    loss = squared_error_loss()
    exact = check_dominance_condition(loss, 2, 4, compute_constants(loss, 2, 4, quad), quad)
    residual = abs(exact + 13.0 / 21.0)
    return CheckResult(
        "dominance_condition",
        worst_value < 0 and residual <= tol,
        residual,
        tol,
        f"largest value {worst_value:.6g}",
    )


def check_bz_cross_oracle(tol: float = 1e-7, quad: QuadratureSpec = DEFAULT_QUAD) -> CheckResult:
    worst = 0.0
    for n in (4, 6):
        for loss in (squared_error_loss(), linex_loss(1.0)):
            c = compute_constants(loss, 2, n, quad)
            for z in itertools.product(BZ_Z, repeat=2):
                root = bz_offset(np.array(z), c, loss, quad)
                closed = bz_closed_form_k2(loss.kind, loss.linex_a, n, z)
                worst = max(worst, abs(root - closed))
    return CheckResult("bz_cross_oracle", worst <= tol, worst, tol)


def check_bz_limits(quad: QuadratureSpec = DEFAULT_QUAD, tol: float = 1e-4) -> CheckResult:
    worst = 0.0
    ordered = True
    for n in (4, 6):
        for loss in (squared_error_loss(), linex_loss(1.0)):
            c = compute_constants(loss, 2, n, quad)
            worst = max(worst, abs(bz_offset(np.full(2, 1e-6), c, loss, quad) - c.p0))
            worst = max(worst, abs(bz_offset(np.full(2, 1e3), c, loss, quad) - c.q0))
            d = np.array([[bz_offset(np.array([a, b]), c, loss, quad) for b in BZ_Z] for a in BZ_Z])
            ordered &= bool(np.all(np.diff(d, axis=0) >= 0) and np.all(np.diff(d, axis=1) >= 0))
            ordered &= bool(np.all((c.p0 < d) & (d < c.q0)))
    return CheckResult("bz_limits_monotone", worst <= tol and ordered, worst, tol, f"ordered={ordered}")


def _moment_schemes(k: int = 2, n: int = 4) -> list[SchemeConfig]:
    return [
        SchemeConfig("iid", k, n),
        SchemeConfig("record", k, n),
        SchemeConfig.type2(k, n, n + 3),
        SchemeConfig.progressive(k, n + 4, (1, 0, 2, 1)[:n] if n == 4 else (0,) * (n - 1) + (4,)),
    ]


def check_moments(reps: int = 100_000, seed: int = 7, z_crit: float = 4.0) -> CheckResult:
    """``S`` is gamma(shape_m) and ``X_i - c theta_i`` is unit exponential, for every scheme."""
    worst = 0.0
    theta = (0.3, 1.1)
    for idx, scheme in enumerate(_moment_schemes()):
        expo = replication_exponentials(stream_key(seed, idx), 0, reps, scheme.k * scheme.draws_per_population)
        x, s = reduce_batch(scheme, generate_batch(scheme, theta, 1.0, expo.reshape(reps, scheme.k, -1)))
        m = scheme.shape_m
        excess = x - scheme.minimum_multiplier * np.asarray(theta)
        # (statistic, mean, standard error) triples
        stats = [
            (s.mean(), m, math.sqrt(m / reps)),
            (s.var(ddof=1), m, math.sqrt((2 * m**2 + 6 * m) / reps)),
            (excess.mean(), 1.0, math.sqrt(1.0 / (reps * scheme.k))),
        ]
        worst = max(worst, max(abs(v - mu) / se for v, mu, se in stats))
    return CheckResult("moment_oracles", bool(worst <= z_crit), float(worst), z_crit, "residual in standard errors")


def check_mrie_risk(reps: int = 20_000, seed: int = 11, z_crit: float = 3.0, workers: int | None = None) -> CheckResult:
    worst = 0.0
    loss = squared_error_loss()
    for scheme in _moment_schemes():
        plan = SimulationPlan(scheme, [(0.2, 0.6)], loss, estimators=("mrie",), replications=reps, master_seed=seed)
        row = pri_table(plan, workers).rows[0]
        worst = max(worst, abs(row.risk - trigamma(scheme.shape_m)) / row.std_err)
    return CheckResult("mrie_exact_risk", worst <= z_crit, worst, z_crit, "residual in standard errors")


def check_dominance_scan(
    full: bool = False, reps: int = 20_000, seed: int = 2024, workers: int | None = None
) -> CheckResult:
    runs = [("iid", IID_GRID, squared_error_loss())]
    if full:
        runs += [("iid", IID_GRID, linex_loss(1.0)), ("record", RECORD_GRID, squared_error_loss()), ("record", RECORD_GRID, linex_loss(1.0))]
    flags = []
    checked = 0
    worst = -math.inf
    for kind, grid, loss in runs:
        for n in (4, 6, 8):
            plan = SimulationPlan(
                SchemeConfig(kind, 2, n), table_grid(grid), loss, replications=reps, master_seed=seed
            )
            table = pri_table(plan, workers)
            report = scan_table(table)
            checked += report.checked
            for row in table.rows:
                if row.estimator != "mrie":
                    base = table.baseline(row.theta)
                    worst = max(worst, (row.risk - base.risk) / math.hypot(row.std_err, base.std_err))
            flags += [f"{kind} n={n} {loss.name} {f['estimator']} theta={f['theta']}" for f in report.flags]
    detail = f"{len(flags)} of {checked} cells flagged" + (f"; first: {flags[0]}" if flags else "")
    return CheckResult("dominance_scan", not flags, worst, 2.0, detail)


def _guard(name: str, fn: Callable[[], CheckResult], tolerance: float) -> CheckResult:
    try:
        return fn()
    except (ExpoEntropyError, ArithmeticError, ValueError) as err:
        return CheckResult(name, False, math.nan, tolerance, f"{type(err).__name__}: {err}")


def run_suite(
    grid: str = "default",
    tol: float | None = None,
    inject_constant_error: float = 0.0,
    reps: int = 20_000,
    workers: int | None = None,
) -> list[CheckResult]:
    """All checks.  ``tol`` overrides the quadrature cross-check tolerances and tightens the quadrature itself."""
    if grid not in ("default", "full"):
        raise ValueError(f"grid must be default or full, got {grid!r}")
    quad = DEFAULT_QUAD
    const_tol, bz_tol = 1e-9, 1e-7
    if tol is not None:
        const_tol = bz_tol = tol
        quad = QuadratureSpec(abs_tol=tol, rel_tol=tol)
    return [
        _guard("constants", lambda: check_constants(const_tol, quad, inject_constant_error), const_tol),
        _guard("dominance_condition", lambda: check_dominance_condition_grid(quad), 1e-10),
        _guard("bz_cross_oracle", lambda: check_bz_cross_oracle(bz_tol, quad), bz_tol),
        _guard("bz_limits_monotone", lambda: check_bz_limits(quad), 1e-4),
        _guard("moment_oracles", check_moments, 4.0),
        _guard("mrie_exact_risk", lambda: check_mrie_risk(reps, workers=workers), 3.0),
        _guard("dominance_scan", lambda: check_dominance_scan(grid == "full", reps, workers=workers), 2.0),
    ]
