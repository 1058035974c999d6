"""Monte Carlo risk estimation and percentage risk improvement (PRI) tables.

Replication ``b`` of cell ``c`` draws from the substream addressed by
``(master_seed, c, b)`` (see :mod:`expo_entropy.streams`); replications are
processed in fixed-size chunks and merged in chunk order, so a table is
bit-identical for any worker count.  With ``common_random_numbers`` (the
default) every theta cell uses stream 0, which makes PRI differences
between cells smooth in theta.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, DomainError, SimulationError
from .estimators import bz_batch, mrie_batch, stein_batch
from .losses import LossConstants, LossModel, compute_constants
from .numerics import DEFAULT_QUAD, QuadratureSpec
from .sampling import SchemeConfig, generate_batch, reduce_batch
from .streams import replication_exponentials, stream_key

__all__ = [
    "SimulationPlan",
    "RiskRow",
    "RiskTable",
    "DominanceReport",
    "estimate_risk",
    "pri_table",
    "dominance_scan",
    "scan_table",
    "resolve_workers",
]

WORKERS_ENV = "EXPO_ENTROPY_WORKERS"
MAX_FAILED_FRACTION = 0.0

EstimatorSpec = Union[str, Callable]


@dataclass(frozen=True)
class BatchContext:
    constants: LossConstants
    loss: LossModel
    quad: QuadratureSpec


def _builtin(name: str) -> Callable:
    if name == "mrie":
        return lambda x, s, ctx: mrie_batch(x, s, ctx.constants)
    if name == "stein":
        return lambda x, s, ctx: stein_batch(x, s, ctx.constants)
    if name == "bz":
        return lambda x, s, ctx: bz_batch(x, s, ctx.constants, ctx.loss, ctx.quad)
    raise DomainError(f"unknown estimator {name!r}; expected mrie, stein or bz")


def estimator_name(spec: EstimatorSpec) -> str:
    if isinstance(spec, str):
        return spec
    return getattr(spec, "estimator_name", spec.__name__)


@dataclass(frozen=True)
class SimulationPlan:
    """Everything that determines a risk table.

    Custom estimators are callables ``f(x, s, ctx) -> theta_hat`` over
    batches (``x`` of shape ``(B, k)``); they must be importable top-level
    functions when more than one worker is used.
    """

    scheme: SchemeConfig
    theta_grid: tuple
    loss: LossModel
    sigma: float = 1.0
    estimators: tuple = ("mrie", "stein", "bz")
    replications: int = 20_000
    master_seed: int = 0
    common_random_numbers: bool = True
    chunk_size: int = 5_000
    quad: QuadratureSpec = DEFAULT_QUAD
    constants: Optional[LossConstants] = field(default=None, compare=False)

    def __post_init__(self):
        grid = tuple(tuple(float(t) for t in theta) for theta in self.theta_grid)
        object.__setattr__(self, "theta_grid", grid)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not grid or any(len(t) != self.scheme.k for t in grid):
            raise DomainError(f"theta_grid must hold vectors of length {self.scheme.k}")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if self.replications < 1 or self.chunk_size < 1:
            raise DomainError("replications and chunk_size must be positive")
        names = [estimator_name(e) for e in self.estimators]
        if "mrie" not in names:
            raise ContractError("the estimator list must include mrie, the PRI baseline")
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate estimator names in {names}")
        for e in self.estimators:
            if isinstance(e, str):
                _builtin(e)
        if self.constants is None:
            constants = compute_constants(
                self.loss, self.scheme.k, self.scheme.n, self.quad, shape_m=self.scheme.shape_m
            )
            object.__setattr__(self, "constants", constants)

    @property
    def estimator_names(self) -> list[str]:
        return [estimator_name(e) for e in self.estimators]

    def stream_id(self, cell: int) -> int:
        return 0 if self.common_random_numbers else cell


def _run_chunk(plan: SimulationPlan, cell: int, theta: tuple, start: int, count: int):
    scheme = plan.scheme
    key = stream_key(plan.master_seed, plan.stream_id(cell))
    expo = replication_exponentials(key, start, count, scheme.k * scheme.draws_per_population)
    obs = generate_batch(scheme, theta, plan.sigma, expo.reshape(count, scheme.k, -1))
    x, s = reduce_batch(scheme, obs)
    ctx = BatchContext(plan.constants, plan.loss, plan.quad)
    target = math.log(plan.sigma)
    losses = {}
    for spec in plan.estimators:
        fn = _builtin(spec) if isinstance(spec, str) else spec
        with np.errstate(all="ignore"):
            est = np.asarray(fn(x, s, ctx), dtype=float)
            losses[estimator_name(spec)] = np.asarray(plan.loss.eval(est - target), dtype=float)
    return cell, start, losses


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _simulate(plan: SimulationPlan, cells: Sequence[int], workers: int | None) -> dict:
    jobs = [
        (plan, cell, plan.theta_grid[cell], start, min(plan.chunk_size, plan.replications - start))
        for cell in cells
        for start in range(0, plan.replications, plan.chunk_size)
    ]
    workers = min(resolve_workers(workers), len(jobs))
    if workers == 1:
        results = [_run_chunk(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, *zip(*jobs)))
    merged: dict = {cell: {name: [] for name in plan.estimator_names} for cell in cells}
    for cell, _start, losses in results:  # pool.map preserves job order
        for name, arr in losses.items():
            merged[cell][name].append(arr)
    return {cell: {name: np.concatenate(parts) for name, parts in per.items()} for cell, per in merged.items()}


def _finite(losses: np.ndarray, reps: int, label: str) -> np.ndarray:
    ok = np.isfinite(losses)
    failed = reps - int(ok.sum())
    if failed > MAX_FAILED_FRACTION * reps:
        raise SimulationError(f"{label}: {failed} of {reps} replications failed")
    return ok


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def estimate_risk(
    plan: SimulationPlan, theta: Sequence[float], estimator: EstimatorSpec, workers: int | None = None
) -> tuple[float, float]:
    """Monte Carlo risk and its standard error for one estimator at one theta.

    ``theta`` must be an entry of ``plan.theta_grid``; its position selects
    the substream when common random numbers are off.
    """
    theta = tuple(float(t) for t in theta)
    if theta not in plan.theta_grid:
        raise ContractError(f"theta {theta} is not in the plan's grid")
    cell = plan.theta_grid.index(theta)
    single = SimulationPlan(
        scheme=plan.scheme,
        theta_grid=plan.theta_grid,
        loss=plan.loss,
        sigma=plan.sigma,
        estimators=tuple({estimator_name(e): e for e in ("mrie", estimator)}.values()),
        replications=plan.replications,
        master_seed=plan.master_seed,
        common_random_numbers=plan.common_random_numbers,
        chunk_size=plan.chunk_size,
        quad=plan.quad,
        constants=plan.constants,
    )
    losses = _simulate(single, [cell], workers)[cell][estimator_name(estimator)]
    ok = _finite(losses, plan.replications, estimator_name(estimator))
    return _mean_se(losses[ok])


@dataclass(frozen=True)
class RiskRow:
    theta: tuple
    estimator: str
    risk: float
    std_err: float
    pri: float
    pri_std_err: float = math.nan  # paired standard error of the PRI, not serialised


@dataclass
class RiskTable:
    rows: list
    scheme: str = ""
    n: int = 0
    loss: str = ""
    replications: int = 0
    master_seed: int = 0

    def cell(self, theta: Sequence[float], estimator: str) -> RiskRow:
        theta = tuple(float(t) for t in theta)
        for row in self.rows:
            if row.theta == theta and row.estimator == estimator:
                return row
        raise KeyError((theta, estimator))

    def baseline(self, theta: Sequence[float]) -> RiskRow:
        return self.cell(theta, "mrie")


def pri_table(plan: SimulationPlan, workers: int | None = None) -> RiskTable:
    """Risk, standard error and PRI versus ``mrie`` for every (theta, estimator) cell."""
    cells = list(range(len(plan.theta_grid)))
    sims = _simulate(plan, cells, workers)
    rows = []
    for cell in cells:
        theta = plan.theta_grid[cell]
        per = sims[cell]
        ok = np.ones(plan.replications, dtype=bool)
        for name, arr in per.items():
            ok &= _finite(arr, plan.replications, f"{name} at theta={theta}")
        base = per["mrie"][ok]
        r0, _ = _mean_se(base)
        for name in plan.estimator_names:
            vals = per[name][ok]
            risk, se = _mean_se(vals)
            pri = (r0 - risk) / r0 * 100.0
            _, dse = _mean_se(base - vals)
            pri_se = dse / r0 * 100.0
            rows.append(RiskRow(theta, name, risk, se, pri, pri_se))
    return RiskTable(
        rows=rows,
        scheme=plan.scheme.kind,
        n=plan.scheme.n,
        loss=plan.loss.name if plan.loss.linex_a is None else f"{plan.loss.name}(a={plan.loss.linex_a:g})",
        replications=plan.replications,
        master_seed=plan.master_seed,
    )


@dataclass
class DominanceReport:
    """Cells where an improved estimator looks worse than the MRIE.

    A cell is flagged when its risk exceeds the MRIE risk by more than two
    combined standard errors ``sqrt(se**2 + se0**2)``.
    """

    flags: list
    checked: int

    @property
    def passed(self) -> bool:
        return not self.flags


def scan_table(table: RiskTable, margin: float = 2.0) -> DominanceReport:
    flags = []
    checked = 0
    for row in table.rows:
        if row.estimator == "mrie":
            continue
        base = table.baseline(row.theta)
        combined = math.hypot(row.std_err, base.std_err)
        checked += 1
        if row.risk > base.risk + margin * combined:
            flags.append(
                {
                    "theta": row.theta,
                    "estimator": row.estimator,
                    "risk": row.risk,
                    "mrie_risk": base.risk,
                    "excess_in_se": (row.risk - base.risk) / combined if combined > 0 else math.inf,
                }
            )
    return DominanceReport(flags, checked)


def dominance_scan(plan: SimulationPlan, workers: int | None = None) -> DominanceReport:
    return scan_table(pri_table(plan, workers))
