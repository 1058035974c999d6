"""Estimators of theta = ln sigma and the entropies derived from it.

All location-scale estimators share the form ``ln S + zeta(Z)`` with
``Z_i = X_i / S``:

* ``mrie``            zeta = q0
* ``stein``           zeta = min(q0, p0 + ln(1 + sum Z)) when every Z_i > 0
* ``brewster_zidek``  zeta = d(Z), the minimiser of the risk conditional on
  the scaled minima lying in the box (0, Z], when every Z_i > 0

Each has a scalar form that returns an :class:`EstimateReport` and a
vectorised ``*_batch`` form used by the Monte Carlo engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DomainError, NumericError
from .losses import LossConstants, LossModel
from .numerics import DEFAULT_QUAD, QuadratureSpec, digamma, gamma_expectation, gamma_log_grid, solve_monotone_root

__all__ = [
    "SufficientStats",
    "EstimateReport",
    "entropy_from_theta",
    "mrie",
    "stein",
    "brewster_zidek",
    "bz_offset",
    "bz_closed_form_k2",
    "bayes_squared_error",
    "mrie_batch",
    "stein_batch",
    "bz_offset_batch",
]

SCHEMES = ("iid", "record", "type2", "progressive2")


@dataclass(frozen=True)
class SufficientStats:
    """Reduced data: scaled minima ``x`` (one per population) and spacing sum ``s``."""

    x: tuple
    s: float
    k: int
    n: int
    shape_m: int
    scheme: str = "iid"

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if not (math.isfinite(self.s) and self.s > 0):
            raise DomainError(f"s must be positive and finite, got {self.s!r}")
        if len(self.x) != self.k:
            raise ContractError(f"expected {self.k} scaled minima, got {len(self.x)}")
        if self.k < 2 or self.n < 2 or self.shape_m < 1:
            raise DomainError("need k >= 2, n >= 2 and a positive gamma shape")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.x) / self.s

    def rescaled(self, a: float) -> "SufficientStats":
        """Statistics of the data multiplied by ``a > 0``."""
        return SufficientStats(tuple(a * v for v in self.x), a * self.s, self.k, self.n, self.shape_m, self.scheme)


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: float
    shannon: float
    estimator: str
    renyi_alpha: Optional[tuple] = None
    clipped: bool = False
    fallback_branch: bool = False

    @classmethod
    def build(cls, theta_hat: float, estimator: str, alpha: float | None = None, **flags) -> "EstimateReport":
        shannon, renyi = entropy_from_theta(theta_hat, alpha)
        return cls(
            theta_hat=float(theta_hat),
            shannon=shannon,
            estimator=estimator,
            renyi_alpha=None if alpha is None else (float(alpha), renyi),
            **flags,
        )


def entropy_from_theta(theta_hat: float, alpha: float | None = None) -> tuple[float, float | None]:
    """Shannon and (optionally) Renyi entropy of E(mu, sigma) given ln sigma."""
    shannon = 1.0 + theta_hat
    if alpha is None:
        return shannon, None
    alpha = float(alpha)
    if alpha < 0 or alpha == 1.0 or not math.isfinite(alpha):
        raise DomainError(f"Renyi order must be >= 0 and != 1, got {alpha!r}")
    if alpha == 0.0:
        return shannon, math.inf
    return shannon, theta_hat - math.log(alpha) / (1.0 - alpha)


def _check_constants(stats: SufficientStats, constants: LossConstants) -> None:
    if constants.shape_m != stats.shape_m or constants.shape_kn != stats.shape_m + stats.k:
        raise ContractError(
            f"constants for shapes ({constants.shape_m}, {constants.shape_kn}) do not match "
            f"stats with shape_m={stats.shape_m}, k={stats.k}"
        )


def mrie(stats: SufficientStats, constants: LossConstants, alpha: float | None = None) -> EstimateReport:
    """Minimum risk invariant estimator ``ln S + q0``."""
    _check_constants(stats, constants)
    return EstimateReport.build(math.log(stats.s) + constants.q0, "mrie", alpha)


def stein(stats: SufficientStats, constants: LossConstants, alpha: float | None = None) -> EstimateReport:
    _check_constants(stats, constants)
    z = stats.z
    if not np.all(z > 0):
        return EstimateReport.build(math.log(stats.s) + constants.q0, "stein", alpha, fallback_branch=True)
    candidate = constants.p0 + math.log1p(float(z.sum()))
    clipped = constants.q0 <= candidate
    shift = constants.q0 if clipped else candidate
    return EstimateReport.build(math.log(stats.s) + shift, "stein", alpha, clipped=clipped)


def _box_probability(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """prod_i (1 - exp(-v z_i)), broadcasting v against the trailing axis of z."""
    return np.prod(-np.expm1(-np.multiply.outer(v, z)), axis=-1)


def bz_offset(
    z: Sequence[float],
    constants: LossConstants,
    loss: LossModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """``d(z, 0)`` as the root of the conditional stationarity equation.

    Solves ``E[L'(ln V + d) w_z(V)] = 0`` with ``V ~ Gamma(shape_m, 1)`` and
    ``w_z(v) = prod_i (1 - exp(-v z_i))``, normalised by ``E[w_z(V)]`` so the
    root function stays O(1) for tiny ``z``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (constants.k,) or not np.all(z > 0):
        raise DomainError(f"z must hold {constants.k} positive values")
    m = constants.shape_m
    mass = gamma_expectation(lambda v: _box_probability(v, z), m, quad)
    if mass <= 0:
        raise NumericError(f"box probability underflowed for z={z!r}")

    def g(d):
        return gamma_expectation(lambda v: loss.deriv(np.log(v) + d) * _box_probability(v, z) / mass, m, quad)

    lo, hi = constants.p0 - 0.5, constants.q0 + 0.5
    return solve_monotone_root(g, 0.5 * (lo + hi), bracket=(lo, hi))


def brewster_zidek(
    stats: SufficientStats,
    constants: LossConstants,
    loss: LossModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
    alpha: float | None = None,
    method: str = "root",
) -> EstimateReport:
    """Smooth improved estimator ``ln S + d(Z, 0)``; ``ln S + q0`` unless all Z_i > 0.

    ``method="closed"`` uses the two-population closed forms instead of
    the numerical root.
    """
    _check_constants(stats, constants)
    z = stats.z
    if not np.all(z > 0):
        return EstimateReport.build(math.log(stats.s) + constants.q0, "bz", alpha, fallback_branch=True)
    if method == "root":
        d = bz_offset(z, constants, loss, quad)
    elif method == "closed":
        if stats.k != 2:
            raise ContractError("closed-form Brewster-Zidek offset needs k = 2")
        d = float(_bz_k2(z[0], z[1], constants.shape_m, loss.kind, loss.linex_a))
    else:
        raise DomainError(f"unknown method {method!r}")
    return EstimateReport.build(math.log(stats.s) + d, "bz", alpha)


def _log_box_mass_k2(z1, z2, s):
    """log of 1 - (1+z1)^-s - (1+z2)^-s + (1+z1+z2)^-s, free of cancellation."""
    l1, l2 = np.log1p(z1), np.log1p(z2)
    c = np.log1p(z1 * z2 / (1.0 + z1 + z2))
    a12 = np.exp(-s * (l1 + l2))
    return np.log(np.expm1(-s * l1) * np.expm1(-s * l2) + a12 * np.expm1(s * c))


def _bz_k2(z1, z2, m, kind, a=None):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if kind == "squared_error":
        # d = -psi(m) - D/B, D = dB/ds at s = m, differentiated term by term
        # from the cancellation-free form of B.
        l1, l2 = np.log1p(z1), np.log1p(z2)
        c = np.log1p(z1 * z2 / (1.0 + z1 + z2))
        a1, a2 = np.exp(-m * l1), np.exp(-m * l2)
        om1, om2 = -np.expm1(-m * l1), -np.expm1(-m * l2)
        em = np.expm1(m * c)
        b = om1 * om2 + a1 * a2 * em
        db = l1 * a1 * om2 + l2 * a2 * om1 - (l1 + l2) * a1 * a2 * em + c * a1 * a2 * (em + 1.0)
        return -digamma(m) - db / b
    if kind == "linex":
        if a is None or a <= -m:
            raise DomainError(f"linex closed form needs a > {-m}")
        log_ratio = (
            math.lgamma(m + a) - math.lgamma(m) + _log_box_mass_k2(z1, z2, m + a) - _log_box_mass_k2(z1, z2, m)
        )
        return -log_ratio / a
    raise DomainError(f"no closed form for loss kind {kind!r}")


def bz_closed_form_k2(loss_kind: str, a: float | None, n: int, z: Sequence[float]) -> float:
    """Two-population closed form of ``d(z, 0)`` with gamma shape ``2n - 2``.

    For linex the value is ``-(1/a) ln(E_w[V^a])`` where ``E_w`` is the
    expectation under the weight ``exp(-v) v^(2n-3) prod(1 - exp(-v z_i))``
    normalised to one.
    """
    z1, z2 = (float(v) for v in z)
    if not (z1 > 0 and z2 > 0):
        raise DomainError("closed form needs z1 > 0 and z2 > 0")
    if n < 2:
        raise DomainError("n must be at least 2")
    return float(_bz_k2(z1, z2, 2 * n - 2, loss_kind, a))


def bayes_squared_error(
    raw_data: Sequence[Sequence[float]],
    mu0: float,
    sigma0: float,
    nu: float,
    alpha: float | None = None,
) -> EstimateReport:
    """Posterior mean of ln sigma under the exponential-location / inverse-gamma prior.

    With ``c_i = min(x_i(1), mu0)`` the marginal posterior of sigma satisfies
    ``A / sigma ~ Gamma(nk + nu)``, where
    ``A = k mu0 + sigma0 + sum x_ij - (n + 1) sum c_i``, so the estimate is
    ``ln A - psi(nk + nu)``.  The ``c_i`` term vanishes when ``mu0 = 0`` and
    the data are nonnegative.
    """
    pops = [np.asarray(p, dtype=float) for p in raw_data]
    k = len(pops)
    if k < 1 or any(p.ndim != 1 or p.size == 0 for p in pops):
        raise DomainError("raw_data must be a non-empty list of non-empty vectors")
    n = pops[0].size
    if any(p.size != n for p in pops):
        raise ContractError("all populations must have the same size")
    if not (sigma0 > 0 and nu > 0):
        raise DomainError("sigma0 and nu must be positive")
    cut = np.array([min(p.min(), mu0) for p in pops])
    total = k * mu0 + sigma0 + sum(p.sum() for p in pops) - (n + 1) * cut.sum()
    if not total > 0:
        raise DomainError(f"posterior scale is not positive ({total!r})")
    return EstimateReport.build(math.log(total) - digamma(n * k + nu), "bayes", alpha)


# ----------------------------------------------------------------------------
# Vectorised forms: x has shape (B, k), s has shape (B,).


def mrie_batch(x: np.ndarray, s: np.ndarray, constants: LossConstants) -> np.ndarray:
    return np.log(s) + constants.q0


def stein_batch(x: np.ndarray, s: np.ndarray, constants: LossConstants) -> np.ndarray:
    z = x / s[:, None]
    positive = np.all(z > 0, axis=1)
    with np.errstate(invalid="ignore"):
        candidate = constants.p0 + np.log1p(np.where(positive, z.sum(axis=1), 0.0))
    shift = np.where(positive, np.minimum(constants.q0, candidate), constants.q0)
    return np.log(s) + shift


class _GridOffset:
    """Vectorised d(z, 0) on a fixed log-space grid, for k > 2."""

    def __init__(self, shape_m: int, step: float = 0.05):
        self.v, self.w = gamma_log_grid(shape_m, step)
        self.logv = np.log(self.v)

    def __call__(self, z: np.ndarray, kind: str, a: float | None) -> np.ndarray:
        # weights per (replication, node)
        wz = self.w * np.prod(-np.expm1(-z[:, None, :] * self.v[None, :, None]), axis=2)
        mass = wz.sum(axis=1)
        if kind == "squared_error":
            return -(wz @ self.logv) / mass
        return -np.log((wz @ self.v**a) / mass) / a


def bz_offset_batch(
    z: np.ndarray,
    constants: LossConstants,
    loss: LossModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
    chunk: int = 2048,
) -> np.ndarray:
    """d(z, 0) for every row of ``z`` (all entries positive)."""
    z = np.asarray(z, dtype=float)
    k = z.shape[1]
    kind = loss.kind
    if kind != "custom" and k == 2:
        return _bz_k2(z[:, 0], z[:, 1], constants.shape_m, kind, loss.linex_a)
    if kind != "custom":
        grid = _GridOffset(constants.shape_m)
        return np.concatenate([grid(z[i : i + chunk], kind, loss.linex_a) for i in range(0, len(z), chunk)])
    return np.array([bz_offset(row, constants, loss, quad) for row in z])


def bz_batch(
    x: np.ndarray,
    s: np.ndarray,
    constants: LossConstants,
    loss: LossModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> np.ndarray:
    z = x / s[:, None]
    positive = np.all(z > 0, axis=1)
    shift = np.full(len(s), constants.q0)
    if positive.any():
        shift[positive] = bz_offset_batch(z[positive], constants, loss, quad)
    return np.log(s) + shift
