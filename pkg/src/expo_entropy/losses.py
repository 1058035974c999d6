"""Location-invariant bowl-shaped losses and their optimal constants.

For ``V ~ Gamma(m, 1)`` the best invariant estimator ``ln S + q0`` uses the
root ``q0`` of ``E[L'(ln V + c)] = 0``; the Stein constant ``p0`` is the root
of the same equation with the shape raised by the number of populations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DomainError, NumericError
from .numerics import DEFAULT_QUAD, QuadratureSpec, digamma, gamma_expectation, solve_monotone_root

__all__ = [
    "LossModel",
    "LossConstants",
    "squared_error_loss",
    "linex_loss",
    "loss_from_name",
    "compute_constants",
    "check_dominance_condition",
    "stationarity",
]

_BOWL_GRID = np.linspace(-4.0, 4.0, 161)
CROSS_CHECK_TOL = 1e-8


@dataclass(frozen=True)
class LossModel:
    """A loss ``L(t)`` of the estimation error ``t = estimate - ln sigma``.

    ``eval`` and ``deriv`` must be vectorised over numpy arrays.  The bowl
    shape is checked on a grid at construction.
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    linex_a: Optional[float] = None

    def __post_init__(self):
        t = _BOWL_GRID
        vals = np.asarray(self.eval(t), dtype=float)
        grads = np.asarray(self.deriv(t), dtype=float)
        neg, pos = t < 0, t > 0
        if np.any(vals < 0):
            raise DomainError(f"loss {self.name!r} takes negative values")
        if np.any(np.diff(vals[t <= 0]) > 0) or np.any(np.diff(vals[t >= 0]) < 0):
            raise DomainError(f"loss {self.name!r} is not bowl shaped around 0")
        if np.any(grads[neg] > 0) or np.any(grads[pos] < 0):
            raise DomainError(f"derivative of loss {self.name!r} has the wrong sign")
        if vals[t == 0][0] != vals.min():
            raise DomainError(f"loss {self.name!r} is not minimised at 0")

    @property
    def kind(self) -> str:
        """``squared_error``, ``linex`` or ``custom``."""
        if self.name in ("squared_error", "linex"):
            return self.name
        return "custom"


def squared_error_loss() -> LossModel:
    return LossModel("squared_error", _sq_eval, _sq_deriv)


def _sq_eval(t):
    return np.square(t)


def _sq_deriv(t):
    return 2.0 * np.asarray(t)


class _Linex:
    # Module-level callables keep LossModel picklable for process pools.
    def __init__(self, a: float, derivative: bool):
        self.a = a
        self.derivative = derivative

    def __call__(self, t):
        at = self.a * np.asarray(t, dtype=float)
        if self.derivative:
            return self.a * np.expm1(at)
        return np.expm1(at) - at


def linex_loss(a: float) -> LossModel:
    """``L(t) = exp(a t) - a t - 1``; ``a > 0`` penalises overestimation more."""
    a = float(a)
    if a == 0.0 or not math.isfinite(a):
        raise DomainError("linex parameter a must be a nonzero finite real")
    return LossModel("linex", _Linex(a, False), _Linex(a, True), linex_a=a)


def loss_from_name(name: str, linex_a: float | None = None) -> LossModel:
    if name == "squared_error":
        return squared_error_loss()
    if name == "linex":
        if linex_a is None:
            raise DomainError("linex loss needs linex_a")
        return linex_loss(linex_a)
    raise DomainError(f"unknown loss {name!r}; expected squared_error or linex")


@dataclass(frozen=True)
class LossConstants:
    """Optimal shifts for one (loss, k, shape) combination.

    ``shape_m`` is the gamma shape of ``S / sigma`` and ``shape_kn`` the
    shape of the conditional distribution given the scaled minima, i.e.
    ``shape_m + k``.
    """

    q0: float
    p0: float
    shape_m: int
    shape_kn: int

    def __post_init__(self):
        if not self.p0 < self.q0:
            raise ContractError(f"expected p0 < q0, got p0={self.p0!r}, q0={self.q0!r}")
        if self.shape_m < 1 or self.shape_kn <= self.shape_m:
            raise ContractError("shape_kn must exceed shape_m >= 1")

    @property
    def k(self) -> int:
        return self.shape_kn - self.shape_m


def stationarity(loss: LossModel, shape: float, c: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``E[L'(ln V + c)]`` for ``V ~ Gamma(shape, 1)``; increasing in ``c``."""
    return gamma_expectation(lambda v: loss.deriv(np.log(v) + c), shape, quad)


def _numeric_root(loss: LossModel, shape: float, quad: QuadratureSpec) -> float:
    return solve_monotone_root(lambda c: stationarity(loss, shape, c, quad), -math.log(shape))


def _closed_form(loss: LossModel, shape: int) -> float | None:
    if loss.kind == "squared_error":
        return -digamma(shape)
    if loss.kind == "linex":
        a = loss.linex_a
        return (math.lgamma(shape) - math.lgamma(shape + a)) / a
    return None


def compute_constants(
    loss: LossModel,
    k: int,
    n: int,
    quad: QuadratureSpec = DEFAULT_QUAD,
    *,
    shape_m: int | None = None,
    cross_check: bool = True,
) -> LossConstants:
    """Solve for ``q0`` (shape ``k(n-1)``) and ``p0`` (shape ``kn``).

    ``shape_m`` overrides ``k(n-1)`` for schemes whose spacing sum has a
    different gamma shape (Type-II censoring).  Closed forms are returned
    for squared-error and linex losses after cross-checking them against
    the numerical root; other losses are solved numerically.

    Raises:
        DomainError: ``k < 2``, ``n < 2``, or linex ``a <= -shape_m``.
        NumericError: closed form and numerical root disagree.
    """
    if k < 2 or n < 2:
        raise DomainError(f"need k >= 2 and n >= 2, got k={k}, n={n}")
    m = k * (n - 1) if shape_m is None else int(shape_m)
    if m < 1:
        raise DomainError(f"shape_m must be positive, got {m}")
    mk = m + k
    if loss.kind == "linex" and loss.linex_a <= -m:
        raise DomainError(f"linex needs a > {-m} for shape {m}; the risk integral diverges")

    constants = []
    for shape in (m, mk):
        closed = _closed_form(loss, shape)
        if closed is None:
            constants.append(_numeric_root(loss, shape, quad))
            continue
        if cross_check:
            numeric = _numeric_root(loss, shape, quad)
            if abs(numeric - closed) > CROSS_CHECK_TOL:
                raise NumericError(
                    f"closed-form constant {closed!r} disagrees with numerical root {numeric!r} (shape {shape})"
                )
        constants.append(closed)
    q0, p0 = constants
    return LossConstants(q0=q0, p0=p0, shape_m=m, shape_kn=mk)


def check_dominance_condition(
    loss: LossModel,
    k: int,
    n: int,
    constants: LossConstants,
    quad: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """``E[L'(ln V + p0)]`` with ``V ~ Gamma(shape_m, 1)``.

    A strictly negative value means the Stein-type estimator improves on
    the invariant one for this loss.
    """
    if constants.k != k:
        raise ContractError(f"constants were computed for k={constants.k}, not k={k}")
    return stationarity(loss, constants.shape_m, constants.p0, quad)
