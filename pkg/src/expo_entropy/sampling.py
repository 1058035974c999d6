"""Data generation under four sampling schemes and reduction to (X, S).

Each population is exponential with location ``theta_i`` and common scale
``sigma``.  Observed data per population:

``iid``           n complete observations
``record``        the first n upper record values
``type2``         the r smallest of n_total lifetimes
``progressive2``  n failure times from n_total units, removing ``removals[j]``
                  surviving units at the j-th failure
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .estimators import SCHEMES, SufficientStats
from .streams import replication_exponentials, stream_key

__all__ = ["SchemeConfig", "generate", "generate_batch", "reduce", "reduce_batch"]


@dataclass(frozen=True)
class SchemeConfig:
    """Sampling design shared by all k populations.

    ``n`` is always the number of observed values per population; for
    ``type2`` it must equal ``r``.
    """

    kind: str
    k: int
    n: int
    r: Optional[int] = None
    n_total: Optional[int] = None
    removals: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise DomainError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.k < 2:
            raise DomainError("need at least two populations")
        if self.n < 2:
            raise DomainError("need at least two observations per population")
        if self.kind == "type2":
            if self.r is None or self.n_total is None:
                raise DomainError("type2 needs r and n_total")
            if not 2 <= self.r <= self.n_total:
                raise DomainError(f"type2 needs 2 <= r <= n_total, got r={self.r}, n_total={self.n_total}")
            if self.n != self.r:
                raise DomainError(f"type2 observes r={self.r} values, but n={self.n}")
        elif self.kind == "progressive2":
            if self.n_total is None or self.removals is None:
                raise DomainError("progressive2 needs n_total and removals")
            removals = tuple(int(v) for v in self.removals)
            object.__setattr__(self, "removals", removals)
            if len(removals) != self.n or min(removals) < 0:
                raise DomainError(f"removals must be {self.n} nonnegative integers")
            if sum(removals) + self.n != self.n_total:
                raise DomainError(
                    f"removals sum to {sum(removals)}, but n_total - n = {self.n_total - self.n}"
                )
        elif self.r is not None or self.removals is not None:
            raise DomainError(f"{self.kind} takes no r or removals")

    @classmethod
    def type2(cls, k: int, r: int, n_total: int) -> "SchemeConfig":
        return cls("type2", k, r, r=r, n_total=n_total)

    @classmethod
    def progressive(cls, k: int, n_total: int, removals: Sequence[int]) -> "SchemeConfig":
        return cls("progressive2", k, len(removals), n_total=n_total, removals=tuple(removals))

    @property
    def shape_m(self) -> int:
        """Gamma shape of S / sigma."""
        return self.k * (self.n - 1)

    @property
    def draws_per_population(self) -> int:
        return self.n_total if self.kind in ("type2", "progressive2") else self.n

    @property
    def minimum_multiplier(self) -> int:
        """Factor c with c * (first observation) ~ E(c * theta_i, sigma)."""
        return {"iid": self.n, "record": 1}.get(self.kind, self.n_total)


def generate_batch(scheme: SchemeConfig, theta, sigma: float, expo: np.ndarray) -> np.ndarray:
    """Observed values, shape ``(B, k, n)``, from unit exponentials ``(B, k, draws_per_population)``."""
    theta = np.asarray(theta, dtype=float).reshape(1, -1, 1)
    if theta.shape[1] != scheme.k:
        raise DomainError(f"theta must have {scheme.k} entries")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if scheme.kind == "iid":
        return theta + sigma * expo
    if scheme.kind == "record":
        # Memorylessness: each new record exceeds the last by a fresh exponential.
        return theta + sigma * np.cumsum(expo, axis=2)
    lifetimes = theta + sigma * expo
    if scheme.kind == "type2":
        return np.sort(lifetimes, axis=2)[:, :, : scheme.r]
    return _progressive(lifetimes, scheme.removals)


def _progressive(lifetimes: np.ndarray, removals: tuple) -> np.ndarray:
    # Units are exchangeable, so withdrawing the lowest-indexed survivors is
    # a removal rule independent of the remaining lifetimes.
    alive = np.ones(lifetimes.shape, dtype=bool)
    out = np.empty(lifetimes.shape[:2] + (len(removals),))
    for j, rj in enumerate(removals):
        masked = np.where(alive, lifetimes, np.inf)
        idx = np.argmin(masked, axis=2)
        out[:, :, j] = np.take_along_axis(masked, idx[..., None], axis=2)[..., 0]
        np.put_along_axis(alive, idx[..., None], False, axis=2)
        if rj:
            alive &= ~(alive & (np.cumsum(alive, axis=2) <= rj))
    return out


def generate(scheme: SchemeConfig, theta: Sequence[float], sigma: float, seed: int) -> list[np.ndarray]:
    """One dataset; deterministic for a fixed ``seed``."""
    expo = replication_exponentials(stream_key(seed, 0), 0, 1, scheme.k * scheme.draws_per_population)
    obs = generate_batch(scheme, theta, sigma, expo.reshape(1, scheme.k, -1))
    return [row.copy() for row in obs[0]]


def reduce_batch(scheme: SchemeConfig, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scaled minima ``x`` (B, k) and spacing sums ``s`` (B,) from observed values (B, k, n)."""
    if scheme.kind == "iid":
        first = obs.min(axis=2)
        spacings = (obs - first[..., None]).sum(axis=2)
    elif scheme.kind == "record":
        first = obs[:, :, 0]
        spacings = obs[:, :, -1] - first
    elif scheme.kind == "type2":
        first = obs[:, :, 0]
        gaps = obs - first[..., None]
        spacings = gaps.sum(axis=2) + (scheme.n_total - scheme.r) * gaps[:, :, -1]
    else:
        first = obs[:, :, 0]
        weights = np.asarray(scheme.removals, dtype=float) + 1.0
        spacings = ((obs - first[..., None]) * weights).sum(axis=2)
    return scheme.minimum_multiplier * first, spacings.sum(axis=1)


def reduce(scheme: SchemeConfig, raw: Sequence[Sequence[float]]) -> SufficientStats:
    """Sufficient statistics of one dataset.

    Raises:
        ValidationError: wrong population count or size, non-finite
            values, or unordered values for ordered schemes.
    """
    if len(raw) != scheme.k:
        raise ValidationError(f"expected {scheme.k} populations, got {len(raw)}")
    rows = []
    for i, pop in enumerate(raw):
        arr = np.asarray(pop, dtype=float)
        if arr.ndim != 1 or arr.size != scheme.n:
            raise ValidationError(f"population {i + 1}: expected {scheme.n} values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"population {i + 1}: non-finite value")
        if scheme.kind != "iid" and np.any(np.diff(arr) < 0):
            raise ValidationError(f"population {i + 1}: {scheme.kind} values must be in increasing order")
        rows.append(arr)
    x, s = reduce_batch(scheme, np.stack(rows)[None])
    if not s[0] > 0:
        raise ValidationError("spacing sum is zero; all populations are constant")
    return SufficientStats(tuple(x[0]), float(s[0]), scheme.k, scheme.n, scheme.shape_m, scheme.kind)
