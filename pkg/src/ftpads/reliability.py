"""Closed-form reliability of replicated simulations and a Monte Carlo oracle for it.

``L`` LPs host ``N`` entities with ``M`` instances each; ``X`` randomly
chosen LPs crash.  With the distinct-LP constraint the number of surviving
instances of an entity is hypergeometric; without it, binomial.  Per-entity
failure probabilities are computed exactly with big-integer binomials and
only the final N-th power is taken in floating point, through ``log1p``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from . import kernels
from .core import DomainError, FaultKind, majority_threshold

SECONDS_PER_YEAR = 365 * 86400
MC_CHUNK = 4096


class Unsatisfiable(DomainError):
    """No replication degree up to L gives reliability one."""


@dataclass(frozen=True)
class ReliabilityQuery:
    L: int
    N: int
    M: int
    X: int

    def validate(self, constrained: bool = True) -> None:
        if self.L < 1 or self.N < 0 or self.M < 1:
            raise DomainError(f"need L >= 1, N >= 0, M >= 1: {self}")
        if constrained and self.M > self.L:
            raise DomainError(f"M={self.M} replicas cannot sit on distinct LPs with L={self.L}")
        if not 0 <= self.X <= self.L:
            raise DomainError(f"X must lie in [0, L]: {self}")


@dataclass(frozen=True)
class FailureRate:
    lam: float
    t: float

    def __post_init__(self):
        if self.lam < 0 or self.t < 0:
            raise DomainError(f"failure rate and duration must be >= 0: {self}")

    @classmethod
    def from_mttf(cls, mttf: float, t: float) -> FailureRate:
        return cls(1.0 / mttf, t)


def _pmf_exact(q: ReliabilityQuery, k: int) -> Fraction:
    if not 0 <= k <= q.M:
        raise DomainError(f"k must lie in [0, M], got {k}")
    if k > q.L - q.X:
        return Fraction(0)
    return Fraction(math.comb(q.X, q.M - k) * math.comb(q.L - q.X, k), math.comb(q.L, q.M))


def surviving_pmf(q: ReliabilityQuery, k: int) -> float:
    """P(exactly k of an entity's M instances sit on LPs that did not crash)."""
    q.validate()
    return float(_pmf_exact(q, k))


def entity_failure_probability(q: ReliabilityQuery, kind: FaultKind, constrained: bool = True) -> Fraction:
    """Exact probability that one entity keeps too few live instances."""
    q.validate(constrained)
    if not constrained:
        if kind is not FaultKind.CRASH:
            raise DomainError("the unconstrained closed form covers the crash model only")
        return Fraction(q.X, q.L) ** q.M
    if kind is FaultKind.CRASH:
        return Fraction(math.comb(q.X, q.M), math.comb(q.L, q.M))
    need = majority_threshold(q.M)
    return sum((_pmf_exact(q, k) for k in range(need)), Fraction(0))


def _all_survive(p_fail: Fraction, n: int) -> float:
    if p_fail == 0 or n == 0:
        return 1.0
    if p_fail == 1:
        return 0.0
    return math.exp(n * math.log1p(-float(p_fail)))


def r_crash(q: ReliabilityQuery) -> float:
    """Probability every entity keeps at least one live instance (distinct-LP placement)."""
    q.validate()
    if q.X < q.M:
        return 1.0
    return _all_survive(entity_failure_probability(q, FaultKind.CRASH), q.N)


def _certain_x(kind: FaultKind, m: int) -> int:
    """Largest X that can never defeat an entity with m instances on distinct LPs."""
    if kind is FaultKind.CRASH:
        return m - 1
    # for odd m this is majority_threshold(m) - 1; even m tolerates one fewer
    return m - majority_threshold(m)


def is_certain(q: ReliabilityQuery, kind: FaultKind, constrained: bool = True) -> bool:
    """Exact test for reliability one; floats cannot tell 1 - 1e-20 from 1."""
    return q.N == 0 or entity_failure_probability(q, kind, constrained) == 0


def r_byzantine(q: ReliabilityQuery) -> float:
    """Probability every entity keeps a strict majority of live instances."""
    q.validate()
    if q.X <= _certain_x(FaultKind.BYZANTINE, q.M):
        return 1.0
    return _all_survive(entity_failure_probability(q, FaultKind.BYZANTINE), q.N)


def r_crash_unconstrained(q: ReliabilityQuery) -> float:
    """Crash reliability when each instance picks its LP independently: [1 - (X/L)^M]^N."""
    q.validate(constrained=False)
    return _all_survive(entity_failure_probability(q, FaultKind.CRASH, constrained=False), q.N)


def series_reliability(L: int, rate: FailureRate) -> float:
    """Probability that none of L independent LPs fails within ``rate.t``."""
    return math.exp(-L * rate.lam * rate.t)


def expected_failures(L: int, rate: FailureRate) -> float:
    return L * rate.lam * rate.t


def min_replication(kind: FaultKind, L: int, rate: FailureRate) -> int:
    """Smallest M whose reliability is one when floor(L * lam * t) LPs fail.

    Crash: the smallest integer M > L*lam*t.  Byzantine: a strict majority
    must outlive floor(L*lam*t) crashes, so M = 2 * floor(L*lam*t) + 1.
    """
    failures = math.floor(expected_failures(L, rate))
    m = failures + 1 if kind is FaultKind.CRASH else 2 * failures + 1
    if m > L:
        raise Unsatisfiable(f"{kind.value} model needs M={m} replicas but only L={L} LPs exist")
    return m


class MonteCarloResult(NamedTuple):
    estimate: float
    stderr: float
    successes: int
    trials: int


def _chunk(q: ReliabilityQuery, constrained: bool, need: int, seed: int, index: int, size: int) -> int:
    rng = np.random.default_rng([seed, index])
    u_place = rng.random((size, q.N * q.M))
    u_crash = rng.random((size, q.X))
    return kernels.count_survivals(q.L, q.N, q.M, q.X, constrained, need, u_place, u_crash)


def monte_carlo_reliability(
    q: ReliabilityQuery,
    constraint: bool,
    kind: FaultKind,
    trials: int,
    seed: int = 0,
    workers: int = 1,
) -> MonteCarloResult:
    """Estimate reliability by simulating placements and crash sets directly.

    Trials are split into fixed-size chunks, each with its own stream derived
    from ``(seed, chunk index)``, so the estimate does not depend on
    ``workers``.
    """
    q.validate(constraint)
    if trials < 1:
        raise DomainError("trials must be >= 1")
    need = 1 if kind is FaultKind.CRASH else majority_threshold(q.M)
    sizes = [min(MC_CHUNK, trials - start) for start in range(0, trials, MC_CHUNK)]
    jobs = [(q, constraint, need, seed, i, n) for i, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            successes = sum(pool.map(lambda job: _chunk(*job), jobs))
    else:
        successes = sum(_chunk(*job) for job in jobs)
    p = successes / trials
    return MonteCarloResult(p, math.sqrt(p * (1.0 - p) / trials), successes, trials)
