"""Closed-form relations between containment and Jaccard similarity.

Notation follows the usual containment-search conventions: ``x`` is the size of
an indexed domain, ``q`` the query size, ``t`` the containment ``|Q & X| / q``
and ``s`` the Jaccard similarity. A partition covers sizes in ``[l, u)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class SizeInterval:
    lower: int
    upper: int

    def __post_init__(self):
        if not 1 <= self.lower < self.upper:
            raise ValueError(f"invalid size interval [{self.lower}, {self.upper})")

    def __contains__(self, size) -> bool:
        return self.lower <= size < self.upper

    @property
    def width(self) -> int:
        return self.upper - self.lower


@dataclass(frozen=True)
class FpEstimate:
    interval: SizeInterval
    count: int
    fp_upper_bound: float


def containment_to_jaccard(t: float, x: float, q: float) -> float:
    if t < 0:
        raise ValueError(f"containment must be non-negative, got {t}")
    denom = x / q + 1.0 - t
    if denom <= 0:
        raise ValueError(f"containment {t} is impossible for x={x}, q={q}")
    return t / denom


def jaccard_to_containment(s: float, x: float, q: float) -> float:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"Jaccard similarity must be in [0, 1], got {s}")
    return (x / q + 1.0) * s / (1.0 + s)


def conservative_jaccard_threshold(t_star: float, u: float, q: float) -> float:
    """Jaccard threshold that loses no domain of size ``<= u`` meeting ``t_star``."""
    if not 0.0 < t_star <= 1.0:
        raise ValueError(f"containment threshold must be in (0, 1], got {t_star}")
    return t_star / (u / q + 1.0 - t_star)


def effective_containment_threshold(x: float, q: float, u: float, t_star: float) -> float:
    """The containment level actually enforced on a size-``x`` domain."""
    if x > u:
        raise ValueError(f"domain size {x} exceeds partition upper bound {u}")
    return (x + q) * t_star / (u + q)


def fp_probability(x: float, q: float, u: float, l: float, t_star: float) -> float:
    """Chance that a size-``x`` domain in ``[l, u)`` passes the filter but misses ``t_star``.

    The band ``[t_x, t_star)`` is weighed against ``t_star``; when a domain
    is too small to reach ``t_star`` the band is capped at ``x / q`` instead.
    """
    if not l <= x <= u:
        raise ValueError(f"domain size {x} outside [{l}, {u}]")
    t_x = effective_containment_threshold(x, q, u, t_star)
    if x >= t_star * q:
        return (t_star - t_x) / t_star
    if x >= t_x * q:
        return 1.0 - t_x * q / x
    return 0.0


def fp_upper_bound(interval: SizeInterval, count: int) -> FpEstimate:
    if count < 0:
        raise ValueError("count must be non-negative")
    l, u = interval.lower, interval.upper
    return FpEstimate(interval, count, count * (u - l + 1) / (2.0 * u))


def partition_cost(estimates: Sequence[FpEstimate]) -> float:
    if not estimates:
        raise ValueError("partition_cost needs at least one partition")
    return max(e.fp_upper_bound for e in estimates)
