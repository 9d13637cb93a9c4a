"""Size partitionings, power-law samples and distribution statistics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .containment import FpEstimate, SizeInterval, fp_upper_bound, partition_cost

MAX_ORACLE_DISTINCT_SIZES = 2000


@dataclass(frozen=True)
class Partitioning:
    """Contiguous half-open size intervals ``[boundaries[i], boundaries[i+1])``."""

    boundaries: tuple
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(int(b) for b in self.boundaries))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.boundaries) != len(self.counts) + 1 or not self.counts:
            raise ValueError("need len(boundaries) == len(counts) + 1 >= 2")
        if any(b1 >= b2 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError(f"boundaries not strictly increasing: {self.boundaries}")
        if self.boundaries[0] < 1:
            raise ValueError("sizes start at 1")

    def __len__(self):
        return len(self.counts)

    @property
    def intervals(self) -> list[SizeInterval]:
        return [SizeInterval(l, u) for l, u in zip(self.boundaries, self.boundaries[1:])]

    def fp_estimates(self) -> list[FpEstimate]:
        return [fp_upper_bound(iv, c) for iv, c in zip(self.intervals, self.counts)]

    def cost(self) -> float:
        return partition_cost(self.fp_estimates())

    def assign(self, sizes) -> np.ndarray:
        """Partition index for each size; raises if a size is not covered."""
        sizes = np.asarray(sizes)
        if sizes.size and (sizes.min() < self.boundaries[0] or sizes.max() >= self.boundaries[-1]):
            raise ValueError("sizes fall outside the partitioned range")
        return np.searchsorted(self.boundaries, sizes, side="right") - 1

    def to_json(self) -> str:
        return json.dumps({"boundaries": list(self.boundaries), "counts": list(self.counts)})

    @classmethod
    def from_json(cls, text: str) -> "Partitioning":
        obj = json.loads(text)
        return cls(obj["boundaries"], obj["counts"])


@dataclass(frozen=True)
class PowerLawModel:
    alpha: float
    min_size: int
    max_size: int

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError(f"power-law exponent must exceed 1, got {self.alpha}")
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError("need 1 <= min_size <= max_size")

    @property
    def c(self) -> float:
        """Normalization so that the density integrates to 1 on [min, max]."""
        a1 = 1.0 - self.alpha
        span = self.max_size**a1 - self.min_size**a1
        return a1 / span if span else math.inf


@dataclass(frozen=True)
class StatsReport:
    count: int
    min: float
    max: float
    mean: float
    m2: float
    m3: float
    skewness: Optional[float]


def _distinct(sizes):
    sizes = np.sort(np.asarray(sizes, dtype=np.int64))
    if sizes.size == 0:
        raise ValueError("no sizes given")
    if sizes[0] < 1:
        raise ValueError("sizes must be positive")
    distinct, counts = np.unique(sizes, return_counts=True)
    cum = np.concatenate([[0], np.cumsum(counts)])
    return distinct, cum


def _from_cuts(distinct, cum, cuts) -> Partitioning:
    # cuts: indices into distinct where new partitions start (first is 0)
    edges = [int(distinct[j]) for j in cuts] + [int(distinct[-1]) + 1]
    ends = list(cuts[1:]) + [len(distinct)]
    counts = [int(cum[e] - cum[s]) for s, e in zip(cuts, ends)]
    return Partitioning(edges, counts)


def equi_depth_partition(sizes: Sequence[int], n: int) -> Partitioning:
    """Split into ``n`` partitions holding as close to ``N/n`` domains as possible.

    Cuts fall on size boundaries, so all domains of one size share a partition.
    """
    if n < 1:
        raise ValueError("need at least one partition")
    distinct, cum = _distinct(sizes)
    total = int(cum[-1])
    if n > total:
        raise ValueError(f"cannot make {n} partitions from {total} domains")
    if n > len(distinct):
        raise ValueError(f"only {len(distinct)} distinct sizes; cannot make {n} partitions")
    cuts = [0]
    for i in range(1, n):
        target = i * total / n
        lo, hi = cuts[-1] + 1, len(distinct) - (n - i)
        cand = np.arange(lo, hi + 1)
        cuts.append(int(cand[np.argmin(np.abs(cum[cand] - target))]))
    return _from_cuts(distinct, cum, cuts)


def equi_width_boundaries(sizes: Sequence[int], n: int) -> list[int]:
    sizes = np.asarray(sizes)
    lo, hi = int(sizes.min()), int(sizes.max()) + 1
    edges = np.rint(np.linspace(lo, hi, n + 1)).astype(int)
    return _strictly_increasing(edges.tolist())


def _strictly_increasing(edges: list[int]) -> list[int]:
    out = [edges[0]]
    for e in edges[1:]:
        if e > out[-1]:
            out.append(e)
    if out[-1] != edges[-1]:
        out[-1] = edges[-1]
    return out


def interpolate_boundaries(
    depth: Sequence[int], width: Sequence[int], lam: float
) -> list[int]:
    """Boundaries a fraction ``lam`` of the way from ``depth`` to ``width``.

    Both boundary lists must share their end points. Collapsed edges are
    dropped, so the result may hold fewer partitions.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must be in [0, 1]")
    if len(depth) != len(width) or depth[0] != width[0] or depth[-1] != width[-1]:
        raise ValueError("boundary lists must have equal length and end points")
    mixed = np.rint((1.0 - lam) * np.asarray(depth, float) + lam * np.asarray(width, float))
    return _strictly_increasing(mixed.astype(int).tolist())


def partition_with_boundaries(sizes: Sequence[int], boundaries: Sequence[int]) -> Partitioning:
    sizes = np.asarray(sizes, dtype=np.int64)
    b = [int(x) for x in boundaries]
    if len(b) < 2 or any(x >= y for x, y in zip(b, b[1:])):
        raise ValueError(f"boundaries must be strictly increasing: {b}")
    if sizes.size == 0:
        raise ValueError("no sizes given")
    if sizes.min() < b[0] or sizes.max() >= b[-1]:
        raise ValueError(
            f"sizes [{sizes.min()}, {sizes.max()}] not covered by [{b[0]}, {b[-1]})"
        )
    counts = np.histogram(sizes, bins=np.asarray(b, dtype=float))[0]
    return Partitioning(b, counts.tolist())


def optimal_partition_bruteforce(
    sizes: Sequence[int], n: int, q: Optional[float] = None, t_star: Optional[float] = None
) -> Partitioning:
    """Exact min-max partitioning under the query-independent FP bound.

    Cuts are restricted to size boundaries (same as the equi-depth builder).
    ``q`` and ``t_star`` are accepted for interface symmetry; the bound being
    minimized does not depend on them.
    """
    distinct, cum = _distinct(sizes)
    d = len(distinct)
    if d > MAX_ORACLE_DISTINCT_SIZES:
        raise ValueError(
            f"oracle limited to {MAX_ORACLE_DISTINCT_SIZES} distinct sizes, got {d}"
        )
    if not 1 <= n <= d:
        raise ValueError(f"cannot make {n} partitions from {d} distinct sizes")
    edge = np.concatenate([distinct, [distinct[-1] + 1]]).astype(float)
    cumf = cum.astype(float)

    def bound(i, j):
        # partitions spanning distinct[i:j], vectorized over i
        return (cumf[j] - cumf[i]) * (edge[j] - edge[i] + 1.0) / (2.0 * edge[j])

    best = np.full(d + 1, np.inf)
    best[1:] = bound(0, np.arange(1, d + 1))
    choice = [np.zeros(d + 1, dtype=np.int64)]
    for k in range(2, n + 1):
        nxt = np.full(d + 1, np.inf)
        arg = np.zeros(d + 1, dtype=np.int64)
        for j in range(k, d + 1):
            i = np.arange(k - 1, j)
            vals = np.maximum(best[i], bound(i, j))
            pick = int(np.argmin(vals))
            nxt[j], arg[j] = vals[pick], i[pick]
        best = nxt
        choice.append(arg)
    cuts = []
    j = d
    for k in range(n, 1, -1):
        j = int(choice[k - 1][j])
        cuts.append(j)
    cuts = [0] + cuts[::-1]
    return _from_cuts(distinct, cum, cuts)


def sample_power_law(model: PowerLawModel, n_domains: int, seed: int = 0) -> np.ndarray:
    """Integer sizes from a truncated continuous power law via inverse CDF."""
    rng = np.random.default_rng(seed)
    if model.min_size == model.max_size:
        return np.full(n_domains, model.min_size, dtype=np.int64)
    u = rng.random(n_domains)
    a1 = 1.0 - model.alpha
    lo, hi = float(model.min_size) ** a1, float(model.max_size) ** a1
    x = (lo + u * (hi - lo)) ** (1.0 / a1)
    return np.clip(np.floor(x), model.min_size, model.max_size).astype(np.int64)


def stats(sizes: Sequence[float]) -> StatsReport:
    x = np.asarray(sizes, dtype=float)
    if x.size == 0:
        raise ValueError("no values given")
    dev = x - x.mean()
    m2 = float(np.mean(dev**2))
    m3 = float(np.mean(dev**3))
    skew = m3 / m2**1.5 if m2 > 0 else None
    return StatsReport(int(x.size), float(x.min()), float(x.max()), float(x.mean()), m2, m3, skew)
