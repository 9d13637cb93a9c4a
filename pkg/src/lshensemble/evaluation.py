"""Exact ground truth, accuracy metrics and the experiment sweeps."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from .ensemble import Ensemble, EnsembleConfig
from .minhash import Domain
from .partition import (
    equi_depth_partition,
    equi_width_boundaries,
    interpolate_boundaries,
    stats,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 21))


class SearchIndex(Protocol):
    def search(self, query: Domain, threshold: float) -> set: ...


class ExactIndex:
    """Exact containment search through an inverted value index."""

    def __init__(self, corpus: Iterable[Domain]):
        self.domains = list(corpus)
        self.ids = np.array([d.id for d in self.domains], dtype=object)
        postings = defaultdict(list)
        for j, d in enumerate(self.domains):
            for v in d.values:
                postings[v].append(j)
        self._postings = {v: np.asarray(p, dtype=np.int64) for v, p in postings.items()}

    def overlaps(self, query: Domain) -> np.ndarray:
        """``|Q & X|`` for every indexed domain ``X``."""
        hits = [self._postings[v] for v in query.values if v in self._postings]
        if not hits:
            return np.zeros(len(self.domains), dtype=np.int64)
        return np.bincount(np.concatenate(hits), minlength=len(self.domains))

    def containment(self, query: Domain) -> np.ndarray:
        return self.overlaps(query) / len(query.values)

    def search(self, query: Domain, threshold: float) -> set:
        t = self.containment(query)
        return set(self.ids[t >= threshold].tolist())


def exact_containment_search(corpus: Iterable[Domain], query: Domain, t_star: float) -> set:
    """``{X : |Q & X| / |Q| >= t_star}`` by direct set intersection."""
    q = len(query.values)
    return {x.id for x in corpus if len(query.values & x.values) / q >= t_star}


class GroundTruth:
    """Exact nonzero containment scores for a fixed query set.

    Computed once from an :class:`ExactIndex` and optionally cached as JSON.
    """

    def __init__(self, scores: dict):
        self.scores = scores  # query id -> {domain id: containment}

    @classmethod
    def compute(cls, exact: ExactIndex, queries: Sequence[Domain]) -> "GroundTruth":
        scores = {}
        for qd in queries:
            c = exact.containment(qd)
            nz = np.flatnonzero(c)
            scores[qd.id] = dict(zip(exact.ids[nz].tolist(), c[nz].tolist()))
        return cls(scores)

    def relevant(self, query_id: str, threshold: float) -> set:
        if threshold <= 0:
            raise ValueError("cached truth only covers positive thresholds")
        return {x for x, t in self.scores[query_id].items() if t >= threshold}

    def save(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.scores, fh, sort_keys=True)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def cached(cls, path, exact_factory: Callable[[], ExactIndex], queries) -> "GroundTruth":
        """Load ``path`` if it covers ``queries``; otherwise compute and write it."""
        if path is not None and os.path.exists(path):
            truth = cls.load(path)
            if all(q.id in truth.scores for q in queries):
                return truth
            log.info("truth cache %s misses some queries; recomputing", path)
        truth = cls.compute(exact_factory(), queries)
        if path is not None:
            truth.save(path)
        return truth


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f_beta: float
    empty_result: bool


def score(result: Iterable, truth: Iterable, beta: float = 1.0) -> Score:
    """Set-overlap precision, recall and F-beta.

    An empty result counts as precision 1.0 and is flagged so it can be left
    out of averages; an empty truth set counts as recall 1.0.
    """
    a, t = set(result), set(truth)
    hit = len(a & t)
    precision = hit / len(a) if a else 1.0
    recall = hit / len(t) if t else 1.0
    denom = beta**2 * precision + recall
    f = (1 + beta**2) * precision * recall / denom if denom > 0 else 0.0
    return Score(precision, recall, f, not a)


@dataclass
class ThresholdRow:
    threshold: float
    queries: int
    precision: float
    precision_nonempty: float
    recall: float
    f1: float
    f05: float
    empty_results: int


@dataclass
class AccuracyReport:
    rows: list
    details: list = field(default_factory=list)

    def row(self, threshold: float) -> ThresholdRow:
        for r in self.rows:
            if math.isclose(r.threshold, threshold):
                return r
        raise KeyError(threshold)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(asdict(self.rows[0]).keys()) if self.rows else []
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"thresholds": [asdict(r) for r in self.rows], "queries": self.details},
            indent=2,
        )


def _aggregate(threshold, scores, f05s) -> ThresholdRow:
    nonempty = [s.precision for s in scores if not s.empty_result]
    return ThresholdRow(
        threshold=threshold,
        queries=len(scores),
        precision=float(np.mean([s.precision for s in scores])),
        precision_nonempty=float(np.mean(nonempty)) if nonempty else 1.0,
        recall=float(np.mean([s.recall for s in scores])),
        f1=float(np.mean([s.f_beta for s in scores])),
        f05=float(np.mean(f05s)),
        empty_results=sum(s.empty_result for s in scores),
    )


def sample_queries(corpus: Sequence[Domain], k: int = 200, seed: int = 0) -> list[Domain]:
    """Uniform sample without replacement."""
    rng = np.random.default_rng(seed)
    k = min(k, len(corpus))
    return [corpus[i] for i in sorted(rng.choice(len(corpus), size=k, replace=False))]


def run_threshold_sweep(
    index: SearchIndex,
    corpus,
    queries: Sequence[Domain],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    truth: Union[ExactIndex, GroundTruth, None] = None,
    workers: int = 1,
) -> AccuracyReport:
    """Average precision / recall / F scores of ``index`` at each threshold.

    With ``workers > 1`` queries run on a thread pool; results are identical.
    """
    if not isinstance(truth, GroundTruth):
        truth = GroundTruth.compute(truth if truth is not None else ExactIndex(corpus), queries)
    details = []
    rows = []
    with ThreadPoolExecutor(max(1, workers)) as pool:
        for t in thresholds:
            found_all = list(pool.map(lambda qd: index.search(qd, t), queries))
            rows.append(_score_threshold(t, queries, found_all, truth, details))
    return AccuracyReport(rows, details)


def _score_threshold(t, queries, found_all, truth, details) -> ThresholdRow:
    scores, f05s = [], []
    for qd, found in zip(queries, found_all):
        relevant = truth.relevant(qd.id, t)
        s = score(found, relevant)
        scores.append(s)
        f05s.append(score(found, relevant, beta=0.5).f_beta)
        details.append({
            "query": qd.id, "threshold": t, "returned": len(found),
            "relevant": len(relevant), "hits": len(found & relevant),
        })
    return _aggregate(t, scores, f05s)


def ensemble_factory(config: EnsembleConfig) -> Callable[[Sequence[Domain]], Ensemble]:
    return lambda domains: Ensemble.bootstrap(domains, config)


@dataclass
class SkewRow:
    subset: int
    lower: int
    upper: int
    domains: int
    skewness: Optional[float]
    reports: dict


def run_skew_sweep(
    corpus: Sequence[Domain],
    builders: dict,
    n_subsets: int = 20,
    queries_per_subset: int = 50,
    thresholds: Sequence[float] = (0.5,),
    first_upper: Optional[int] = None,
    seed: int = 0,
) -> list[SkewRow]:
    """Accuracy on nested size-interval subsets of increasing skewness.

    The first subset holds sizes in ``[min, first_upper)``; each later subset
    grows the upper end geometrically until it reaches the largest size.
    ``builders`` maps a name to a callable turning a domain list into an index.
    """
    sizes = np.array([len(d.values) for d in corpus])
    lo, hi = int(sizes.min()), int(sizes.max()) + 1
    first_upper = first_upper or min(hi, 2 * lo)
    uppers = np.unique(np.rint(np.geomspace(first_upper, hi, n_subsets)).astype(int))
    if len(uppers) < n_subsets:
        log.warning("only %d distinct subsets available (asked for %d)", len(uppers), n_subsets)
    rows = []
    for k, up in enumerate(uppers):
        subset = [d for d, s in zip(corpus, sizes) if s < up]
        if len(subset) < 2:
            continue
        queries = sample_queries(subset, queries_per_subset, seed + k)
        truth = ExactIndex(subset)
        reports = {
            name: run_threshold_sweep(build(subset), subset, queries, thresholds, truth)
            for name, build in builders.items()
        }
        rows.append(SkewRow(k, lo, int(up), len(subset), stats([len(d.values) for d in subset]).skewness, reports))
    return rows


@dataclass
class DeviationRow:
    lam: float
    boundaries: list
    counts: list
    size_std: float
    report: AccuracyReport


def run_partition_deviation_sweep(
    corpus: Sequence[Domain],
    n: int,
    lambdas: Sequence[float],
    queries: Sequence[Domain],
    thresholds: Sequence[float] = (0.5,),
    config: EnsembleConfig = EnsembleConfig(),
) -> list[DeviationRow]:
    """Accuracy as boundaries slide from equi-depth (0) to equi-width (1)."""
    if n < 2:
        raise ValueError("deviation sweep needs at least two partitions")
    kept = [d for d in corpus if len(d.values) >= config.min_size]
    sizes = np.array([len(d.values) for d in kept])
    depth = list(equi_depth_partition(sizes, n).boundaries)
    width = equi_width_boundaries(sizes, len(depth) - 1)
    if len(width) != len(depth):
        raise ValueError("size range too narrow for an equi-width split")
    truth = ExactIndex(corpus)
    rows = []
    for lam in lambdas:
        bounds = interpolate_boundaries(depth, width, lam)
        index = Ensemble.bootstrap(kept, config, boundaries=bounds)
        counts = list(index.partitioning.counts)
        report = run_threshold_sweep(index, corpus, queries, thresholds, truth)
        rows.append(DeviationRow(lam, bounds, counts, float(np.std(counts)), report))
    return rows
