"""Comparison indexes: plain MinHash LSH and Asymmetric Minwise Hashing.

Both reuse the ensemble machinery. The plain baseline is a single partition
whose bound is the global maximum size. The asymmetric index pads every
indexed domain with fresh values up to the largest size ``M`` before hashing;
queries are not padded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .ensemble import Ensemble, EnsembleConfig
from .minhash import Domain, MinHashSignature, build_signatures, pad_signatures
from .partition import equi_depth_partition
from .tuning import TuningParams


@dataclass(frozen=True)
class PaddedCorpusInfo:
    M: int
    pad_counts: np.ndarray


def build_baseline(domains: Iterable[Domain], config: EnsembleConfig = EnsembleConfig()) -> Ensemble:
    cfg = EnsembleConfig(config.num_perm, 1, config.r_max, config.seed, config.min_size)
    index = Ensemble.bootstrap(domains, cfg)
    index.kind = "baseline"
    return index


def baseline_lsh_query(index: Ensemble, q_sig: MinHashSignature, t_star: float, query_size=None):
    return set(index.query(q_sig, t_star, query_size).candidates)


def asym_build(
    domains: Iterable[Domain],
    config: EnsembleConfig = EnsembleConfig(),
    partitions: int = 1,
) -> tuple[Ensemble, PaddedCorpusInfo]:
    """Pad each domain to the largest size and index the padded signatures.

    With ``partitions > 1`` domains are first split equi-depth and padded only
    up to the largest size of their own partition.
    """
    domains = list(domains)
    kept = [d for d in domains if len(d.values) >= config.min_size]
    skipped_count = len(domains) - len(kept)
    if not kept:
        raise ValueError("no domains to index")
    ids = [d.id for d in kept]
    sizes = np.array([len(d.values) for d in kept], dtype=np.int64)
    if partitions > 1:
        part = equi_depth_partition(sizes, min(partitions, len(np.unique(sizes))))
        owner = part.assign(sizes)
        targets = np.array([sizes[owner == i].max() for i in range(len(part))])[owner]
    else:
        targets = np.full(sizes.shape, sizes.max())
    pads = targets - sizes
    mins = build_signatures([d.values for d in kept], config.num_perm, config.seed)
    mins = pad_signatures(mins, pads, config.seed)
    cfg = EnsembleConfig(config.num_perm, partitions, config.r_max, config.seed, config.min_size)
    index = Ensemble.from_signatures(
        ids, targets, mins, cfg, skipped=skipped_count, kind="asym",
        extra={"padded_to": int(sizes.max()) if partitions == 1 else None},
    )
    return index, PaddedCorpusInfo(int(sizes.max()), pads)


def asym_query(index: Ensemble, q_sig: MinHashSignature, t_star: float, query_size=None):
    return set(index.query(q_sig, t_star, query_size).candidates)


def asym_candidate_probability(M: float, q: float, params: TuningParams) -> float:
    """Candidate probability of a padded domain that fully contains the query."""
    return 1.0 - (1.0 - (q / M) ** params.r) ** params.b


def min_hash_functions(M: float, q: float = 1.0, target: float = 0.5) -> int:
    """Fewest hash functions (one per band) keeping the probability >= ``target``."""
    ratio = q / M
    if ratio >= 1.0:
        return 1
    return int(math.ceil(math.log1p(-target) / math.log1p(-ratio)))
