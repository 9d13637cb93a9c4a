"""Containment search over domains of skewed sizes with partitioned MinHash LSH."""
from .baselines import asym_build, asym_query, baseline_lsh_query, build_baseline
from .containment import (
    SizeInterval,
    conservative_jaccard_threshold,
    containment_to_jaccard,
    effective_containment_threshold,
    fp_probability,
    fp_upper_bound,
    jaccard_to_containment,
)
from .corpus import ingest_csv, read_corpus, synthetic_corpus, write_corpus
from .ensemble import Ensemble, EnsembleConfig, QueryResult
from .evaluation import ExactIndex, exact_containment_search, run_threshold_sweep, score
from .forest import BandLattice, LshForest
from .minhash import (
    Domain,
    MinHashSignature,
    build_signature,
    deserialize_signature,
    estimate_cardinality,
    estimate_jaccard,
    serialize_signature,
)
from .partition import (
    Partitioning,
    PowerLawModel,
    equi_depth_partition,
    partition_with_boundaries,
    sample_power_law,
    stats,
)
from .tuning import TuningParams, default_tuning_table, optimize_params

__version__ = "0.1.0"

__all__ = [
    "BandLattice",
    "Domain",
    "Ensemble",
    "EnsembleConfig",
    "ExactIndex",
    "LshForest",
    "MinHashSignature",
    "Partitioning",
    "PowerLawModel",
    "QueryResult",
    "SizeInterval",
    "TuningParams",
    "asym_build",
    "asym_query",
    "baseline_lsh_query",
    "build_baseline",
    "build_signature",
    "conservative_jaccard_threshold",
    "containment_to_jaccard",
    "default_tuning_table",
    "deserialize_signature",
    "effective_containment_threshold",
    "equi_depth_partition",
    "estimate_cardinality",
    "estimate_jaccard",
    "exact_containment_search",
    "fp_probability",
    "fp_upper_bound",
    "ingest_csv",
    "jaccard_to_containment",
    "optimize_params",
    "partition_with_boundaries",
    "read_corpus",
    "run_threshold_sweep",
    "sample_power_law",
    "score",
    "serialize_signature",
    "stats",
    "synthetic_corpus",
    "write_corpus",
]
