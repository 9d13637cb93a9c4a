"""Accuracy of one LSH index, a partitioned ensemble and padded (asym) indexing on a skewed corpus.

Run: python3 demos/skewed_corpus_accuracy.py [N]
Takes about a minute for the default N=5000.
"""

import sys

from lshensemble.baselines import asym_build, build_baseline
from lshensemble.corpus import synthetic_corpus
from lshensemble.ensemble import Ensemble, EnsembleConfig
from lshensemble.evaluation import ExactIndex, GroundTruth, run_threshold_sweep, sample_queries
from lshensemble.partition import stats

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
corpus = synthetic_corpus(n, alpha=2.0, min_size=10, max_size=20_000, seed=3)
report = stats([len(d.values) for d in corpus])
print(f"{n} domains, sizes {report.min:.0f}..{report.max:.0f}, mean {report.mean:.1f}, skewness {report.skewness:.1f}")

queries = sample_queries(corpus, 50, seed=3)
truth = GroundTruth.compute(ExactIndex(corpus), queries)
thresholds = (0.2, 0.5, 0.8, 1.0)

indexes = {
    "single LSH": build_baseline(corpus),
    "ensemble n=8": Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=8)),
    "ensemble n=32": Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=32)),
    "padded (asym)": asym_build(corpus)[0],
}
print(f"\n{'index':15s}" + "".join(f"  t*={t:<4}  P     R  " for t in thresholds))
for name, index in indexes.items():
    rows = run_threshold_sweep(index, corpus, queries, thresholds, truth).rows
    print(f"{name:15s}" + "".join(f"        {r.precision:.2f}  {r.recall:.2f}" for r in rows))
print("\nPartitioning lifts precision at a small recall cost; padding to the largest size\n"
      "makes small queries nearly invisible at high thresholds.")
