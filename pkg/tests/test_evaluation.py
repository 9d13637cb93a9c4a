import json

import numpy as np
import pytest

from lshensemble.baselines import asym_build, build_baseline
from lshensemble.corpus import synthetic_corpus
from lshensemble.ensemble import Ensemble, EnsembleConfig
from lshensemble.evaluation import (
    DEFAULT_THRESHOLDS,
    ExactIndex,
    GroundTruth,
    ensemble_factory,
    exact_containment_search,
    run_partition_deviation_sweep,
    run_skew_sweep,
    run_threshold_sweep,
    sample_queries,
    score,
)
from lshensemble.minhash import Domain
from lshensemble.partition import equi_depth_partition


def dom(ident, *values):
    return Domain(ident, frozenset(values))


PROVINCES = dom("Provinces", "Alberta", "Ontario", "Manitoba")
LOCATIONS = dom("Locations", "Illinois", "Chicago", "New York City", "New York", "Nova Scotia",
                "Halifax", "California", "San Francisco", "Seattle", "Washington", "Ontario",
                "Toronto")
QUERY = dom("Q", "Ontario", "Toronto")


class OracleIndex:
    def __init__(self, corpus):
        self.exact = ExactIndex(corpus)

    def search(self, query, threshold):
        return self.exact.search(query, threshold)


@pytest.fixture(scope="module")
def corpus():
    return synthetic_corpus(800, alpha=2.0, min_size=10, max_size=2000, seed=6)


def test_worked_example():
    corpus = [PROVINCES, LOCATIONS]
    t = dict(zip(["Provinces", "Locations"], ExactIndex(corpus).containment(QUERY)))
    assert t == {"Provinces": 0.5, "Locations": 1.0}
    assert exact_containment_search(corpus, QUERY, 0.6) == {"Locations"}
    assert ExactIndex(corpus).search(QUERY, 0.6) == {"Locations"}
    assert exact_containment_search(corpus, QUERY, 0.5) == {"Provinces", "Locations"}


def test_zero_threshold_returns_everything():
    corpus = [PROVINCES, LOCATIONS, dom("other", "x", "y")]
    assert exact_containment_search(corpus, QUERY, 0.0) == {"Provinces", "Locations", "other"}
    assert ExactIndex(corpus).search(QUERY, 0.0) == {"Provinces", "Locations", "other"}


def test_self_in_full_containment(corpus):
    exact = ExactIndex(corpus)
    for d in corpus[::50]:
        assert d.id in exact.search(d, 1.0)
        assert exact.search(d, 0.7) == exact_containment_search(corpus, d, 0.7)


def test_score_examples():
    s = score({"a", "b"}, {"a", "b"})
    assert (s.precision, s.recall, s.f_beta) == (1.0, 1.0, 1.0)
    s = score({"a", "b"}, {"b", "c"})
    assert (s.precision, s.recall, s.f_beta) == (0.5, 0.5, 0.5)
    s = score({"a"}, {"a", "b"}, beta=0.5)
    assert s.f_beta == pytest.approx(1.25 * 0.5 / (0.25 * 1.0 + 0.5))
    assert s.f_beta == pytest.approx(0.8333, abs=1e-4)


def test_score_empty_sets():
    s = score(set(), {"a"})
    assert s.precision == 1.0 and s.recall == 0.0 and s.empty_result
    s = score({"a"}, set())
    assert s.recall == 1.0 and s.precision == 0.0 and not s.empty_result
    assert score(set(), set()).f_beta == 1.0


def test_score_is_set_based():
    assert score(["b", "a", "a"], ("a", "c")) == score({"a", "b"}, {"c", "a"})


def test_truth_monotone(corpus):
    queries = sample_queries(corpus, 30, seed=2)
    truth = GroundTruth.compute(ExactIndex(corpus), queries)
    for q in queries:
        sets = [truth.relevant(q.id, t) for t in DEFAULT_THRESHOLDS]
        assert all(b <= a for a, b in zip(sets, sets[1:]))
    with pytest.raises(ValueError):
        truth.relevant(queries[0].id, 0.0)


def test_truth_cache(tmp_path, corpus):
    queries = sample_queries(corpus, 10, seed=2)
    path = tmp_path / "truth.json"
    calls = []

    def factory():
        calls.append(1)
        return ExactIndex(corpus)

    first = GroundTruth.cached(path, factory, queries)
    second = GroundTruth.cached(path, factory, queries)
    assert len(calls) == 1 and first.scores == second.scores
    more = sample_queries(corpus, 20, seed=9)
    GroundTruth.cached(path, factory, more)
    assert len(calls) == 2


def test_sample_queries():
    c = [dom(f"d{k}", "v") for k in range(10)]
    a = sample_queries(c, 5, seed=1)
    assert a == sample_queries(c, 5, seed=1) and len({d.id for d in a}) == 5
    assert len(sample_queries(c, 50)) == 10


def test_perfect_index(corpus):
    queries = sample_queries(corpus, 25, seed=3)
    report = run_threshold_sweep(OracleIndex(corpus), corpus, queries)
    assert len(report.rows) == 20
    for row in report.rows:
        assert (row.precision, row.recall, row.f1, row.f05) == (1.0, 1.0, 1.0, 1.0)


def test_report_reproducible_from_details(corpus):
    queries = sample_queries(corpus, 25, seed=4)
    index = Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=8))
    report = run_threshold_sweep(index, corpus, queries, (0.3, 0.8))
    data = json.loads(report.to_json())
    for row in report.rows:
        per = [d for d in data["queries"] if d["threshold"] == row.threshold]
        p = [d["hits"] / d["returned"] if d["returned"] else 1.0 for d in per]
        r = [d["hits"] / d["relevant"] if d["relevant"] else 1.0 for d in per]
        assert np.mean(p) == pytest.approx(row.precision)
        assert np.mean(r) == pytest.approx(row.recall)
        assert sum(d["returned"] == 0 for d in per) == row.empty_results
        for metric in ("precision", "recall", "f1", "f05", "precision_nonempty"):
            assert 0.0 <= getattr(row, metric) <= 1.0
    csv_lines = report.to_csv().splitlines()
    assert csv_lines[0].startswith("threshold,queries,precision")
    assert len(csv_lines) == 3


def test_parallel_sweep_matches_serial(corpus):
    queries = sample_queries(corpus, 20, seed=5)
    index = Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=8))
    truth = GroundTruth.compute(ExactIndex(corpus), queries)
    a = run_threshold_sweep(index, corpus, queries, (0.2, 0.6), truth)
    b = run_threshold_sweep(index, corpus, queries, (0.2, 0.6), truth, workers=4)
    assert a.rows == b.rows and a.details == b.details


def test_ensemble_beats_baseline_f05():
    corpus = synthetic_corpus(5000, alpha=2.0, min_size=10, max_size=5000, seed=11)
    queries = sample_queries(corpus, 60, seed=11)
    truth = GroundTruth.compute(ExactIndex(corpus), queries)
    ts = (0.3, 0.5, 0.7)
    ens = run_threshold_sweep(Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=32)),
                              corpus, queries, ts, truth)
    base = run_threshold_sweep(build_baseline(corpus), corpus, queries, ts, truth)
    for t in ts:
        assert ens.row(t).f05 >= base.row(t).f05


def test_asym_recall_vanishes_at_high_threshold():
    corpus = synthetic_corpus(2000, alpha=2.0, min_size=10, max_size=30_000, seed=12)
    queries = sample_queries([d for d in corpus if len(d.values) <= 100], 40, seed=1)
    asym, _ = asym_build(corpus)
    report = run_threshold_sweep(asym, corpus, queries, (0.1, 0.5, 0.9, 1.0))
    recalls = [r.recall for r in report.rows]
    assert recalls[-1] <= 0.05
    assert recalls[0] > recalls[-1]


def test_skew_sweep_trends():
    corpus = synthetic_corpus(4000, alpha=2.0, min_size=10, max_size=10_000, seed=1)
    builders = {
        "baseline": build_baseline,
        "ensemble": ensemble_factory(EnsembleConfig(num_partitions=16)),
    }
    rows = run_skew_sweep(corpus, builders, n_subsets=8, queries_per_subset=40)
    assert len(rows) == 8
    skews = [r.skewness for r in rows]
    assert skews[0] == min(skews)
    assert all(a.upper < b.upper and a.domains <= b.domains for a, b in zip(rows, rows[1:]))
    base = np.array([r.reports["baseline"].row(0.5).precision for r in rows])
    ens = np.array([r.reports["ensemble"].row(0.5).precision for r in rows])
    rank = lambda v: np.argsort(np.argsort(v))
    assert np.corrcoef(rank(np.array(skews)), rank(base))[0, 1] < 0
    assert base[0] - base.min() > ens[0] - ens.min()


def test_skew_sweep_reports_short_sweep(caplog):
    corpus = [dom(f"d{k}", *(f"v{j}" for j in range(10 + k % 3))) for k in range(40)]
    rows = run_skew_sweep(corpus, {"oracle": OracleIndex}, n_subsets=10, queries_per_subset=5)
    assert 0 < len(rows) < 10
    assert "distinct subsets" in caplog.text


def test_deviation_sweep(corpus):
    queries = sample_queries(corpus, 40, seed=8)
    cfg = EnsembleConfig(num_partitions=8)
    rows = run_partition_deviation_sweep(corpus, 8, [0.0, 0.1, 0.2, 0.5, 1.0], queries, (0.5,), cfg)
    sizes = [len(d.values) for d in corpus]
    assert tuple(rows[0].boundaries) == equi_depth_partition(sizes, 8).boundaries
    plain = run_threshold_sweep(Ensemble.bootstrap(corpus, cfg), corpus, queries, (0.5,))
    assert rows[0].report.rows == plain.rows
    stds = [r.size_std for r in rows]
    assert all(a <= b for a, b in zip(stds, stds[1:]))
    p = [r.report.row(0.5).precision for r in rows]
    assert abs(p[1] - p[0]) <= 0.05 and abs(p[2] - p[0]) <= 0.05
    with pytest.raises(ValueError):
        run_partition_deviation_sweep(corpus, 1, [0.0], queries)
