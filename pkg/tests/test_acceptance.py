"""Acceptance checks, one test per criterion.

Each test prints a ``CRITERION n: PASS|FAIL`` line with the measured numbers
and then asserts on the same condition. Tolerances are fixed here and never
relaxed to make a run pass.
"""

import time
from contextlib import ExitStack
from fractions import Fraction

import numpy as np
import pytest

from lshensemble.baselines import asym_build, asym_candidate_probability
from lshensemble.cli import main as cli_main
from lshensemble.containment import (
    SizeInterval,
    conservative_jaccard_threshold,
    containment_to_jaccard,
    effective_containment_threshold,
    fp_probability,
    fp_upper_bound,
    jaccard_to_containment,
    partition_cost,
)
from lshensemble.corpus import read_corpus, synthetic_corpus
from lshensemble.ensemble import Ensemble, EnsembleConfig
from lshensemble.evaluation import (
    ExactIndex,
    GroundTruth,
    run_partition_deviation_sweep,
    run_threshold_sweep,
    sample_queries,
)
from lshensemble.forest import BandLattice, LshForest
from lshensemble.minhash import Domain, build_signatures, pad_signatures
from lshensemble.partition import (
    PowerLawModel,
    equi_depth_partition,
    optimal_partition_bruteforce,
    sample_power_law,
)
from lshensemble.service import BackgroundServer, ShardSet, fanout_query
from lshensemble.tuning import TuningParams, candidate_probability

pytestmark = pytest.mark.slow

# shared corpus for criteria 6 and 8
N_DOMAINS = 10_000
ALPHA = 2.0
MIN_SIZE = 10
MAX_SIZE = 50_000
CORPUS_SEED = 17
N_QUERIES = 60


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {number}: {detail}"


@pytest.fixture(scope="module")
def big_corpus():
    return synthetic_corpus(N_DOMAINS, ALPHA, MIN_SIZE, MAX_SIZE, seed=CORPUS_SEED)


@pytest.fixture(scope="module")
def big_queries(big_corpus):
    return sample_queries(big_corpus, N_QUERIES, seed=CORPUS_SEED)


@pytest.fixture(scope="module")
def big_truth(big_corpus, big_queries):
    return GroundTruth.compute(ExactIndex(big_corpus), big_queries)


# 1

def test_criterion_1_exact_math(capsys):
    start = time.perf_counter()
    failures = []

    def check(name, got, want, tol=1e-12):
        if not abs(got - want) <= tol:
            failures.append(f"{name}={got!r} want {want!r}")

    check("s(0.5,4,4)", containment_to_jaccard(0.5, 4, 4), 1 / 3)
    check("s(1,5,5)", containment_to_jaccard(1.0, 5, 5), 1.0)
    check("t(1/3,2,2)", jaccard_to_containment(1 / 3, 2, 2), 0.5)
    worst = 0.0
    for x in np.geomspace(1, 1e6, 25):
        for q in np.geomspace(1, 1e6, 25):
            for frac in np.linspace(0, 1, 11):
                t = frac * min(1.0, x / q)
                worst = max(worst, abs(jaccard_to_containment(containment_to_jaccard(t, x, q), x, q) - t))
    check("round trip worst error", worst, 0.0)

    check("s*(u=q,t=1)", conservative_jaccard_threshold(1.0, 7, 7), 1.0)
    check("s*(3,1,0.5)", conservative_jaccard_threshold(0.5, 3, 1), 1 / 7)
    check("s*(1000,10,0.5)", conservative_jaccard_threshold(0.5, 1000, 10), 0.5 / 100.5)

    check("t_x(x=u)", effective_containment_threshold(40, 9, 40, 0.7), 0.7)
    check("t_x(1,1,3,0.5)", effective_containment_threshold(1, 1, 3, 0.5), 0.25)
    check("t_x(1,1,1000,1)", effective_containment_threshold(1, 1, 1000, 1.0), 2 / 1001)
    check("fp(1,1,3,1,0.5)", fp_probability(1, 1, 3, 1, 0.5), 0.5)
    check("fp(x=u)", fp_probability(30, 4, 30, 10, 0.6), 0.0)

    check("bound(10,20,100)", fp_upper_bound(SizeInterval(10, 20), 100).fp_upper_bound, 27.5)
    check("bound(width 1)", fp_upper_bound(SizeInterval(41, 42), 84).fp_upper_bound, 84 * 2 / 84)
    check("bound(count 0)", fp_upper_bound(SizeInterval(10, 20), 0).fp_upper_bound, 0.0)
    ests = [fp_upper_bound(SizeInterval(10, 20), c) for c in (100, 40, 1)]
    check("cost=max", partition_cost(ests), max(e.fp_upper_bound for e in ests))

    p = candidate_probability(0.5, 10, 5, TuningParams(256, 4))
    check("P(0.5|10,5,256,4)", p, 1 - (1 - 0.2**4) ** 256)
    check("P reference value", p, 0.33630, tol=5e-5)
    check("P(t=0)", candidate_probability(0.0, 10, 5, TuningParams(8, 2)), 0.0)
    check("P(b=r=1)", candidate_probability(0.5, 4, 4, TuningParams(1, 1)), 1 / 3)

    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 1.0
    verdict(capsys, 1, ok, f"{len(failures)} mismatches {failures[:3]} in {elapsed:.3f}s (limit 1s)")


# 2

def naive_band_hits(corpus, q, lattice):
    """hits[b-1, r-1] = set of rows matching q on any of the first b bands at depth r."""
    width = lattice.r_max
    out = {}
    for r in range(1, lattice.r_max + 1):
        seen = np.zeros(len(corpus), dtype=bool)
        for b in range(1, lattice.b_max + 1):
            lo = (b - 1) * width
            seen |= np.all(corpus[:, lo:lo + r] == q[lo:lo + r], axis=1)
            out[b, r] = set(np.flatnonzero(seen).tolist())
    return out


def test_criterion_2_forest_equals_naive_banding(capsys):
    start = time.perf_counter()
    lattice = BandLattice(64, 4)
    rng = np.random.default_rng(2)
    mismatches = checked = 0
    for n, alphabet in [(200, 2), (400, 3), (600, 3), (800, 4), (1000, 5)]:
        corpus = rng.integers(0, alphabet, size=(n, lattice.num_perm), dtype=np.uint64)
        forest = LshForest(lattice)
        forest.insert_many([f"d{j}" for j in range(n)], corpus)
        forest.freeze()
        queries = list(rng.integers(0, alphabet, size=(4, lattice.num_perm), dtype=np.uint64))
        queries += [corpus[0], corpus[n - 1]]
        for q in queries:
            want = naive_band_hits(corpus, q, lattice)
            for (b, r), rows in want.items():
                checked += 1
                mismatches += set(forest.query_indices(q, b, r).tolist()) != rows
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30
    verdict(capsys, 2, ok, f"{mismatches}/{checked} (corpus, query, b, r) mismatches in {elapsed:.1f}s (limit 30s)")


# 3

def disjoint_pair(tag, inter, only_x, only_y):
    shared = [f"{tag}s{k}" for k in range(inter)]
    return (shared + [f"{tag}x{k}" for k in range(only_x)],
            shared + [f"{tag}y{k}" for k in range(only_y)])


def test_criterion_3_probability_calibration(capsys):
    start = time.perf_counter()
    trials = 2000  # above the 500 minimum; sigma ~0.011 against the 0.05 band
    rows = []
    # banding curve: pairs at fixed Jaccard, every pair independent
    lattice = BandLattice(32, 4)
    shapes = {1 / 3: (50, 50, 50), 1 / 2: (100, 50, 50), 3 / 4: (150, 25, 25)}
    for s, shape in shapes.items():
        pairs = [disjoint_pair(f"{s:.2f}_{j}_", *shape) for j in range(trials)]
        xs = build_signatures([p[0] for p in pairs], lattice.num_perm, seed=3)
        ys = build_signatures([p[1] for p in pairs], lattice.num_perm, seed=3)
        forest = LshForest(lattice)
        forest.insert_many([f"d{j}" for j in range(trials)], xs)
        forest.freeze()
        for b, r in [(4, 2), (8, 4), (32, 4), (16, 3)]:
            rate = np.mean([j in set(forest.query_indices(ys[j], b, r).tolist()) for j in range(trials)])
            rows.append(("banding", s, b, r, rate, 1 - (1 - s**r) ** b))
    # padded indexing at full containment: query of q values inside a domain padded to M
    for M, q in [(100, 20), (200, 10)]:
        pairs = [disjoint_pair(f"M{M}_{j}_", q, 30, 0) for j in range(trials)]
        mins = build_signatures([p[0] for p in pairs], 256, seed=5)
        mins = pad_signatures(mins, np.full(trials, M - q - 30), seed=5)
        qmins = build_signatures([p[1] for p in pairs], 256, seed=5)
        forest = LshForest(BandLattice(64, 4))
        forest.insert_many([f"d{j}" for j in range(trials)], mins)
        forest.freeze()
        for b, r in [(8, 1), (16, 2), (64, 3)]:
            rate = np.mean([j in set(forest.query_indices(qmins[j], b, r).tolist()) for j in range(trials)])
            rows.append(("padded", (M, q), b, r, rate, asym_candidate_probability(M, q, TuningParams(b, r))))
    worst = max(rows, key=lambda row: abs(row[4] - row[5]))
    gap = abs(worst[4] - worst[5])
    elapsed = time.perf_counter() - start
    ok = gap <= 0.05 and len(rows) >= 10 and elapsed < 120
    verdict(capsys, 3, ok, f"{len(rows)} points x {trials} trials, worst |empirical-model|={gap:.3f} "
                           f"at {worst[:4]} (limit 0.05) in {elapsed:.1f}s (limit 120s)")


# 4

def small_overlapping_corpus(rng, n):
    sizes = sample_power_law(PowerLawModel(2.0, 2, 120), n, seed=int(rng.integers(1 << 30)))
    universe = 200
    return [Domain(f"d{j}", frozenset(f"v{k}" for k in rng.choice(universe, s, replace=False)))
            for j, s in enumerate(sizes.tolist())]


def test_criterion_4_no_new_false_negatives(capsys):
    rng = np.random.default_rng(4)
    violations = checked = 0
    for c in range(10):
        corpus = small_overlapping_corpus(rng, int(rng.integers(60, 201)))
        index = Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=int(rng.integers(2, 9)), min_size=1))
        owner = index.partitioning.assign([len(d.values) for d in corpus])
        queries = corpus[::7]
        for qd in queries:
            q = len(qd.values)
            for t_star in (0.25, 0.5, 0.75, 1.0):
                res = index.query(index.signature(qd), t_star, q)
                s_star = [Fraction(diag.jaccard_threshold) for diag in res.diagnostics]
                for x, i in zip(corpus, owner):
                    inter = len(qd.values & x.values)
                    if Fraction(inter, q) < Fraction(t_star):
                        continue
                    checked += 1
                    s = Fraction(inter, len(qd.values | x.values))
                    # float threshold may round one ulp above the exact rational value
                    if s < s_star[i] * (1 - Fraction(1, 10**12)):
                        violations += 1
    ok = violations == 0 and checked > 0
    verdict(capsys, 4, ok, f"{violations} violations over {checked} (query, domain, t*) with t>=t*")


# 5

def test_criterion_5_equi_depth_near_optimal(capsys):
    start = time.perf_counter()
    ratios = {}
    for alpha in (1.5, 2.0, 2.5):
        sizes = sample_power_law(PowerLawModel(alpha, 10, 10_000), 1000, seed=5)
        depth = equi_depth_partition(sizes, 8).cost()
        best = optimal_partition_bruteforce(sizes, 8).cost()
        ratios[alpha] = depth / best
    elapsed = time.perf_counter() - start
    ok = max(ratios.values()) <= 1.3 and elapsed < 120
    shown = ", ".join(f"alpha={a}: {r:.2f}" for a, r in ratios.items())
    verdict(capsys, 5, ok, f"cost(equi-depth)/cost(optimal) {shown} (limit 1.3) in {elapsed:.1f}s")


# 6

def test_criterion_6_trends(capsys, big_corpus, big_queries, big_truth):
    start = time.perf_counter()
    sizes = np.array([len(d.values) for d in big_corpus])
    skew_ratio = sizes.max() / np.median(sizes)
    ts = (0.5, 0.9, 1.0)
    reports = {}
    for n in (1, 8, 32):
        index = Ensemble.bootstrap(big_corpus, EnsembleConfig(num_partitions=n))
        reports[n] = run_threshold_sweep(index, big_corpus, big_queries, ts, big_truth)
    asym, _ = asym_build(big_corpus)
    asym_report = run_threshold_sweep(asym, big_corpus, big_queries, (0.9, 1.0), big_truth)

    p = {n: reports[n].row(0.5).precision for n in reports}
    r = {n: reports[n].row(0.5).recall for n in reports}
    ok_a = p[32] >= p[8] >= p[1]
    ok_b = r[32] >= r[1] - 0.1
    asym_r = [asym_report.row(t).recall for t in (0.9, 1.0)]
    ens_r = [reports[32].row(t).recall for t in (0.9, 1.0)]
    ok_c = skew_ratio >= 1000 and max(asym_r) <= 0.2 and min(ens_r) >= 0.8

    n_dev = 32
    # equi-width cuts on this range are coarse, so the std limit is crossed near lambda 0.004
    lambdas = [0.0, 0.0005, 0.001, 0.002, 0.003, 0.005, 0.01, 0.05, 0.2, 1.0]
    rows = run_partition_deviation_sweep(big_corpus, n_dev, lambdas, big_queries, (0.5,),
                                         EnsembleConfig(num_partitions=n_dev))
    limit = 2 * len(big_corpus) / n_dev
    p0 = rows[0].report.row(0.5).precision
    within = [row for row in rows if row.size_std <= limit]
    drift = max(abs(row.report.row(0.5).precision - p0) for row in within)
    ok_d = drift <= 0.05
    elapsed = time.perf_counter() - start

    with capsys.disabled():
        print(f"\n  6a precision@0.5 n1={p[1]:.3f} n8={p[8]:.3f} n32={p[32]:.3f} -> {'PASS' if ok_a else 'FAIL'}")
        print(f"  6b recall@0.5 n1={r[1]:.3f} n32={r[32]:.3f} (allowed drop 0.1) -> {'PASS' if ok_b else 'FAIL'}")
        print(f"  6c max/median={skew_ratio:.0f} asym recall@0.9,1.0={asym_r[0]:.3f},{asym_r[1]:.3f} (<=0.2) "
              f"ensemble recall@0.9,1.0={ens_r[0]:.3f},{ens_r[1]:.3f} (>=0.8) -> {'PASS' if ok_c else 'FAIL'}")
        print(f"  6d {len(within)}/{len(rows)} sweep points with count std <= {limit:.0f}, "
              f"max precision change {drift:.3f} (<=0.05) -> {'PASS' if ok_d else 'FAIL'}")
    ok = ok_a and ok_b and ok_c and ok_d and elapsed < 600
    failed = [k for k, v in zip("abcd", (ok_a, ok_b, ok_c, ok_d)) if not v]
    verdict(capsys, 6, ok, f"N={len(big_corpus)}, {len(big_queries)} queries, failed parts {failed or 'none'}, "
                           f"{elapsed:.0f}s (limit 600s)")


# 7

def test_criterion_7_performance(capsys):
    corpus = synthetic_corpus(100_000, 2.0, 10, 1500, seed=7)
    mean_size = float(np.mean([len(d.values) for d in corpus]))
    start = time.perf_counter()
    n32 = Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=32))
    build = time.perf_counter() - start
    n1 = Ensemble.bootstrap(corpus, EnsembleConfig(num_partitions=1))
    queries = sample_queries(corpus, 300, seed=7)
    sigs = [(n32.signature(q), len(q.values)) for q in queries]

    def mean_latency(index):
        for sig, size in sigs[:20]:
            index.query(sig, 0.5, size)
        tick = time.perf_counter()
        for sig, size in sigs:
            index.query(sig, 0.5, size)
        return (time.perf_counter() - tick) / len(sigs)

    lat32, lat1 = mean_latency(n32), mean_latency(n1)
    ok = build < 60 and lat32 < 0.05 and lat32 < lat1
    verdict(capsys, 7, ok, f"100000 domains (mean size {mean_size:.1f}) indexed in {build:.1f}s (limit 60s); "
                           f"latency n32={lat32 * 1e3:.2f}ms (limit 50ms) n1={lat1 * 1e3:.2f}ms")


# 8

def test_criterion_8_sharded_service(capsys, tmp_path, big_corpus, big_queries, big_truth):
    corpus_path = tmp_path / "corpus.jsonl"
    assert cli_main(["ingest", "--synthetic", str(N_DOMAINS), "--alpha", str(ALPHA),
                     "--max-size", str(MAX_SIZE), "--seed", str(CORPUS_SEED), "-o", str(corpus_path)]) == 0
    ingested = list(read_corpus(corpus_path))
    assert [d.id for d in ingested] == [d.id for d in big_corpus]
    assert cli_main(["index", str(corpus_path), "-o", str(tmp_path / "mono")]) == 0
    assert cli_main(["index", str(corpus_path), "-o", str(tmp_path / "sharded"), "--shards", "3"]) == 0
    mono = Ensemble.load(tmp_path / "mono")
    shards = [Ensemble.load(tmp_path / "sharded" / f"shard-{k}") for k in range(3)]

    t = 0.5
    with ExitStack() as stack:
        servers = [stack.enter_context(BackgroundServer(s)) for s in shards]
        shard_set = ShardSet.discover([s.url for s in servers])
        mono_r, fan_r, complete = [], [], True
        for q in big_queries:
            truth = big_truth.relevant(q.id, t)
            sig = mono.signature(q)
            a = set(mono.query(sig, t, len(q.values)).candidates)
            res = fanout_query(shard_set, sig, t, len(q.values))
            complete &= res.complete
            mono_r.append(len(a & truth) / len(truth) if truth else 1.0)
            fan_r.append(len(res.candidates & truth) / len(truth) if truth else 1.0)
    gap = abs(np.mean(mono_r) - np.mean(fan_r))
    ok = complete and gap <= 0.02
    verdict(capsys, 8, ok, f"recall@{t} monolithic={np.mean(mono_r):.3f} 3-shard fanout={np.mean(fan_r):.3f} "
                           f"gap={gap:.3f} (limit 0.02), all shards answered={complete}")
