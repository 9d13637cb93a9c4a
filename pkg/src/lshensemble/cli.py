"""Command line entry point: ``lshensemble <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import corpus as corpus_io
from .baselines import asym_build, build_baseline
from .ensemble import Ensemble, EnsembleConfig
from .evaluation import (
    DEFAULT_THRESHOLDS,
    ExactIndex,
    GroundTruth,
    run_threshold_sweep,
    sample_queries,
)
from .minhash import DEFAULT_NUM_PERM, DEFAULT_SEED, Domain, build_signature

log = logging.getLogger("lshensemble")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # single line so callers can parse it
        self.exit(2, f"error: usage: {self.prog}: {message}\n")


def _threshold(text: str) -> float:
    try:
        t = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < t <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in (0, 1], got {text}")
    return t


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _thresholds(text: str) -> list[float]:
    return [_threshold(t) for t in text.split(",") if t.strip()]


def _index_flags(p):
    p.add_argument("--num-perm", type=_positive, default=DEFAULT_NUM_PERM)
    p.add_argument("--partitions", type=_positive, default=32)
    p.add_argument("--rmax", type=_positive, default=4)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--min-size", type=_positive, default=10)


def _config(args) -> EnsembleConfig:
    try:
        return EnsembleConfig(args.num_perm, args.partitions, args.rmax, args.seed, args.min_size)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_corpus(path) -> list[Domain]:
    domains = list(corpus_io.read_corpus(path))
    if not domains:
        raise CliError(f"{path}: corpus is empty")
    return domains


def _build(kind: str, domains, config: EnsembleConfig) -> Ensemble:
    if kind == "ensemble":
        return Ensemble.bootstrap(domains, config)
    if kind == "baseline":
        return build_baseline(domains, config)
    return asym_build(domains, config)[0]


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_ingest(args) -> None:
    if args.synthetic:
        domains = corpus_io.synthetic_corpus(
            args.synthetic, alpha=args.alpha, min_size=args.min_size,
            max_size=args.max_size, seed=args.seed,
        )
        sources, report = [f"synthetic:n={args.synthetic},alpha={args.alpha}"], None
    else:
        if not args.csv:
            raise CliError("give CSV files or --synthetic N")
        report = corpus_io.IngestReport()
        domains = list(corpus_io.ingest_csv(args.csv, args.min_size, report=report))
        sources = [str(p) for p in args.csv]
    manifest = corpus_io.write_corpus(domains, args.output, sources, args.min_size, args.seed)
    summary = {"output": str(args.output), "domains": manifest.domain_count}
    if report is not None:
        summary.update(
            files=report.files, dropped_small=report.dropped_small,
            malformed_rows=report.malformed_rows, errors=report.errors,
        )
        if report.files == 0:
            _emit(summary)
            raise CliError("no input file could be read")
    _emit(summary)


def cmd_stats(args) -> None:
    report, hist = corpus_io.corpus_stats(args.corpus)
    _emit({**report.__dict__, "histogram": hist})


def cmd_index(args) -> None:
    config = _config(args)
    domains = _load_corpus(args.corpus)
    out = Path(args.output)
    if args.shards > 1:
        from .service import split_round_robin

        paths = []
        for k, part in enumerate(split_round_robin(domains, args.shards)):
            path = out / f"shard-{k}"
            _build(args.kind, part, config).save(path)
            paths.append(str(path))
        _emit({"shards": paths, "fingerprint": config.fingerprint()})
        return
    index = _build(args.kind, domains, config)
    index.save(out)
    _emit({
        "output": str(out), "kind": index.kind, "domains": len(index),
        "skipped": index.skipped, "partitions": len(index.forests),
        "fingerprint": config.fingerprint(),
    })


def _query_domain(args) -> Domain:
    if args.id is not None:
        if args.corpus is None:
            raise CliError("--id needs --corpus")
        for d in corpus_io.read_corpus(args.corpus):
            if d.id == args.id:
                return d
        raise CliError(f"no domain {args.id!r} in {args.corpus}")
    if args.values_file is not None:
        with open(args.values_file, encoding="utf-8") as fh:
            values = {line.strip() for line in fh if line.strip()}
    elif args.values is not None:
        values = {v.strip() for v in args.values.split(",") if v.strip()}
    else:
        raise CliError("give --id with --corpus, --values or --values-file")
    if not values:
        raise CliError("query domain is empty")
    return Domain("query", frozenset(values))


def cmd_query(args) -> None:
    index = Ensemble.load(args.index)
    domain = _query_domain(args)
    sig = index.signature(domain)
    size = None if args.estimate_size else len(domain.values)
    result = index.query(sig, args.threshold, size)
    _emit(result.to_dict())


def cmd_eval(args) -> None:
    config = _config(args)
    domains = _load_corpus(args.corpus)
    indexed = [d for d in domains if len(d.values) >= config.min_size]
    if not indexed:
        raise CliError("no domain reaches --min-size")
    queries = sample_queries(indexed, args.queries, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    truth = GroundTruth.cached(out / "truth.json", lambda: ExactIndex(domains), queries)
    summary = {}
    for kind in args.methods:
        index = _build(kind, domains, config)
        report = run_threshold_sweep(index, domains, queries, args.thresholds, truth)
        (out / f"{kind}.csv").write_text(report.to_csv())
        (out / f"{kind}.json").write_text(report.to_json())
        summary[kind] = str(out / f"{kind}.csv")
    _emit({"queries": len(queries), "reports": summary})


def cmd_serve(args) -> None:
    from .service import serve

    serve(Ensemble.load(args.index), args.host, args.port)


def cmd_fanout(args) -> None:
    from .service import ShardSet, fanout_query, health

    shards = ShardSet.discover(args.shards, args.timeout)
    info = health(shards.endpoints[0], args.timeout)
    domain = _query_domain(args)
    sig = build_signature(domain, info["num_perm"], info["seed"])
    size = None if args.estimate_size else len(domain.values)
    result = fanout_query(shards, sig, args.threshold, size, args.timeout)
    _emit(result.to_dict())
    if result.missing:
        raise CliError(f"partial result, missing shards: {', '.join(result.missing)}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lshensemble", description="Set-containment search with LSH Ensemble.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="CSV columns (or a synthetic corpus) to a corpus file")
    s.add_argument("csv", nargs="*", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--min-size", type=_positive, default=10)
    s.add_argument("--synthetic", type=_positive, metavar="N")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--max-size", type=_positive, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("stats", help="size statistics of a corpus")
    s.add_argument("corpus", type=Path)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("index", help="build an index snapshot")
    s.add_argument("corpus", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--kind", choices=("ensemble", "baseline", "asym"), default="ensemble")
    s.add_argument("--shards", type=_positive, default=1)
    _index_flags(s)
    s.set_defaults(func=cmd_index)

    def query_source(s):
        s.add_argument("--threshold", type=_threshold, default=0.5)
        s.add_argument("--corpus", type=Path)
        s.add_argument("--id")
        s.add_argument("--values", help="comma separated values")
        s.add_argument("--values-file", type=Path, help="one value per line")
        s.add_argument("--estimate-size", action="store_true",
                       help="use the signature's size estimate instead of the exact count")

    s = sub.add_parser("query", help="query a snapshot")
    s.add_argument("index", type=Path)
    query_source(s)
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("eval", help="accuracy against exact ground truth")
    s.add_argument("corpus", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.add_argument("--queries", type=_positive, default=200)
    s.add_argument("--thresholds", type=_thresholds, default=list(DEFAULT_THRESHOLDS))
    s.add_argument("--methods", type=lambda t: t.split(","), default=["ensemble"])
    _index_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="serve a snapshot over HTTP")
    s.add_argument("index", type=Path)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("fanout", help="query several running shards and union the results")
    s.add_argument("shards", nargs="+", help="shard base URLs")
    s.add_argument("--timeout", type=float, default=10.0)
    query_source(s)
    s.set_defaults(func=cmd_fanout)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "methods", None):
        bad = set(args.methods) - {"ensemble", "baseline", "asym"}
        if bad:
            parser.error(f"unknown method(s): {', '.join(sorted(bad))}")
    try:
        args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
