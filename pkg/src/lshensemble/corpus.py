"""Reading, writing and generating domain corpora.

A corpus file is newline-delimited JSON, one ``{"id": ..., "values": [...]}``
record per domain, with a ``<file>.manifest.json`` sidecar.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .minhash import Domain
from .partition import PowerLawModel, StatsReport, sample_power_law, stats

log = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
_ASCII_WS = " \t\r\n\x0b\x0c"


class CorpusFormatError(ValueError):
    pass


@dataclass
class IngestReport:
    files: int = 0
    domains: int = 0
    dropped_small: int = 0
    malformed_rows: int = 0
    errors: dict = field(default_factory=dict)


@dataclass
class CorpusManifest:
    sources: list
    domain_count: int
    size_histogram: list
    min_size: Optional[int] = None
    seed: Optional[int] = None
    created: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _ingest_file(path, min_size, header, report) -> Iterator[Domain]:
    with open(path, newline="", encoding="utf-8", errors="surrogateescape") as fh:
        rows = csv.reader(fh)
        try:
            first = next(rows)
        except StopIteration:
            return
        width = len(first)
        if header is None:
            cells = [c.strip(_ASCII_WS) for c in first]
            header = all(c and not _is_number(c) for c in cells)
        names = [c.strip(_ASCII_WS) for c in first] if header else [""] * width
        columns: list[set] = [set() for _ in range(width)]
        body = rows if header else _prepend(first, rows)
        for row in body:
            if len(row) != width:
                report.malformed_rows += 1
                continue
            for col, cell in zip(columns, row):
                cell = cell.strip(_ASCII_WS)
                if cell:
                    col.add(cell)
    for i, values in enumerate(columns):
        if len(values) < max(min_size, 1):
            report.dropped_small += 1
            continue
        report.domains += 1
        yield Domain(f"{path}#{i}:{names[i]}", frozenset(values))


def _prepend(first, rows):
    yield first
    yield from rows


def _read_one(path, min_size, header):
    part = IngestReport()
    try:
        return list(_ingest_file(path, min_size, header, part)), part, None
    except (OSError, csv.Error) as exc:
        return [], part, exc


def ingest_csv(
    paths: Iterable[PathLike],
    min_size: int = 10,
    header: Optional[bool] = None,
    report: Optional[IngestReport] = None,
    workers: int = 4,
) -> Iterator[Domain]:
    """One domain per CSV column: distinct, trimmed, non-empty cell values.

    ``header=None`` treats the first row as a header when none of its cells
    parse as numbers. Rows whose width differs from the first row are skipped.
    Unreadable files are logged in ``report.errors`` and skipped. Files are
    read concurrently; output keeps the order of ``paths``.
    """
    report = report if report is not None else IngestReport()
    paths = [str(p) for p in paths]
    with ThreadPoolExecutor(max(1, workers)) as pool:
        results = pool.map(lambda p: _read_one(p, min_size, header), paths)
        for path, (domains, part, exc) in zip(paths, results):
            report.dropped_small += part.dropped_small
            report.malformed_rows += part.malformed_rows
            if exc is not None:
                log.warning("skipping %s: %s", path, exc)
                report.errors[path] = str(exc)
                continue
            report.files += 1
            report.domains += part.domains
            yield from domains


def _json_value(v) -> str:
    return v.decode("utf-8", "surrogateescape") if isinstance(v, bytes) else v


def write_corpus(
    domains: Iterable[Domain],
    path: PathLike,
    sources: Sequence[str] = (),
    min_size: Optional[int] = None,
    seed: Optional[int] = None,
) -> CorpusManifest:
    path = Path(path)
    sizes = []
    with open(path, "w", encoding="utf-8") as fh:
        for d in domains:
            values = sorted(_json_value(v) for v in d.values)
            fh.write(json.dumps({"id": d.id, "values": values}) + "\n")
            sizes.append(len(values))
    manifest = CorpusManifest(
        sources=[str(s) for s in sources],
        domain_count=len(sizes),
        size_histogram=size_histogram(sizes) if sizes else [],
        min_size=min_size,
        seed=seed,
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    manifest_path(path).write_text(manifest.to_json())
    return manifest


def manifest_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def read_manifest(path: PathLike) -> CorpusManifest:
    return CorpusManifest(**json.loads(manifest_path(path).read_text()))


def read_corpus(path: PathLike) -> Iterator[Domain]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ident, values = rec["id"], rec["values"]
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            except (KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: record needs 'id' and 'values'") from exc
            if not isinstance(values, list) or not values:
                raise CorpusFormatError(f"{path}:{lineno}: 'values' must be a nonempty list")
            yield Domain(str(ident), frozenset(values))


def size_histogram(sizes: Sequence[int]) -> list:
    """Counts per power-of-two size bin, as ``[lower, upper, count]`` rows."""
    sizes = np.asarray(sizes, dtype=np.int64)
    exps = np.floor(np.log2(sizes)).astype(int)
    rows = []
    for e in range(int(exps.min()), int(exps.max()) + 1):
        rows.append([1 << e, 1 << (e + 1), int(np.count_nonzero(exps == e))])
    return rows


def corpus_stats(path: PathLike) -> tuple[StatsReport, list]:
    sizes = [len(d.values) for d in read_corpus(path)]
    if not sizes:
        raise CorpusFormatError(f"{path}: corpus is empty")
    return stats(sizes), size_histogram(sizes)


def synthetic_corpus(
    n_domains: int,
    alpha: float = 2.0,
    min_size: int = 10,
    max_size: int = 2000,
    universe: Optional[int] = None,
    seed: int = 0,
    prefix: str = "d",
) -> list[Domain]:
    """Domains of power-law sizes, each a random contiguous run of a shared universe.

    Overlaps between runs give every query a spread of containment scores:
    larger domains are more likely to contain a given query.
    """
    sizes = sample_power_law(PowerLawModel(alpha, min_size, max_size), n_domains, seed)
    universe = universe or 4 * max_size
    if universe < sizes.max():
        raise ValueError("universe smaller than the largest domain")
    rng = np.random.default_rng([seed, 1])
    starts = rng.integers(0, universe - sizes + 1)
    width = len(str(n_domains - 1))
    return [
        Domain(f"{prefix}{j:0{width}d}", frozenset(f"v{k}" for k in range(s, s + x)))
        for j, (s, x) in enumerate(zip(starts.tolist(), sizes.tolist()))
    ]


def log_slope(sizes: Sequence[int], bins_per_decade: int = 5) -> float:
    """Least-squares slope of the log-log density over log-spaced bins."""
    sizes = np.asarray(sizes, dtype=float)
    lo, hi = math.log10(sizes.min()), math.log10(sizes.max() + 1)
    edges = np.logspace(lo, hi, max(2, int((hi - lo) * bins_per_decade)) + 1)
    counts, edges = np.histogram(sizes, bins=edges)
    density = counts / np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    keep = counts > 0
    return float(np.polyfit(np.log10(centers[keep]), np.log10(density[keep]), 1)[0])
