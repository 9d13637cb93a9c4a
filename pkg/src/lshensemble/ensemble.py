"""LSH Ensemble: size-partitioned LSH forests queried by containment."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .containment import conservative_jaccard_threshold
from .forest import BandLattice, LshForest, PackedForests, SnapshotError
from .minhash import (
    DEFAULT_NUM_PERM,
    DEFAULT_SEED,
    Domain,
    MinHashSignature,
    build_signature,
    build_signatures,
)
from .partition import Partitioning, equi_depth_partition, partition_with_boundaries
from .tuning import TableFormatError, TuningParams, TuningTable, default_tuning_table

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "lshensemble"
MANIFEST_VERSION = 1
DEFAULT_MIN_SIZE = 10
DEFAULT_PARTITIONS = 32
DEFAULT_R_MAX = 4


@dataclass(frozen=True)
class EnsembleConfig:
    num_perm: int = DEFAULT_NUM_PERM
    num_partitions: int = DEFAULT_PARTITIONS
    r_max: int = DEFAULT_R_MAX
    seed: int = DEFAULT_SEED
    min_size: int = DEFAULT_MIN_SIZE

    def __post_init__(self):
        if self.num_partitions < 1:
            raise ValueError("num_partitions must be >= 1")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")
        BandLattice.for_signature(self.num_perm, self.r_max)

    @property
    def lattice(self) -> BandLattice:
        return BandLattice.for_signature(self.num_perm, self.r_max)

    def fingerprint(self) -> str:
        """Identifies the signature space; shards must agree on it."""
        key = json.dumps(
            {"num_perm": self.num_perm, "seed": self.seed, "r_max": self.r_max,
             "b_max": self.lattice.b_max},
            sort_keys=True,
        )
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PartitionDiagnostics:
    lower: int
    upper: int
    upper_bound: int
    jaccard_threshold: float
    b: int
    r: int
    num_candidates: int


@dataclass
class QueryResult:
    candidates: list
    query_size: float
    threshold: float
    diagnostics: list = field(default_factory=list)
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "query_size": self.query_size,
            "threshold": self.threshold,
            "elapsed": self.elapsed,
            "partitions": [asdict(d) for d in self.diagnostics],
        }


class Ensemble:
    """Partitions of a domain collection, one frozen LSH forest each.

    Build with :meth:`bootstrap`; query with :meth:`query` or :meth:`search`.
    """

    kind = "ensemble"

    def __init__(
        self,
        config: EnsembleConfig,
        partitioning: Partitioning,
        forests: list[LshForest],
        upper_bounds: list[int],
        table: Optional[TuningTable] = None,
        skipped: int = 0,
        kind: Optional[str] = None,
        extra: Optional[dict] = None,
    ):
        if len(forests) != len(partitioning) or len(upper_bounds) != len(forests):
            raise ValueError("one forest and one upper bound per partition")
        self.config = config
        self.partitioning = partitioning
        self.forests = forests
        self.upper_bounds = [int(u) for u in upper_bounds]
        self.table = table if table is not None else default_tuning_table(config.lattice)
        self._u_index = [self.table.u_index(u) for u in self.upper_bounds]
        self._packed = PackedForests(forests)
        self.skipped = skipped
        if kind is not None:
            self.kind = kind
        self.extra = dict(extra or {})

    def __len__(self):
        return sum(len(f) for f in self.forests)

    def __repr__(self):
        return (
            f"<{type(self).__name__} kind={self.kind} domains={len(self)} "
            f"partitions={len(self.forests)}>"
        )

    # construction

    @classmethod
    def bootstrap(
        cls,
        domains: Iterable[Domain],
        config: EnsembleConfig = EnsembleConfig(),
        boundaries: Optional[Sequence[int]] = None,
        table: Optional[TuningTable] = None,
    ) -> "Ensemble":
        """Index ``domains`` in two passes: sizes and partitioning, then signatures.

        Domains smaller than ``config.min_size`` are skipped and counted.
        """
        kept, skipped = [], 0
        for d in domains:
            if len(d.values) < config.min_size:
                skipped += 1
            else:
                kept.append(d)
        if not kept:
            raise ValueError(
                f"no domains to index ({skipped} skipped below min_size={config.min_size})"
            )
        if skipped:
            log.info("skipped %d domains smaller than %d values", skipped, config.min_size)
        ids = [d.id for d in kept]
        sizes = np.array([len(d.values) for d in kept], dtype=np.int64)
        mins = build_signatures([d.values for d in kept], config.num_perm, config.seed)
        return cls.from_signatures(ids, sizes, mins, config, boundaries, table, skipped)

    @classmethod
    def from_signatures(
        cls,
        ids: Sequence[str],
        sizes: Sequence[int],
        mins: np.ndarray,
        config: EnsembleConfig,
        boundaries: Optional[Sequence[int]] = None,
        table: Optional[TuningTable] = None,
        skipped: int = 0,
        kind: Optional[str] = None,
        extra: Optional[dict] = None,
    ) -> "Ensemble":
        sizes = np.asarray(sizes, dtype=np.int64)
        if len(ids) != len(sizes) or mins.shape != (len(ids), config.num_perm):
            raise ValueError("ids, sizes and signature rows must line up")
        if boundaries is None:
            n = min(config.num_partitions, len(np.unique(sizes)))
            if n < config.num_partitions:
                log.warning(
                    "only %d distinct sizes; using %d partitions instead of %d",
                    n, n, config.num_partitions,
                )
            partitioning = equi_depth_partition(sizes, n)
        else:
            partitioning = partition_with_boundaries(sizes, boundaries)
        owner = partitioning.assign(sizes)
        lattice = config.lattice
        forests, uppers = [], []
        ids_arr = np.asarray(ids, dtype=object)
        for i in range(len(partitioning)):
            members = np.flatnonzero(owner == i)
            forest = LshForest(lattice)
            if members.size:
                forest.insert_many(ids_arr[members].tolist(), mins[members])
            forest.freeze()
            forests.append(forest)
            # the largest member size is the tightest conservative bound
            uppers.append(int(sizes[members].max()) if members.size else partitioning.boundaries[i + 1] - 1)
        return cls(config, partitioning, forests, uppers, table, skipped, kind, extra)

    # querying

    def signature(self, domain: Union[Domain, Iterable]) -> MinHashSignature:
        return build_signature(domain, self.config.num_perm, self.config.seed)

    def params_for(self, partition: int, query_size: float, threshold: float) -> TuningParams:
        return self.table.lookup(self.upper_bounds[partition], query_size, threshold)

    def _all_params(self, query_size: float, threshold: float) -> list[TuningParams]:
        iq, it = self.table.q_index(query_size), self.table.t_index(threshold)
        b, r = self.table.b[iq, :, it], self.table.r[iq, :, it]
        return [TuningParams(int(b[j]), int(r[j])) for j in self._u_index]

    def _check(self, sig: MinHashSignature, threshold: float) -> None:
        if not isinstance(sig, MinHashSignature):
            raise TypeError("query needs a MinHashSignature")
        if sig.seed != self.config.seed or sig.num_perm != self.config.num_perm:
            raise ValueError(
                f"signature (seed={sig.seed}, m={sig.num_perm}) incompatible with index "
                f"(seed={self.config.seed}, m={self.config.num_perm})"
            )
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"containment threshold must be in (0, 1], got {threshold}")

    def query(
        self,
        sig: MinHashSignature,
        threshold: float,
        query_size: Optional[float] = None,
        workers: int = 1,
    ) -> QueryResult:
        """Candidates whose containment of the query likely reaches ``threshold``.

        ``query_size`` overrides the size estimated from the signature. With
        ``workers > 1`` partitions are probed on a thread pool; the merged
        result is the same either way.
        """
        start = time.perf_counter()
        self._check(sig, threshold)
        if query_size is not None and query_size <= 0:
            raise ValueError("query_size must be positive")
        q = float(query_size) if query_size is not None else max(1.0, sig.cardinality())
        params = self._all_params(q, threshold)
        if workers > 1:
            def probe(i):
                f = self.forests[i]
                return f.ids[f.query_indices(sig.mins, params[i].b, params[i].r)] if len(f) else []

            with ThreadPoolExecutor(workers) as pool:
                found = list(pool.map(probe, range(len(self.forests))))
            counts = [len(f) for f in found]
            candidates = sorted(x for f in found for x in f)
        else:
            rows, counts = self._packed.query_indices(sig.mins, [(p.b, p.r) for p in params])
            candidates = sorted(self._packed.ids[rows].tolist())
        bounds = self.partitioning.boundaries
        diagnostics = [
            PartitionDiagnostics(
                lower=bounds[i],
                upper=bounds[i + 1],
                upper_bound=u,
                jaccard_threshold=conservative_jaccard_threshold(threshold, u, q),
                b=p.b,
                r=p.r,
                num_candidates=int(c),
            )
            for i, (u, p, c) in enumerate(zip(self.upper_bounds, params, counts))
        ]
        return QueryResult(candidates, q, threshold, diagnostics, time.perf_counter() - start)

    def search(self, query: Domain, threshold: float, exact_size: bool = True) -> set:
        """Convenience wrapper: signature, size and query in one call."""
        sig = self.signature(query)
        size = len(query.values) if exact_size else None
        return set(self.query(sig, threshold, size).candidates)

    # snapshots

    def manifest(self) -> dict:
        files = [f"partition-{i:03d}.forest" for i in range(len(self.forests))]
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "kind": self.kind,
            "config": asdict(self.config),
            "fingerprint": self.config.fingerprint(),
            "partitioning": {
                "boundaries": list(self.partitioning.boundaries),
                "counts": list(self.partitioning.counts),
            },
            "upper_bounds": self.upper_bounds,
            "skipped": self.skipped,
            "files": files,
            "tuning_table": "tuning.table",
            "extra": self.extra,
        }

    def save(self, path: Union[str, os.PathLike]) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        manifest = self.manifest()
        for forest, name in zip(self.forests, manifest["files"]):
            with open(path / name, "wb") as fh:
                forest.write(fh)
        (path / manifest["tuning_table"]).write_bytes(self.table.to_bytes())
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Ensemble":
        path = Path(path)
        try:
            manifest = json.loads((path / "manifest.json").read_text())
        except FileNotFoundError as exc:
            raise SnapshotError(f"no manifest.json in {path}") from exc
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise SnapshotError(f"corrupt manifest in {path}: {exc}") from exc
        if not isinstance(manifest, dict) or manifest.get("format") != MANIFEST_FORMAT:
            raise SnapshotError(f"{path} is not an LSH Ensemble snapshot")
        if manifest.get("version") != MANIFEST_VERSION:
            raise SnapshotError(f"unsupported snapshot version {manifest.get('version')}")
        try:
            config = EnsembleConfig(**manifest["config"])
            part = manifest["partitioning"]
            partitioning = Partitioning(part["boundaries"], part["counts"])
            forests = []
            for name in manifest["files"]:
                with open(path / name, "rb") as fh:
                    forests.append(LshForest.read(fh))
            table = TuningTable.from_bytes((path / manifest["tuning_table"]).read_bytes())
        except (KeyError, TypeError, FileNotFoundError, TableFormatError) as exc:
            raise SnapshotError(f"incomplete snapshot in {path}: {exc}") from exc
        if any(f.lattice != config.lattice for f in forests) or table.lattice != config.lattice:
            raise SnapshotError("snapshot parts disagree on the band lattice")
        return cls(
            config, partitioning, forests, manifest["upper_bounds"], table,
            manifest.get("skipped", 0), manifest.get("kind"), manifest.get("extra"),
        )
