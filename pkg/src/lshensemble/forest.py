"""A MinHash LSH Forest with query-time band count and band depth.

The signature is cut into ``b_max`` contiguous bands of ``r_max`` values. Each
band is one "tree": its keys are stored sorted, so all keys sharing the first
``r`` hash values form one contiguous run found by binary search. Querying
``(b, r)`` probes the first ``b`` trees at prefix depth ``r``.

Keys live in one ``(b_max, n, r_max)`` array, each tree's rows sorted
lexicographically; a compiled binary search finds the runs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Optional

import numba
import numpy as np

from .minhash import MinHashSignature

FOREST_MAGIC = b"LSHF"
FOREST_VERSION = 1
_HEADER = struct.Struct("<4sBIIQ")
_MAX_TREES = 1 << 16
_FENCE = 64  # rows per fence block


class ForestStateError(RuntimeError):
    """Operation not allowed in the forest's current lifecycle state."""


class SnapshotError(ValueError):
    """Raised for unreadable index snapshots."""


@dataclass(frozen=True)
class BandLattice:
    b_max: int
    r_max: int

    def __post_init__(self):
        if self.b_max < 1 or self.r_max < 1:
            raise ValueError("lattice dimensions must be positive")
        if self.b_max >= _MAX_TREES:
            raise ValueError("too many trees")

    @property
    def num_perm(self) -> int:
        return self.b_max * self.r_max

    @classmethod
    def for_signature(cls, num_perm: int, r_max: int = 4) -> "BandLattice":
        if num_perm % r_max:
            raise ValueError(f"r_max={r_max} does not divide num_perm={num_perm}")
        return cls(num_perm // r_max, r_max)

    def __contains__(self, br) -> bool:
        b, r = br
        return 1 <= b <= self.b_max and 1 <= r <= self.r_max


class LshForest:
    def __init__(self, lattice: BandLattice):
        self.lattice = lattice
        self._ids: list[str] = []
        self._seen: set[str] = set()
        self._rows: list[np.ndarray] = []
        self._frozen = False
        self._keys: Optional[np.ndarray] = None
        self._orders: Optional[np.ndarray] = None
        self._id_array: Optional[np.ndarray] = None

    def __len__(self):
        return len(self._ids)

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def ids(self) -> np.ndarray:
        if self._id_array is None:
            self._id_array = np.array(self._ids, dtype=object)
        return self._id_array

    def insert(self, id: str, sig) -> None:
        mins = sig.mins if isinstance(sig, MinHashSignature) else np.asarray(sig, np.uint64)
        self.insert_many([id], mins.reshape(1, -1))

    def insert_many(self, ids: Iterable[str], mins: np.ndarray) -> None:
        if self._frozen:
            raise ForestStateError("forest is frozen; inserts are closed")
        ids = list(ids)
        mins = np.asarray(mins, dtype=np.uint64)
        if mins.ndim != 2 or mins.shape != (len(ids), self.lattice.num_perm):
            raise ValueError(
                f"expected signatures of length {self.lattice.num_perm}, got shape {mins.shape}"
            )
        for id in ids:
            if id in self._seen:
                raise ValueError(f"duplicate id {id!r}")
            self._seen.add(id)
        self._ids.extend(ids)
        self._rows.append(mins)

    def freeze(self) -> None:
        if self._frozen:
            raise ForestStateError("forest is already frozen")
        b_max, r_max = self.lattice.b_max, self.lattice.r_max
        n = len(self._ids)
        mins = (
            np.concatenate(self._rows)
            if self._rows
            else np.empty((0, self.lattice.num_perm), np.uint64)
        )
        bands = mins.reshape(n, b_max, r_max)
        orders = np.empty((b_max, n), dtype=np.uint32)
        for i in range(b_max):
            # lexsort treats its last key as primary
            orders[i] = np.lexsort(bands[:, i, ::-1].T) if n else []
        keys = np.empty((b_max, n, r_max), dtype=np.uint64)
        for i in range(b_max):
            keys[i] = bands[orders[i], i, :]
        self._install(orders, keys)
        self._rows = []

    def _install(self, orders: np.ndarray, keys: np.ndarray) -> None:
        """``keys[i]`` holds tree ``i``'s bands in sorted order; ``orders[i]`` their rows."""
        self._keys = np.ascontiguousarray(keys, dtype=np.uint64)
        self._orders = np.ascontiguousarray(orders, dtype=np.uint32)
        self._fences = _fences(self._keys)
        self._frozen = True

    def _check_query(self, b: int, r: int) -> None:
        if not self._frozen:
            raise ForestStateError("forest must be frozen before querying")
        if (b, r) not in self.lattice:
            raise ValueError(
                f"(b={b}, r={r}) outside lattice b<={self.lattice.b_max}, r<={self.lattice.r_max}"
            )

    def query_indices(self, mins: np.ndarray, b: int, r: int) -> np.ndarray:
        """Sorted insertion indices of all entries matching a band prefix."""
        self._check_query(b, r)
        if not len(self._ids):
            return np.empty(0, dtype=np.int64)
        mins = np.asarray(mins, dtype=np.uint64)
        if mins.shape != (self.lattice.num_perm,):
            raise ValueError(f"query signature must have {self.lattice.num_perm} values")
        q = mins.reshape(self.lattice.b_max, self.lattice.r_max)
        return _probe(self._keys, self._orders, self._fences, q, b, r)

    def query(self, sig, b: int, r: int) -> set[str]:
        if isinstance(sig, MinHashSignature):
            if sig.num_perm != self.lattice.num_perm:
                raise ValueError("signature length does not match the forest lattice")
            mins = sig.mins
        else:
            mins = sig
        idx = self.query_indices(mins, b, r)
        return set(self.ids[idx].tolist())

    # snapshots

    def write(self, fh: BinaryIO) -> None:
        if not self._frozen:
            raise ForestStateError("only frozen forests can be saved")
        b_max, r_max = self.lattice.b_max, self.lattice.r_max
        n = len(self._ids)
        fh.write(_HEADER.pack(FOREST_MAGIC, FOREST_VERSION, b_max, r_max, n))
        for id in self._ids:
            raw = id.encode("utf-8", "surrogateescape")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        rec = np.dtype([("id", "<u4"), ("key", "<u8", (r_max,))])
        for i in range(b_max):
            out = np.empty(n, dtype=rec)
            out["id"] = self._orders[i]
            out["key"] = self._keys[i]
            fh.write(out.tobytes())

    @classmethod
    def read(cls, fh: BinaryIO) -> "LshForest":
        data = fh.read()
        if len(data) < _HEADER.size:
            raise SnapshotError("forest snapshot truncated")
        magic, version, b_max, r_max, n = _HEADER.unpack_from(data)
        if magic != FOREST_MAGIC:
            raise SnapshotError(f"not a forest snapshot (magic {magic!r})")
        if version != FOREST_VERSION:
            raise SnapshotError(f"unsupported forest snapshot version {version}")
        forest = cls(BandLattice(b_max, r_max))
        off = _HEADER.size
        ids = []
        try:
            for _ in range(n):
                (length,) = struct.unpack_from("<I", data, off)
                off += 4
                if off + length > len(data):
                    raise SnapshotError("forest snapshot truncated in id table")
                ids.append(data[off : off + length].decode("utf-8", "surrogateescape"))
                off += length
        except struct.error as exc:
            raise SnapshotError("forest snapshot truncated in id table") from exc
        rec = np.dtype([("id", "<u4"), ("key", "<u8", (r_max,))])
        need = off + b_max * n * rec.itemsize
        if len(data) != need:
            raise SnapshotError(f"forest snapshot has {len(data)} bytes, expected {need}")
        recs = np.frombuffer(data, dtype=rec, count=b_max * n, offset=off).reshape(b_max, n)
        orders = recs["id"].astype(np.uint32)
        if n and orders.max() >= n:
            raise SnapshotError("forest snapshot references unknown ids")
        keys = recs["key"].astype(np.uint64)
        if n > 1:
            for i in range(b_max):
                if not _is_sorted(keys[i]):
                    raise SnapshotError(f"forest snapshot tree {i} is not sorted")
        forest._ids = ids
        forest._seen = set(ids)
        forest._install(orders, keys)
        return forest


@numba.njit(cache=True, nogil=True)
def _compare(keys, row, q, r):
    # sign of keys[row, :r] versus q[:r], lexicographic
    for j in range(r):
        if keys[row, j] < q[j]:
            return -1
        if keys[row, j] > q[j]:
            return 1
    return 0


def _fences(keys: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(keys[:, ::_FENCE, 0])


@numba.njit(cache=True, nogil=True)
def _lower_bound(t, fence, q, r):
    # first row whose r-prefix is >= q; the fence (every _FENCE-th first value)
    # narrows the bisection to one block
    n = t.shape[0]
    lo, hi = 0, fence.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if fence[mid] < q[0]:
            lo = mid + 1
        else:
            hi = mid
    lo = max(lo - 1, 0) * _FENCE
    step = 1
    hi = lo
    while hi < n and _compare(t, hi, q, r) < 0:
        lo = hi + 1
        hi = lo + step
        step <<= 1
    hi = min(hi, n)
    while lo < hi:
        mid = (lo + hi) >> 1
        if _compare(t, mid, q, r) < 0:
            lo = mid + 1
        else:
            hi = mid
    return lo


@numba.njit(cache=True, nogil=True)
def _upper_bound(t, start, q, r):
    n = t.shape[0]
    lo = start
    step = 1
    hi = lo
    while hi < n and _compare(t, hi, q, r) <= 0:
        lo = hi + 1
        hi = lo + step
        step <<= 1
    hi = min(hi, n)
    while lo < hi:
        mid = (lo + hi) >> 1
        if _compare(t, mid, q, r) <= 0:
            lo = mid + 1
        else:
            hi = mid
    return lo


@numba.njit(cache=True, nogil=True)
def _probe(keys, orders, fences, q, b, r):
    lows = np.empty(b, np.int64)
    highs = np.empty(b, np.int64)
    total = 0
    for i in range(b):
        start = _lower_bound(keys[i], fences[i], q[i], r)
        stop = _upper_bound(keys[i], start, q[i], r)
        lows[i] = start
        highs[i] = stop
        total += stop - start
    out = np.empty(total, np.int64)
    k = 0
    for i in range(b):
        for j in range(lows[i], highs[i]):
            out[k] = orders[i, j]
            k += 1
    return np.unique(out)


@numba.njit(cache=True, nogil=True)
def _probe_packed(keys, orders, fences, offsets, fence_offsets, sizes, q, bs, rs):
    # partition p owns columns [offsets[p], offsets[p] + sizes[p]) of every tree
    parts = offsets.shape[0]
    chunks = []
    counts = np.zeros(parts, np.int64)
    for p in range(parts):
        n = sizes[p]
        if n == 0:
            chunks.append(np.empty(0, np.int64))
            continue
        off = offsets[p]
        fo = fence_offsets[p]
        nf = (n + _FENCE - 1) // _FENCE
        hits = _probe(keys[:, off:off + n, :], orders[:, off:off + n], fences[:, fo:fo + nf],
                      q, bs[p], rs[p])
        counts[p] = hits.shape[0]
        chunks.append(hits + off)
    total = counts.sum()
    out = np.empty(total, np.int64)
    k = 0
    for c in chunks:
        out[k:k + c.shape[0]] = c
        k += c.shape[0]
    return out, counts


class PackedForests:
    """Several frozen forests over one shared key array, probed in one call.

    Each forest's arrays are rebound to views of the packed ones.
    """

    def __init__(self, forests: list[LshForest]):
        if not forests:
            raise ValueError("nothing to pack")
        lattice = forests[0].lattice
        if any(f.lattice != lattice or not f.frozen for f in forests):
            raise ValueError("packed forests must be frozen and share a lattice")
        self.lattice = lattice
        self.sizes = np.array([len(f) for f in forests], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.keys = np.concatenate([f._keys for f in forests], axis=1)
        self.orders = np.concatenate([f._orders for f in forests], axis=1)
        self.fences = np.concatenate([f._fences for f in forests], axis=1)
        nf = np.array([f._fences.shape[1] for f in forests], dtype=np.int64)
        self.fence_offsets = np.concatenate([[0], np.cumsum(nf)[:-1]]).astype(np.int64)
        self.ids = np.concatenate([f.ids for f in forests]) if len(self.keys[0]) else np.empty(0, object)
        for f, off, n in zip(forests, self.offsets, self.sizes):
            f._keys = self.keys[:, off:off + n, :]
            f._orders = self.orders[:, off:off + n]
        for f, fo, k in zip(forests, self.fence_offsets, nf):
            f._fences = self.fences[:, fo:fo + k]

    def query_indices(self, mins: np.ndarray, params: list) -> tuple[np.ndarray, np.ndarray]:
        """Global row indices and per-forest hit counts for one ``(b, r)`` per forest."""
        if len(params) != len(self.sizes):
            raise ValueError("one (b, r) per forest")
        for b, r in params:
            if (b, r) not in self.lattice:
                raise ValueError(f"(b={b}, r={r}) outside the lattice")
        mins = np.asarray(mins, dtype=np.uint64)
        if mins.shape != (self.lattice.num_perm,):
            raise ValueError(f"query signature must have {self.lattice.num_perm} values")
        q = mins.reshape(self.lattice.b_max, self.lattice.r_max)
        bs = np.array([b for b, _ in params], dtype=np.int64)
        rs = np.array([r for _, r in params], dtype=np.int64)
        return _probe_packed(
            self.keys, self.orders, self.fences, self.offsets, self.fence_offsets,
            self.sizes, q, bs, rs,
        )


@numba.njit(cache=True, nogil=True)
def _is_sorted(rows):
    for k in range(1, rows.shape[0]):
        if _compare(rows, k - 1, rows[k], rows.shape[1]) > 0:
            return False
    return True
