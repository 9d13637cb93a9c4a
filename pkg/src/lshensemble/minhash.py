"""MinHash signatures over sets of opaque values.

Each value is reduced to a 60-bit base hash (BLAKE2b, truncated), then mapped
through ``m`` affine functions ``(a_i * x + b_i) mod p`` with ``p = 2**61 - 1``.
The coefficients come from a PCG64 stream seeded by ``seed`` so signatures are
reproducible across runs and platforms.

Base hashes of real values live in ``[0, 2**60)``. The range ``[2**60, p)`` is
reserved for synthetic padding values (see :mod:`lshensemble.baselines`), which
makes the two namespaces disjoint by construction.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numba
import numpy as np

MERSENNE_61 = (1 << 61) - 1
PAD_NAMESPACE = 1 << 60
DEFAULT_NUM_PERM = 256
DEFAULT_SEED = 1

SIGNATURE_MAGIC = b"LSHE"
SIGNATURE_VERSION = 1
_HEADER = struct.Struct("<4sBQI")

Value = Union[str, bytes]


class SignatureFormatError(ValueError):
    """Raised when signature bytes cannot be parsed."""


@dataclass(frozen=True)
class Domain:
    """A named set of distinct values (one table column, typically)."""

    id: str
    values: frozenset

    def __post_init__(self):
        if not isinstance(self.values, frozenset):
            object.__setattr__(self, "values", frozenset(self.values))
        if not self.values:
            raise ValueError(f"domain {self.id!r} has no values")

    def __len__(self):
        return len(self.values)

    @property
    def size(self) -> int:
        return len(self.values)


def _as_bytes(v: Value) -> bytes:
    if isinstance(v, bytes):
        return v
    # surrogateescape keeps undecodable CSV bytes intact
    return v.encode("utf-8", "surrogateescape")


def base_hashes(values: Iterable[Value]) -> np.ndarray:
    """60-bit base hashes of ``values`` as a uint64 array (order preserved)."""
    blake = hashlib.blake2b
    raw = b"".join(blake(_as_bytes(v), digest_size=8).digest() for v in values)
    return np.frombuffer(raw, dtype="<u8").astype(np.uint64) >> np.uint64(4)


@lru_cache(maxsize=64)
def hash_coefficients(seed: int, num_perm: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``(a, b)`` coefficient arrays for a given seed and signature length."""
    if num_perm < 1:
        raise ValueError("num_perm must be >= 1")
    if not 0 <= seed < 1 << 64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.integers(1, MERSENNE_61, size=num_perm, dtype=np.uint64)
    b = rng.integers(0, MERSENNE_61, size=num_perm, dtype=np.uint64)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


@numba.njit(inline="always")
def _affine_mod61(a, x, b):
    # (a*x + b) mod (2**61 - 1) for a, x, b < 2**61 without 128-bit products
    p = np.uint64(MERSENNE_61)
    lo32 = np.uint64(0xFFFFFFFF)
    ahi = a >> np.uint64(32)
    alo = a & lo32
    xhi = x >> np.uint64(32)
    xlo = x & lo32
    ll = alo * xlo
    mid = ahi * xlo + alo * xhi
    hh = ahi * xhi
    s = (
        (hh << np.uint64(3))
        + (mid >> np.uint64(29))
        + ((mid & np.uint64((1 << 29) - 1)) << np.uint64(32))
        + (ll >> np.uint64(61))
        + (ll & p)
    )
    s = (s & p) + (s >> np.uint64(61))
    s += b
    s = (s & p) + (s >> np.uint64(61))
    if s >= p:
        s -= p
    return s


@numba.njit(cache=True, nogil=True)
def _signature_kernel(hashes, offsets, a, b, out):
    m = a.shape[0]
    p = np.uint64(MERSENNE_61)
    for d in range(offsets.shape[0] - 1):
        for i in range(m):
            out[d, i] = p
        for k in range(offsets[d], offsets[d + 1]):
            x = hashes[k]
            for i in range(m):
                h = _affine_mod61(a[i], x, b[i])
                if h < out[d, i]:
                    out[d, i] = h


_MASK60 = (1 << 60) - 1


@numba.njit(inline="always")
def _mix60(k):
    # bijection on [0, 2**60): xorshift-multiply rounds truncated to 60 bits
    mask = np.uint64(_MASK60)
    x = k & mask
    x ^= x >> np.uint64(31)
    x = (x * np.uint64(0x7FB5D329728EA185)) & mask
    x ^= x >> np.uint64(27)
    x = (x * np.uint64(0x81DADEF4BC2DD44D)) & mask
    x ^= x >> np.uint64(33)
    return x


def pad_value(k: int) -> int:
    """The ``k``-th padding value: a scrambled point of the reserved namespace.

    Consecutive integers under one affine map form an arithmetic progression
    whose minimum is far from that of independent values, so counters are
    mixed first.
    """
    return PAD_NAMESPACE + int(_mix60(np.uint64(k)))


@numba.njit(cache=True, nogil=True)
def _pad_kernel(starts, counts, a, b, out):
    # fold in counts[d] fresh values numbered starts[d], starts[d]+1, ...
    m = a.shape[0]
    ns = np.uint64(PAD_NAMESPACE)
    for d in range(starts.shape[0]):
        k = starts[d]
        for _ in range(counts[d]):
            x = ns + _mix60(k)
            for i in range(m):
                h = _affine_mod61(a[i], x, b[i])
                if h < out[d, i]:
                    out[d, i] = h
            k += np.uint64(1)


@dataclass(frozen=True, eq=False)
class MinHashSignature:
    seed: int
    num_perm: int
    mins: np.ndarray

    def __post_init__(self):
        mins = np.ascontiguousarray(self.mins, dtype=np.uint64)
        if mins.shape != (self.num_perm,):
            raise ValueError(
                f"expected {self.num_perm} minima, got shape {mins.shape}"
            )
        if mins.flags.writeable:
            mins = mins.copy()
            mins.setflags(write=False)
        object.__setattr__(self, "mins", mins)

    def __eq__(self, other):
        if not isinstance(other, MinHashSignature):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.num_perm == other.num_perm
            and np.array_equal(self.mins, other.mins)
        )

    def __hash__(self):
        return hash((self.seed, self.num_perm, self.mins.tobytes()))

    def check_compatible(self, other: "MinHashSignature") -> None:
        if self.seed != other.seed or self.num_perm != other.num_perm:
            raise ValueError(
                "signatures are not comparable: "
                f"(seed={self.seed}, m={self.num_perm}) vs "
                f"(seed={other.seed}, m={other.num_perm})"
            )

    def jaccard(self, other: "MinHashSignature") -> float:
        return estimate_jaccard(self, other)

    def cardinality(self) -> float:
        return estimate_cardinality(self)

    def merge(self, other: "MinHashSignature") -> "MinHashSignature":
        """Signature of the union of both underlying sets."""
        self.check_compatible(other)
        return MinHashSignature(self.seed, self.num_perm, np.minimum(self.mins, other.mins))

    def to_bytes(self) -> bytes:
        return serialize_signature(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MinHashSignature":
        return deserialize_signature(data)


def build_signatures(
    value_sets: Sequence[Iterable[Value]],
    num_perm: int = DEFAULT_NUM_PERM,
    seed: int = DEFAULT_SEED,
) -> np.ndarray:
    """Signature matrix of shape ``(len(value_sets), num_perm)``.

    Duplicate values are harmless: the minimum is idempotent.
    """
    a, b = hash_coefficients(seed, num_perm)
    chunks = []
    offsets = np.zeros(len(value_sets) + 1, dtype=np.int64)
    for j, values in enumerate(value_sets):
        h = base_hashes(values)
        if h.size == 0:
            raise ValueError(f"value set #{j} is empty")
        chunks.append(h)
        offsets[j + 1] = offsets[j] + h.size
    out = np.empty((len(value_sets), num_perm), dtype=np.uint64)
    if chunks:
        _signature_kernel(np.concatenate(chunks), offsets, a, b, out)
    return out


def build_signature(
    domain: Union[Domain, Iterable[Value]],
    num_perm: int = DEFAULT_NUM_PERM,
    seed: int = DEFAULT_SEED,
) -> MinHashSignature:
    values = domain.values if isinstance(domain, Domain) else domain
    if not isinstance(values, (set, frozenset, list, tuple)):
        values = list(values)
    if len(values) == 0:
        raise ValueError("cannot build a signature for an empty domain")
    mins = build_signatures([values], num_perm, seed)[0]
    return MinHashSignature(seed, num_perm, mins)


def pad_signatures(
    mins: np.ndarray, pad_counts: np.ndarray, seed: int, first_pad: int = 0
) -> np.ndarray:
    """Fold ``pad_counts[d]`` fresh padding values into row ``d`` of ``mins``.

    Row ``d`` receives padding values ``pad_value(k)`` for a run of counters
    starting at ``first_pad``; no two rows share a counter, hence no value.
    """
    mins = np.array(mins, dtype=np.uint64, copy=True)
    counts = np.asarray(pad_counts, dtype=np.int64)
    if counts.shape != (mins.shape[0],) or (counts < 0).any():
        raise ValueError("pad_counts must be one non-negative count per row")
    starts = first_pad + np.concatenate([[0], np.cumsum(counts)[:-1]])
    if counts.sum() + first_pad > _MASK60:
        raise ValueError("padding namespace exhausted")
    a, b = hash_coefficients(seed, mins.shape[1])
    _pad_kernel(starts.astype(np.uint64), counts, a, b, mins)
    return mins


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    a.check_compatible(b)
    return float(np.count_nonzero(a.mins == b.mins)) / a.num_perm


def estimate_cardinality(sig: MinHashSignature) -> float:
    """Order-statistics estimate of the set size behind ``sig``.

    Each normalized minimum is the smallest of ``n`` uniforms on [0, 1), whose
    mean is ``1/(n+1)``.
    """
    mean_min = float(np.mean(sig.mins / float(MERSENNE_61)))
    if mean_min <= 0.0:
        return float("inf")
    return 1.0 / mean_min - 1.0


def serialize_signature(sig: MinHashSignature) -> bytes:
    return _HEADER.pack(SIGNATURE_MAGIC, SIGNATURE_VERSION, sig.seed, sig.num_perm) + (
        sig.mins.astype("<u8").tobytes()
    )


def deserialize_signature(data: bytes) -> MinHashSignature:
    if len(data) < _HEADER.size:
        raise SignatureFormatError(
            f"signature truncated: {len(data)} bytes, header needs {_HEADER.size}"
        )
    magic, version, seed, num_perm = _HEADER.unpack_from(data)
    if magic != SIGNATURE_MAGIC:
        raise SignatureFormatError(f"bad magic {magic!r}")
    if version != SIGNATURE_VERSION:
        raise SignatureFormatError(f"unsupported signature version {version}")
    expected = _HEADER.size + 8 * num_perm
    if num_perm < 1 or len(data) != expected:
        raise SignatureFormatError(
            f"signature length {len(data)} does not match num_perm={num_perm}"
        )
    mins = np.frombuffer(data, dtype="<u8", offset=_HEADER.size).astype(np.uint64)
    return MinHashSignature(seed, num_perm, mins)
