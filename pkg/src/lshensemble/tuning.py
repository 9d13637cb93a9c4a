"""Choosing LSH band parameters ``(b, r)`` for a containment threshold.

For a domain of size ``x`` and a query of size ``q`` the chance of becoming a
candidate is a function of the containment ``t``. The tuner integrates the
probability mass that lands on the wrong side of ``t_star`` (false-positive
and false-negative areas) and picks the lattice point minimizing their sum.

Both areas depend on ``x`` and ``q`` only through the ratio ``x / q``, which
keeps the precomputed table cheap: cells sharing a ratio share their answer.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .forest import BandLattice

SIMPSON_INTERVALS = 200
TABLE_MAGIC = b"LSHT"
TABLE_VERSION = 1
_TABLE_HEADER = struct.Struct("<4sBIIIII")


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TuningParams:
    b: int
    r: int

    def __post_init__(self):
        if self.b < 1 or self.r < 1:
            raise ValueError(f"invalid LSH parameters b={self.b}, r={self.r}")


def _band_probability(s, b, r):
    """1 - (1 - s**r)**b, stable for large b and tiny s."""
    with np.errstate(divide="ignore"):
        return -np.expm1(b * np.log1p(-np.power(s, r)))


def candidate_probability(t, x: float, q: float, params: TuningParams):
    t = np.asarray(t, dtype=float)
    # a size-x domain cannot contain more than x of the q query values
    if np.any(t < 0) or np.any(t > min(1.0, x / q) + 1e-12):
        raise ValueError(f"containment must lie in [0, {min(1.0, x / q):.6g}] for x={x}, q={q}")
    s = t / (x / q + 1.0 - t)
    p = _band_probability(s, params.b, params.r)
    return float(p) if p.ndim == 0 else p


def static_threshold(params: TuningParams) -> float:
    return (1.0 / params.b) ** (1.0 / params.r)


def _simpson(values: np.ndarray, h) -> np.ndarray:
    """Composite Simpson over the last axis (odd number of nodes)."""
    w = np.ones(values.shape[-1])
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return values @ w * (np.asarray(h) / 3.0)


def _area(ratio, lo, hi, b, r, complement, n=SIMPSON_INTERVALS):
    # integral of P (or 1 - P) over t in [lo, hi] for arrays of b, r
    if hi <= lo:
        return np.zeros(np.broadcast(np.asarray(b), np.asarray(r)).shape)
    t = np.linspace(lo, hi, n + 1)
    s = t / (ratio + 1.0 - t)
    p = _band_probability(s, np.asarray(b)[..., None], np.asarray(r)[..., None])
    if complement:
        p = 1.0 - p
    return _simpson(p, (hi - lo) / n)


def fp_area(x: float, q: float, t_star: float, params: TuningParams, n: int = SIMPSON_INTERVALS) -> float:
    ratio = x / q
    return float(_area(ratio, 0.0, min(t_star, ratio), params.b, params.r, False, n))


def fn_area(x: float, q: float, t_star: float, params: TuningParams, n: int = SIMPSON_INTERVALS) -> float:
    ratio = x / q
    if ratio < t_star:
        return 0.0
    return float(_area(ratio, t_star, min(1.0, ratio), params.b, params.r, True, n))


def objective(x: float, q: float, t_star: float, params: TuningParams) -> float:
    return fp_area(x, q, t_star, params) + fn_area(x, q, t_star, params)


def lattice_objective(ratio: float, t_star: float, lattice: BandLattice) -> np.ndarray:
    """FP + FN for every lattice point; entry ``[b-1, r-1]``."""
    b = np.arange(1, lattice.b_max + 1)[:, None]
    r = np.arange(1, lattice.r_max + 1)[None, :]
    fp = _area(ratio, 0.0, min(t_star, ratio), b, r, False)
    fn = 0.0 if ratio < t_star else _area(ratio, t_star, min(1.0, ratio), b, r, True)
    return fp + fn


def _argmin(obj: np.ndarray) -> tuple[TuningParams, float]:
    # row-major argmin returns the first minimum: smallest b, then smallest r
    flat = int(np.argmin(obj))
    b, r = divmod(flat, obj.shape[1])
    return TuningParams(b + 1, r + 1), float(obj.flat[flat])


def optimize_params(u: float, q: float, t_star: float, lattice: BandLattice) -> TuningParams:
    return _argmin(lattice_objective(u / q, t_star, lattice))[0]


@dataclass(frozen=True, eq=False)
class TuningTable:
    """Optimal ``(b, r)`` over a grid of partition bound, query size and threshold.

    Lookups snap each coordinate to the nearest grid point (in log space for
    sizes, linearly for the threshold).
    """

    lattice: BandLattice
    q_grid: np.ndarray
    u_grid: np.ndarray
    t_grid: np.ndarray
    b: np.ndarray  # shape (len(q_grid), len(u_grid), len(t_grid))
    r: np.ndarray
    objective: np.ndarray

    def __len__(self):
        return self.b.size

    def __eq__(self, other):
        if not isinstance(other, TuningTable):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    @staticmethod
    def _snap_log(grid, value):
        i = int(np.searchsorted(grid, value))
        if i <= 0:
            return 0
        if i >= len(grid):
            return len(grid) - 1
        lo, hi = math.log(grid[i - 1]), math.log(grid[i])
        v = math.log(value)
        return i - 1 if v - lo <= hi - v else i

    def _snap_lin(self, grid, value):
        return int(np.argmin(np.abs(grid - value)))

    def q_index(self, q: float) -> int:
        return self._snap_log(self.q_grid, q)

    def u_index(self, u: float) -> int:
        return self._snap_log(self.u_grid, u)

    def t_index(self, t_star: float) -> int:
        return self._snap_lin(self.t_grid, t_star)

    def index(self, u: float, q: float, t_star: float) -> tuple[int, int, int]:
        return self.q_index(q), self.u_index(u), self.t_index(t_star)

    def lookup(self, u: float, q: float, t_star: float) -> TuningParams:
        i, j, k = self.index(u, q, t_star)
        return TuningParams(int(self.b[i, j, k]), int(self.r[i, j, k]))

    def to_bytes(self) -> bytes:
        head = _TABLE_HEADER.pack(
            TABLE_MAGIC, TABLE_VERSION, self.lattice.b_max, self.lattice.r_max,
            len(self.q_grid), len(self.u_grid), len(self.t_grid),
        )
        parts = [head]
        for g in (self.q_grid, self.u_grid, self.t_grid):
            parts.append(np.asarray(g, "<f8").tobytes())
        parts.append(self.b.astype("<u2").tobytes())
        parts.append(self.r.astype("<u2").tobytes())
        parts.append(self.objective.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TuningTable":
        if len(data) < _TABLE_HEADER.size:
            raise TableFormatError("tuning table truncated")
        magic, version, b_max, r_max, nq, nu, nt = _TABLE_HEADER.unpack_from(data)
        if magic != TABLE_MAGIC:
            raise TableFormatError(f"not a tuning table (magic {magic!r})")
        if version != TABLE_VERSION:
            raise TableFormatError(f"unsupported tuning table version {version}")
        cells = nq * nu * nt
        need = _TABLE_HEADER.size + 8 * (nq + nu + nt) + cells * (2 + 2 + 8)
        if len(data) != need:
            raise TableFormatError(f"tuning table has {len(data)} bytes, expected {need}")
        off = _TABLE_HEADER.size
        grids = []
        for k in (nq, nu, nt):
            grids.append(np.frombuffer(data, "<f8", k, off).astype(float))
            off += 8 * k
        shape = (nq, nu, nt)
        b = np.frombuffer(data, "<u2", cells, off).reshape(shape).astype(np.int64)
        off += 2 * cells
        r = np.frombuffer(data, "<u2", cells, off).reshape(shape).astype(np.int64)
        off += 2 * cells
        obj = np.frombuffer(data, "<f8", cells, off).reshape(shape).astype(float)
        return cls(BandLattice(b_max, r_max), *grids, b, r, obj)


def build_tuning_table(
    q_grid: Sequence[float],
    u_grid: Sequence[float],
    t_grid: Sequence[float],
    lattice: BandLattice,
) -> TuningTable:
    q_grid = np.asarray(sorted(q_grid), dtype=float)
    u_grid = np.asarray(sorted(u_grid), dtype=float)
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if not (q_grid.size and u_grid.size and t_grid.size):
        raise ValueError("tuning grids must be nonempty")
    shape = (q_grid.size, u_grid.size, t_grid.size)
    b = np.empty(shape, dtype=np.int64)
    r = np.empty(shape, dtype=np.int64)
    obj = np.empty(shape)
    solved: dict = {}
    for i, q in enumerate(q_grid):
        for j, u in enumerate(u_grid):
            ratio = u / q
            key = float(f"{ratio:.12g}")
            if key not in solved:
                solved[key] = [_argmin(lattice_objective(ratio, t, lattice)) for t in t_grid]
            for k, (params, value) in enumerate(solved[key]):
                b[i, j, k], r[i, j, k], obj[i, j, k] = params.b, params.r, value
    return TuningTable(lattice, q_grid, u_grid, t_grid, b, r, obj)


DEFAULT_T_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))
STEPS_PER_OCTAVE = 4


def log2_grid(max_exponent: int, steps_per_octave: int = STEPS_PER_OCTAVE) -> np.ndarray:
    return 2.0 ** (np.arange(max_exponent * steps_per_octave + 1) / steps_per_octave)


@lru_cache(maxsize=8)
def default_tuning_table(lattice: BandLattice) -> TuningTable:
    """Table over q in [1, 2^20], u in [1, 2^24] (quarter octaves), t* in 0.05..1."""
    return build_tuning_table(log2_grid(20), log2_grid(24), DEFAULT_T_GRID, lattice)


__all__ = [
    "TuningParams",
    "TuningTable",
    "build_tuning_table",
    "candidate_probability",
    "default_tuning_table",
    "fn_area",
    "fp_area",
    "lattice_objective",
    "objective",
    "optimize_params",
    "static_threshold",
]
