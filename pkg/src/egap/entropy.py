"""Test-time entropy models: factorized per-channel tables and the
scale-indexed zero-mean Gaussian tables of the hyperprior model.

Every pmf is floored at ``P_FLOOR`` (one unit of a 16-bit coder) so that
code lengths stay finite and every in-support symbol stays codable.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from egap import kernels
from egap.errors import FormatError, SupportError
from egap.special import erf, normal_sf

P_FLOOR = 2.0**-16
TAIL_MASS = 2.0**-20
MAX_ABS_SUPPORT = 255
MODELS = ("factorized", "hyperprior")

DEFAULT_NUM_SCALES = 64
DEFAULT_SIGMA_MIN = 0.11
DEFAULT_SIGMA_MAX = 256.0


def apply_floor(probs, floor=P_FLOOR):
    """Normalize ``probs`` and lift every bin to at least ``floor``.

    Floored bins are pinned at exactly ``floor``; the remaining mass is
    shared by the other bins in proportion to their original weight. Repeats
    until no unpinned bin drops below the floor.
    """
    p = np.asarray(probs, dtype=np.float64)
    total = p.sum()
    if not (total > 0 and np.isfinite(total)):
        raise ValueError("pmf has zero total mass on its support")
    if p.size * floor > 1.0:
        raise ValueError(f"support of {p.size} bins cannot honour floor {floor}")
    p = p / total
    pinned = p < floor
    while True:
        free = 1.0 - pinned.sum() * floor
        rest = p[~pinned]
        if rest.size == 0:
            break
        rest = rest / rest.sum() * free
        low = rest < floor
        if not low.any():
            break
        idx = np.flatnonzero(~pinned)
        pinned[idx[low]] = True
    out = np.full_like(p, floor)
    if rest.size:
        out[~pinned] = rest
    return out


@dataclass(frozen=True, eq=False)
class PmfTable:
    """Probabilities over the contiguous integer support ``[support_min, support_max]``."""

    support_min: int
    support_max: int
    probs: np.ndarray
    model: str = "factorized"
    index: int = 0

    def __post_init__(self):
        lo, hi = int(self.support_min), int(self.support_max)
        object.__setattr__(self, "support_min", lo)
        object.__setattr__(self, "support_max", hi)
        if not lo <= 0 <= hi:
            raise ValueError(f"support [{lo}, {hi}] must contain 0")
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if probs.size != hi - lo + 1:
            raise ValueError(f"expected {hi - lo + 1} probabilities, got {probs.size}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite")
        if abs(math.fsum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        if probs.min() < P_FLOOR * (1 - 1e-9):
            raise ValueError(f"probability {probs.min()!r} below floor {P_FLOOR}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "index", int(self.index))

    @property
    def size(self):
        return self.probs.size

    @property
    def values(self):
        return np.arange(self.support_min, self.support_max + 1)

    @property
    def label(self):
        return (self.model, self.index)

    @property
    def center(self):
        """Probability of the zero symbol."""
        return float(self.probs[-self.support_min])

    def __eq__(self, other):
        if not isinstance(other, PmfTable):
            return NotImplemented
        return (
            self.label == other.label
            and self.support_min == other.support_min
            and self.support_max == other.support_max
            and bool(np.array_equal(self.probs, other.probs))
        )

    __hash__ = None


def pmf_from_cdf(cdf, support_min, support_max, model="factorized", index=0):
    """Bin a cdf over half-integer edges: ``p(x) = cdf(x + 0.5) - cdf(x - 0.5)``."""
    edges = np.arange(support_min, support_max + 2, dtype=np.float64) - 0.5
    raw = np.diff(np.asarray(cdf(edges), dtype=np.float64))
    if np.any(raw < -1e-15):
        raise ValueError("cdf is not non-decreasing on the support")
    raw = np.maximum(raw, 0.0)
    if not raw.sum() > 0:
        raise ValueError("cdf puts zero total mass on the support")
    return PmfTable(support_min, support_max, apply_floor(raw), model, index)


def _gaussian_bin_masses(sigma, support_min, support_max):
    a = np.abs(np.arange(support_min, support_max + 1, dtype=np.float64))
    inner = normal_sf(np.maximum(a - 0.5, 0.0) / sigma)
    outer = normal_sf((a + 0.5) / sigma)
    masses = inner - outer
    center = a == 0
    masses[center] = erf(0.5 / (sigma * math.sqrt(2.0)))
    return masses


def discretized_gaussian_pmf(sigma, support_min, support_max, model="hyperprior", index=0):
    """Zero-mean bin-integrated Gaussian; mirror-symmetric on symmetric supports."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be > 0, got {sigma}")
    masses = _gaussian_bin_masses(float(sigma), support_min, support_max)
    return PmfTable(support_min, support_max, apply_floor(masses), model, index)


def symmetric_support(cdf, tail=TAIL_MASS, max_abs=MAX_ABS_SUPPORT):
    """Smallest ``[-r, r]`` leaving less than ``tail`` mass outside, capped at ``max_abs``."""
    r = np.arange(max_abs + 1, dtype=np.float64)
    outside = np.asarray(cdf(-r - 0.5)) + (1.0 - np.asarray(cdf(r + 0.5)))
    ok = np.flatnonzero(outside < tail)
    radius = int(ok[0]) if ok.size else max_abs
    return -radius, radius


def gaussian_support(sigma, tail=TAIL_MASS, max_abs=MAX_ABS_SUPPORT):
    r = np.arange(max_abs + 1, dtype=np.float64)
    ok = np.flatnonzero(2.0 * normal_sf((r + 0.5) / sigma) < tail)
    radius = int(ok[0]) if ok.size else max_abs
    return -radius, radius


class ScaleTable:
    """Ascending Gaussian scales, each with a lazily built zero-mean pmf table."""

    def __init__(self, scales, descriptor=None):
        scales = np.array(scales, dtype=np.float64).reshape(-1)
        if scales.size < 1:
            raise ValueError("scale table needs at least one scale")
        if not np.all(np.isfinite(scales) & (scales > 0)):
            raise ValueError("scales must be finite and > 0")
        if np.any(np.diff(scales) <= 0):
            raise ValueError("scales must be strictly ascending")
        scales.setflags(write=False)
        self.scales = scales
        self.descriptor = descriptor
        self._cache = {}

    @classmethod
    def log_spaced(cls, s=DEFAULT_NUM_SCALES, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX):
        """``s`` scales log-spaced on ``[sigma_min, sigma_max]``, rounded to float32.

        Rounding to float32 makes comparisons against float32 side info exact.
        """
        if s < 1 or not 0 < sigma_min <= sigma_max:
            raise ValueError("need s >= 1 and 0 < sigma_min <= sigma_max")
        if not sigma_max < float(np.finfo(np.float32).max):
            raise ValueError("sigma_max does not fit in float32")
        if s == 1:
            raw = np.array([sigma_min])
        else:
            raw = np.exp(np.linspace(math.log(sigma_min), math.log(sigma_max), s))
        return cls(raw.astype(np.float32).astype(np.float64), descriptor=(s, sigma_min, sigma_max))

    def __len__(self):
        return self.scales.size

    def support(self, k):
        return gaussian_support(self.scales[k])

    def pmf(self, k):
        if k not in self._cache:
            lo, hi = self.support(k)
            self._cache[k] = discretized_gaussian_pmf(self.scales[k], lo, hi, "hyperprior", k)
        return self._cache[k]

    def tables(self):
        return [self.pmf(k) for k in range(len(self))]


def assign_scales(side, table):
    """Index of the smallest table scale >= each predicted scale (clamped to the last)."""
    sigma = np.asarray(side.scales if hasattr(side, "scales") else side, dtype=np.float64)
    idx = np.searchsorted(table.scales, sigma, side="left")
    return np.minimum(idx, len(table) - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class SymbolStream:
    """Symbols in coding order with the table each one is coded with."""

    symbols: np.ndarray
    assignment: np.ndarray

    def __post_init__(self):
        sym = np.array(self.symbols, dtype=np.int64).reshape(-1)
        asg = np.array(self.assignment, dtype=np.int64).reshape(-1)
        if sym.shape != asg.shape:
            raise ValueError("symbols and assignment must have equal length")
        if asg.size and asg.min() < 0:
            raise ValueError("table assignment must be non-negative")
        sym.setflags(write=False)
        asg.setflags(write=False)
        object.__setattr__(self, "symbols", sym)
        object.__setattr__(self, "assignment", asg)

    def __len__(self):
        return self.symbols.size

    @classmethod
    def factorized(cls, tensor):
        return cls(tensor.flat(), tensor.channel_index())

    @classmethod
    def hyperprior(cls, tensor, side, scale_table):
        if len(side) != tensor.size:
            raise ValueError("side-info length mismatch")
        return cls(tensor.flat(), assign_scales(side, scale_table))

    def concat(self, other):
        return SymbolStream(
            np.concatenate([self.symbols, other.symbols]),
            np.concatenate([self.assignment, other.assignment]),
        )


def table_layout(tables):
    """Flat per-table arrays ``(sym_min, sizes, base)`` for the kernels."""
    sym_min = np.array([t.support_min for t in tables], dtype=np.int64)
    sizes = np.array([t.support_max - t.support_min + 1 for t in tables], dtype=np.int64)
    base = np.zeros(len(tables), dtype=np.int64)
    if len(tables) > 1:
        base[1:] = np.cumsum(sizes)[:-1]
    return sym_min, sizes, base


def count_symbols(stream, tables):
    """Exact per-table counts aligned to each table's support."""
    if len(stream) and stream.assignment.max() >= len(tables):
        raise SupportError(f"table index {int(stream.assignment.max())} out of range")
    sym_min, sizes, base = table_layout(tables)
    n_bins = int(sizes.sum())
    counts, bad = kernels.tally(stream.symbols, stream.assignment, base, sizes, sym_min, n_bins)
    if bad >= 0:
        t = int(stream.assignment[bad])
        raise SupportError(
            f"symbol {int(stream.symbols[bad])} at position {bad} is outside "
            f"table {t} support [{tables[t].support_min}, {tables[t].support_max}]"
        )
    counts = np.asarray(counts, dtype=np.int64)
    return [counts[b : b + s] for b, s in zip(base, sizes)]


def table_bits(counts, probs):
    """Shannon code length ``-sum counts * log2 probs`` over occupied bins."""
    counts = np.asarray(counts)
    used = counts > 0
    return float(-np.dot(counts[used], np.log2(np.asarray(probs)[used])))


def ideal_bits(stream, tables):
    """Total Shannon code length of ``stream`` in bits under ``tables``."""
    counts = count_symbols(stream, tables)
    return math.fsum(table_bits(c, t.probs) for c, t in zip(counts, tables))


# -- PMFT sidecar ------------------------------------------------------------

PMFT_MAGIC = b"PMFT"
PMFT_VERSION = 1
_PMFT_HEAD = struct.Struct("<4sHI")
_PMFT_ENTRY = struct.Struct("<BIii")


def tables_to_bytes(tables):
    parts = [_PMFT_HEAD.pack(PMFT_MAGIC, PMFT_VERSION, len(tables))]
    for t in tables:
        parts.append(_PMFT_ENTRY.pack(MODELS.index(t.model), t.index, t.support_min, t.support_max))
        parts.append(t.probs.astype("<f8").tobytes())
    return b"".join(parts)


def tables_from_bytes(data):
    if data[:4] != PMFT_MAGIC:
        raise FormatError("bad magic, expected b'PMFT'", chunk="header", offset=0)
    if len(data) < _PMFT_HEAD.size:
        raise FormatError("truncated header", chunk="header", offset=len(data))
    _, version, count = _PMFT_HEAD.unpack_from(data, 0)
    if version != PMFT_VERSION:
        raise FormatError(f"unsupported PMFT version {version}", chunk="header", offset=4)
    pos = _PMFT_HEAD.size
    tables = []
    for i in range(count):
        if len(data) < pos + _PMFT_ENTRY.size:
            raise FormatError("truncated table entry", chunk=f"table[{i}]", offset=pos)
        model, index, lo, hi = _PMFT_ENTRY.unpack_from(data, pos)
        pos += _PMFT_ENTRY.size
        if model >= len(MODELS) or hi < lo:
            raise FormatError("invalid table label or support", chunk=f"table[{i}]", offset=pos - _PMFT_ENTRY.size)
        n = hi - lo + 1
        if len(data) < pos + 8 * n:
            raise FormatError("truncated probabilities", chunk=f"table[{i}]", offset=pos)
        probs = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
        try:
            try:
                table = PmfTable(lo, hi, probs, MODELS[model], index)
            except ValueError:
                # exported tables need not be floored; normalize them once here
                table = PmfTable(lo, hi, apply_floor(np.maximum(probs, 0.0)), MODELS[model], index)
        except ValueError as exc:
            raise FormatError(f"invalid table: {exc}", chunk=f"table[{i}]", offset=pos) from exc
        tables.append(table)
        pos += 8 * n
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes", chunk="trailer", offset=pos)
    return tables


def save_tables(tables, path):
    Path(path).write_bytes(tables_to_bytes(tables))


def load_tables(path):
    return tables_from_bytes(Path(path).read_bytes())
