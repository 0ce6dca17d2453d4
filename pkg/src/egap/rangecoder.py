"""Integer range coder over quantized frequency tables.

The coder keeps a 32-bit range renormalized byte-wise to ``[2**24, 2**32)``
and a 33-bit ``low`` whose carries are resolved with a cached byte plus a run
of pending 0xFF bytes. Interval splits are computed multiply-first,
``floor(range * cum / total)``, which loses far less than dividing the range
by the total up front. The stream carries exactly ``4 + renormalizations``
bytes, so a decoder that runs out of input knows the stream was truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from egap import kernels
from egap.entropy import count_symbols, table_bits, table_layout
from egap.errors import CorruptStreamError, SupportError

DEFAULT_PRECISION = 16
MAX_PRECISION = 24


@dataclass(frozen=True, eq=False)
class FreqTable:
    support_min: int
    support_max: int
    freqs: np.ndarray
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=np.int64).reshape(-1)
        if freqs.size != self.support_max - self.support_min + 1:
            raise ValueError("frequency count does not match the support")
        if not 1 <= self.precision <= MAX_PRECISION:
            raise ValueError(f"precision must be in [1, {MAX_PRECISION}]")
        if freqs.min() < 1:
            raise ValueError("every frequency must be >= 1")
        if int(freqs.sum()) != 1 << self.precision:
            raise ValueError(f"frequencies sum to {int(freqs.sum())}, not {1 << self.precision}")
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)

    @property
    def total(self):
        return 1 << self.precision

    @property
    def size(self):
        return self.freqs.size

    @property
    def cdf(self):
        out = np.zeros(self.size + 1, dtype=np.int64)
        np.cumsum(self.freqs, out=out[1:])
        return out

    def center_index(self):
        return -self.support_min

    def implied_pmf(self):
        """The pmf the coder actually realizes, ``freq / total``."""
        return self.freqs / self.total

    def __eq__(self, other):
        if not isinstance(other, FreqTable):
            return NotImplemented
        return (
            self.support_min == other.support_min
            and self.precision == other.precision
            and bool(np.array_equal(self.freqs, other.freqs))
        )

    __hash__ = None


def largest_remainder(base, remainders, residual):
    """Add one unit to the ``residual`` bins with the largest remainders.

    Ties go to the lower index. ``residual`` must be below ``len(base)``.
    """
    base = np.array(base, dtype=np.int64)
    if residual > 0:
        order = np.lexsort((np.arange(base.size), -np.asarray(remainders)))
        base[order[:residual]] += 1
    return base


def quantize_pmf(pmf, precision=DEFAULT_PRECISION):
    """Integer frequencies summing to ``2**precision``, every bin >= 1.

    Bins get ``floor(p * total)`` (at least 1); the shortfall is handed out
    by largest fractional part. If the >= 1 clamps overshoot the total, units
    are taken back from bins with the smallest fractional part.
    """
    if not 1 <= precision <= MAX_PRECISION:
        raise ValueError(f"precision must be in [1, {MAX_PRECISION}]")
    total = 1 << precision
    probs = np.asarray(pmf.probs, dtype=np.float64)
    if probs.size > total:
        raise ValueError(f"support of {probs.size} bins exceeds total frequency {total}")
    target = probs * total
    floors = np.floor(target)
    frac = target - floors
    freqs = np.maximum(floors.astype(np.int64), 1)
    residual = total - int(freqs.sum())
    if residual > 0:
        freqs = largest_remainder(freqs, frac, residual)
    idx = np.arange(freqs.size)
    while residual < 0:
        movable = np.flatnonzero(freqs > 1)
        order = movable[np.lexsort((idx[movable], frac[movable]))]
        take = order[: -residual]
        freqs[take] -= 1
        residual += take.size
    return FreqTable(pmf.support_min, pmf.support_max, freqs, precision)


@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_len: int

    def __post_init__(self):
        if self.bit_len > 8 * len(self.data):
            raise ValueError("bit_len exceeds the byte buffer")

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        return cls(data, 8 * len(data))


def _flatten(tables):
    precisions = {t.precision for t in tables}
    if len(precisions) > 1:
        raise ValueError("all frequency tables in one stream must share a precision")
    precision = precisions.pop() if precisions else DEFAULT_PRECISION
    sym_min, sizes, base = table_layout(tables)
    cdf_flat = np.concatenate([t.cdf for t in tables]) if tables else np.zeros(1, np.int64)
    cdf_base = base + np.arange(len(tables), dtype=np.int64)
    return cdf_flat, cdf_base, sizes, sym_min, precision


def _check_assignment(assignment, tables):
    if assignment.size and (assignment.min() < 0 or assignment.max() >= len(tables)):
        raise SupportError("table assignment refers to a missing table")


def encode(stream, tables):
    """Range-code ``stream`` with ``tables[stream.assignment[i]]`` for symbol ``i``."""
    _check_assignment(stream.assignment, tables)
    cdf_flat, cdf_base, sizes, sym_min, precision = _flatten(tables)
    out, n_bytes, bad = kernels.range_encode(
        stream.symbols, stream.assignment, cdf_flat, cdf_base, sizes, sym_min, precision
    )
    if bad >= 0:
        t = int(stream.assignment[bad])
        raise SupportError(
            f"symbol {int(stream.symbols[bad])} at position {bad} is outside "
            f"table {t} support [{tables[t].support_min}, {tables[t].support_max}]"
        )
    return Bitstream.from_bytes(np.asarray(out[:n_bytes], dtype=np.uint8).tobytes())


def decode(bits, tables, assignment, n):
    """Inverse of :func:`encode`; raises :class:`CorruptStreamError` on bad input."""
    assignment = np.asarray(assignment, dtype=np.int64).reshape(-1)
    if assignment.size != n:
        raise ValueError(f"assignment has {assignment.size} entries for {n} symbols")
    _check_assignment(assignment, tables)
    data = bits.data if isinstance(bits, Bitstream) else bytes(bits)
    cdf_flat, cdf_base, sizes, sym_min, precision = _flatten(tables)
    buf = np.frombuffer(data, dtype=np.uint8) if data else np.zeros(0, np.uint8)
    out, pos, status = kernels.range_decode(
        buf, len(data), assignment, cdf_flat, cdf_base, sizes, sym_min, precision, n
    )
    if status == kernels.STATUS_EXHAUSTED:
        raise CorruptStreamError(f"bitstream exhausted after {pos} bytes")
    if status == kernels.STATUS_CORRUPT:
        raise CorruptStreamError(f"inconsistent coder state at byte {pos}")
    if pos != len(data):
        raise CorruptStreamError(f"{len(data) - pos} unread bytes after the last symbol")
    return np.asarray(out, dtype=np.int64)


def implied_bits(stream, freq_tables):
    """Ideal code length of ``stream`` under the frequency-implied pmfs."""
    counts = count_symbols(stream, freq_tables)
    return math.fsum(table_bits(c, t.implied_pmf()) for c, t in zip(counts, freq_tables))
