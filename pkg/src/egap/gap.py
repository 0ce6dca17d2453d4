"""Amortization-gap accounting and per-model gap reports.

The gap of a table is the ideal code length under its learned pmf minus
the code length under the instance's own normalized histogram, which is
the best any pmf on that support can do.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from egap.entropy import count_symbols, table_bits


@dataclass(frozen=True)
class HistogramSet:
    counts: tuple
    supports: tuple

    @property
    def totals(self):
        return tuple(int(c.sum()) for c in self.counts)

    def __len__(self):
        return len(self.counts)

    def normalized(self, t):
        c = self.counts[t]
        n = c.sum()
        return c / n if n else np.zeros(c.size)


def histogram(stream, tables):
    counts = count_symbols(stream, tables)
    return HistogramSet(tuple(counts), tuple((t.support_min, t.support_max) for t in tables))


def optimal_bits(counts):
    """Code length of ``counts`` under their own normalized histogram.

    Equals ``n log2 n - sum c log2 c``; empty bins contribute nothing.
    """
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    n = c.sum()
    if n == 0:
        return 0.0
    return float(max(n * math.log2(n) - np.dot(c, np.log2(c)), 0.0))


@dataclass(frozen=True)
class GapBits:
    learned: np.ndarray
    optimal: np.ndarray

    @property
    def gap(self):
        return self.learned - self.optimal

    @property
    def learned_total(self):
        return math.fsum(self.learned)

    @property
    def optimal_total(self):
        return math.fsum(self.optimal)

    @property
    def gap_total(self):
        return math.fsum(self.gap)


def gap_from_counts(counts, tables):
    learned = np.array([table_bits(c, t.probs) for c, t in zip(counts, tables)])
    optimal = np.array([optimal_bits(c) for c in counts])
    # Gibbs' inequality holds exactly; clip round-off so gap >= 0 per table
    return GapBits(learned, np.minimum(optimal, learned))


def gap_bits(stream, tables):
    """Per-table learned, optimal and gap bits for ``stream``."""
    return gap_from_counts(count_symbols(stream, tables), tables)


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class ModelStats:
    """Bit accounting of one entropy model for one instance."""

    name: str
    bits: float
    gap_bits: float
    adapted_bits: float = None
    param_bits: int = 0
    signal_bits: int = 0
    coded_bits: int = None

    def __post_init__(self):
        if self.adapted_bits is None:
            object.__setattr__(self, "adapted_bits", self.bits)

    @property
    def gain_bits(self):
        return self.bits - self.adapted_bits - self.param_bits - self.signal_bits


@dataclass(frozen=True)
class ModelRow:
    name: str
    ratio: float
    gap: float
    gain: float
    stats: ModelStats


@dataclass(frozen=True)
class GapReport:
    rows: tuple
    total_gap: float
    total_gain: float
    total_bits: float
    label: str = ""

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        return None

    def columns(self, names=("factorized", "hyperprior")):
        """Flat report record: Ratio/Gap/Gain per model, then totals."""
        out = {"Model": self.label}
        for name in names:
            r = self.row(name)
            title = name.capitalize()
            for col in ("ratio", "gap", "gain"):
                out[f"{title} {col.capitalize()}"] = "-" if r is None else f"{getattr(r, col):.2f}"
        out["Total Gap"] = f"{self.total_gap:.2f}"
        out["Total Gain"] = f"{self.total_gain:.2f}"
        for name in names:
            r = self.row(name)
            title = name.capitalize()
            s = r.stats if r is not None else None
            out[f"{title} Bits"] = "" if s is None else f"{s.bits:.4f}"
            out[f"{title} Gap Bits"] = "" if s is None else f"{s.gap_bits:.4f}"
            out[f"{title} Adapted Bits"] = "" if s is None else f"{s.adapted_bits:.4f}"
            out[f"{title} Param Bits"] = "" if s is None else str(s.param_bits)
            out[f"{title} Signal Bits"] = "" if s is None else str(s.signal_bits)
        return out

    def to_csv(self):
        cols = self.columns()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(cols), lineterminator="\n")
        writer.writeheader()
        writer.writerow(cols)
        return buf.getvalue()

    def format_table(self):
        head = ["Model", "Ratio (%)", "Gap (%)", "Gain (%)", "Bits", "Gap bits", "Overhead bits"]
        lines = ["{:<12}{:>11}{:>10}{:>10}{:>16}{:>14}{:>15}".format(*head)]
        for r in self.rows:
            s = r.stats
            lines.append(
                f"{r.name:<12}{r.ratio:>11.2f}{r.gap:>10.2f}{r.gain:>10.2f}"
                f"{s.bits:>16.2f}{s.gap_bits:>14.2f}{s.param_bits + s.signal_bits:>15d}"
            )
        lines.append(f"{'total':<12}{100.0:>11.2f}{self.total_gap:>10.2f}{self.total_gain:>10.2f}{self.total_bits:>16.2f}")
        return "\n".join(lines)


def build_report(stats, label=""):
    """Percentages relative to each model's own bits; totals weighted by bit share.

    Gain nets out parameter and signalling bits.
    """
    stats = list(stats)
    total = math.fsum(s.bits for s in stats)
    if not total > 0:
        raise ValueError("report needs a positive total bit count")
    rows = []
    for s in stats:
        if s.bits > 0:
            gap, gain = 100.0 * s.gap_bits / s.bits, 100.0 * s.gain_bits / s.bits
        else:
            gap = gain = 0.0
        rows.append(ModelRow(s.name, 100.0 * s.bits / total, gap, gain, s))
    total_gap = 100.0 * math.fsum(s.gap_bits for s in stats) / total
    total_gain = 100.0 * math.fsum(s.gain_bits for s in stats) / total
    return GapReport(tuple(rows), total_gap, total_gain, total, label)


def report_from_percentages(rows, label=""):
    """Rebuild a report from published ``(name, ratio%, gap%, gain%)`` rows."""
    stats = []
    for name, ratio, gap, gain in rows:
        bits = float(ratio)
        stats.append(
            ModelStats(name, bits, bits * gap / 100.0, adapted_bits=bits - bits * (gain or 0.0) / 100.0)
        )
    return build_report(stats, label)
