"""EGAP v1 container: header, selection bitmap, quantized parameters, payloads.

Layout (little-endian, header byte-aligned)::

    "EGAP" | version u16 = 1 | mode u8 (0 factorized, 1 hyperprior) | precision u8
    | main h, w, c u32
    [hyperprior only: | side h, w, c u32 | scales s u16 | sigma_min f64 | sigma_max f64]
    | n_sections u8
    | per section: model u8 | method u8 | K u8 | bits u8 | n_tables u32 | T u32
    |              | [0 < T < n_tables: targeting mask, ceil(n_tables / 8) bytes,
    |                 bit t%8 (LSB first) of byte t//8 set iff table t is targeted]
    |              | payload bytes u32
    | bit-packed, MSB first: every section's T selection flags (ascending table
    |   order), then every section's parameter indices (``bits`` each) for its
    |   selected tables, zero-padded to a byte
    | payloads, one per section, in section order

Sections are stored in coding order: the factorized stream first (the side
latent in hyperprior mode), then the hyperprior-coded main latent.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from egap.adapt import (
    METHODS,
    AdaptationConfig,
    AdaptationRecord,
    TableChoice,
    param_count,
    rebuild_center_bin_freqs,
)
from egap.entropy import MODELS
from egap.errors import FormatError

MAGIC = b"EGAP"
VERSION = 1
CONTAINER_MODES = ("factorized", "hyperprior")
MAX_SYMBOLS = 1 << 25  # per latent; guards decoder allocations against corrupt shapes

__all__ = [
    "ContainerHeader",
    "Section",
    "SizeBreakdown",
    "pack",
    "unpack",
    "rebuild_center_bin_freqs",
]

_PRE = struct.Struct("<4sHBB3I")
_HYPER = struct.Struct("<3IHdd")
_SECTION = struct.Struct("<BBBBII")


class BitWriter:
    def __init__(self):
        self.bits = []

    def write(self, value, width):
        for k in range(width - 1, -1, -1):
            self.bits.append((int(value) >> k) & 1)

    def __len__(self):
        return len(self.bits)

    def to_bytes(self):
        return np.packbits(np.array(self.bits, dtype=np.uint8)).tobytes() if self.bits else b""


class BitReader:
    def __init__(self, data, offset):
        self.bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self.pos = 0
        self.offset = offset

    def read(self, width, chunk):
        if self.pos + width > self.bits.size:
            raise FormatError("bitmap/parameter underrun", chunk=chunk, offset=self.offset + self.pos // 8)
        v = 0
        for b in self.bits[self.pos : self.pos + width]:
            v = (v << 1) | int(b)
        self.pos += width
        return v


@dataclass(frozen=True)
class ContainerHeader:
    mode: str
    precision: int
    main_shape: tuple
    side_shape: tuple = None
    scale_descriptor: tuple = None


@dataclass(frozen=True)
class Section:
    """One entropy-coded stream with its adaptation record."""

    model: str
    n_tables: int
    record: AdaptationRecord
    payload: bytes


@dataclass(frozen=True)
class SizeBreakdown:
    header_bits: int
    signal_bits: int
    param_bits: int
    padding_bits: int
    payload_bits: int

    @property
    def total_bits(self):
        return self.header_bits + self.signal_bits + self.param_bits + self.padding_bits + self.payload_bits

    def as_dict(self):
        return {
            "header_bits": self.header_bits,
            "signal_bits": self.signal_bits,
            "param_bits": self.param_bits,
            "padding_bits": self.padding_bits,
            "payload_bits": self.payload_bits,
            "total_bits": self.total_bits,
        }


def _ordered(record):
    return sorted(record.choices, key=lambda c: c.table)


def pack(header, sections):
    """Serialize to bytes; returns ``(bytes, SizeBreakdown)``."""
    if header.mode not in CONTAINER_MODES:
        raise ValueError(f"unknown container mode {header.mode!r}")
    parts = [_PRE.pack(MAGIC, VERSION, CONTAINER_MODES.index(header.mode), header.precision, *header.main_shape)]
    if header.mode == "hyperprior":
        s, smin, smax = header.scale_descriptor
        parts.append(_HYPER.pack(*header.side_shape, s, smin, smax))
    parts.append(struct.pack("<B", len(sections)))
    bw = BitWriter()
    n_signal = n_param = 0
    for sec in sections:
        cfg = sec.record.config
        targeted = sec.record.targeted
        if any(not 0 <= t < sec.n_tables for t in targeted):
            raise ValueError("record targets a table outside the section")
        if len(set(targeted)) != len(targeted):
            raise ValueError("record targets a table twice")
        parts.append(
            _SECTION.pack(MODELS.index(sec.model), METHODS.index(cfg.method), cfg.K, cfg.bits, sec.n_tables, len(targeted))
        )
        if 0 < len(targeted) < sec.n_tables:
            mask = np.zeros(sec.n_tables, dtype=np.uint8)
            mask[targeted] = 1
            parts.append(np.packbits(mask, bitorder="little").tobytes())
        parts.append(struct.pack("<I", len(sec.payload)))
    for sec in sections:
        for choice in _ordered(sec.record):
            bw.write(choice.selected, 1)
            n_signal += 1
    for sec in sections:
        cfg = sec.record.config
        width = param_count(cfg.method, cfg.K)
        for choice in _ordered(sec.record):
            if not choice.selected:
                continue
            if len(choice.indices) != width:
                raise ValueError(f"table {choice.table} carries {len(choice.indices)} indices, expected {width}")
            for idx in choice.indices:
                if not 0 <= idx < (1 << cfg.bits):
                    raise ValueError(f"index {idx} does not fit in {cfg.bits} bits")
                bw.write(idx, cfg.bits)
                n_param += cfg.bits
    head = b"".join(parts)
    bitbytes = bw.to_bytes()
    payloads = b"".join(sec.payload for sec in sections)
    sizes = SizeBreakdown(
        header_bits=8 * len(head),
        signal_bits=n_signal,
        param_bits=n_param,
        padding_bits=8 * len(bitbytes) - n_signal - n_param,
        payload_bits=8 * len(payloads),
    )
    return head + bitbytes + payloads, sizes


def unpack(data):
    """Parse a container; returns ``(ContainerHeader, [Section], SizeBreakdown)``.

    Choices in the returned records carry no bit statistics (NaN).
    """
    data = bytes(data)
    if data[:4] != MAGIC:
        raise FormatError("bad magic, expected b'EGAP'", chunk="header", offset=0)
    if len(data) < 6:
        raise FormatError("truncated header", chunk="header", offset=len(data))
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}", chunk="header", offset=4)
    if len(data) < _PRE.size:
        raise FormatError("truncated header", chunk="header", offset=len(data))
    _, _, mode, precision, h, w, c = _PRE.unpack_from(data, 0)
    if mode >= len(CONTAINER_MODES):
        raise FormatError(f"unknown mode {mode}", chunk="header", offset=6)
    if not 1 <= precision <= 24:
        raise FormatError(f"invalid precision {precision}", chunk="header", offset=7)
    if h * w * c > MAX_SYMBOLS:
        raise FormatError(f"main shape {(h, w, c)} exceeds {MAX_SYMBOLS} symbols", chunk="header", offset=8)
    pos = _PRE.size
    side_shape = descriptor = None
    if CONTAINER_MODES[mode] == "hyperprior":
        if len(data) < pos + _HYPER.size:
            raise FormatError("truncated hyperprior header", chunk="header", offset=pos)
        sh, sw, sc, s, smin, smax = _HYPER.unpack_from(data, pos)
        if s < 1 or not (0 < smin <= smax) or not math.isfinite(smax):
            raise FormatError("invalid scale table descriptor", chunk="header", offset=pos + 12)
        if sh * sw * sc > MAX_SYMBOLS:
            raise FormatError(f"side shape {(sh, sw, sc)} exceeds {MAX_SYMBOLS} symbols", chunk="header", offset=pos)
        side_shape, descriptor = (sh, sw, sc), (s, smin, smax)
        pos += _HYPER.size
    header = ContainerHeader(CONTAINER_MODES[mode], precision, (h, w, c), side_shape, descriptor)

    if len(data) < pos + 1:
        raise FormatError("truncated section count", chunk="header", offset=pos)
    n_sections = data[pos]
    pos += 1
    raw = []
    for i in range(n_sections):
        chunk = f"section[{i}]"
        if len(data) < pos + _SECTION.size:
            raise FormatError("truncated section descriptor", chunk=chunk, offset=pos)
        model, method, K, bits, n_tables, T = _SECTION.unpack_from(data, pos)
        if model >= len(MODELS) or method >= len(METHODS):
            raise FormatError("unknown model or method id", chunk=chunk, offset=pos)
        try:
            cfg = AdaptationConfig(METHODS[method], K=K, T=T, bits=bits, precision=precision)
        except ValueError as exc:
            raise FormatError(f"invalid adaptation config: {exc}", chunk=chunk, offset=pos) from exc
        if cfg.T != T:
            raise FormatError("targeted tables listed for method 'none'", chunk=chunk, offset=pos)
        pos += _SECTION.size
        if T > n_tables:
            raise FormatError(f"T={T} exceeds the {n_tables} tables", chunk=chunk, offset=pos - 4)
        if T == n_tables:
            targeted = list(range(n_tables))
        elif T == 0:
            targeted = []
        else:
            n_mask = (n_tables + 7) // 8
            if len(data) < pos + n_mask:
                raise FormatError("truncated targeting mask", chunk=chunk, offset=pos)
            mask = np.unpackbits(np.frombuffer(data, np.uint8, n_mask, pos), bitorder="little")
            if mask[n_tables:].any() or int(mask.sum()) != T:
                raise FormatError("targeting mask does not match T", chunk=chunk, offset=pos)
            targeted = np.flatnonzero(mask).tolist()
            pos += n_mask
        if len(data) < pos + 4:
            raise FormatError("truncated section descriptor", chunk=chunk, offset=pos)
        (payload_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        raw.append((MODELS[model], n_tables, cfg, targeted, payload_len))
    header_bits = 8 * pos

    payload_total = sum(r[4] for r in raw)
    bit_section = data[pos : len(data) - payload_total] if payload_total <= len(data) - pos else None
    if bit_section is None:
        raise FormatError("payload lengths exceed the container", chunk="payload", offset=pos)
    reader = BitReader(bit_section, pos)
    flags = [[bool(reader.read(1, "bitmap")) for _ in r[3]] for r in raw]
    n_signal = reader.pos
    indices = []
    for (_, _, cfg, targeted, _), fl in zip(raw, flags):
        width = param_count(cfg.method, cfg.K)
        indices.append(
            [tuple(reader.read(cfg.bits, "parameters") for _ in range(width)) if f else () for f in fl]
        )
    n_param = reader.pos - n_signal
    if len(bit_section) != (reader.pos + 7) // 8:
        raise FormatError("bit section length does not match its contents", chunk="parameters", offset=pos)
    pos += len(bit_section)

    sections = []
    nan = float("nan")
    for (model, n_tables, cfg, targeted, payload_len), fl, idx in zip(raw, flags, indices):
        choices = tuple(
            TableChoice(t, f, ix, nan, nan, nan, cfg.bits_per_table if f else 0)
            for t, f, ix in zip(targeted, fl, idx)
        )
        sections.append(Section(model, n_tables, AdaptationRecord(cfg, choices), data[pos : pos + payload_len]))
        pos += payload_len
    sizes = SizeBreakdown(header_bits, n_signal, n_param, 8 * len(bit_section) - n_signal - n_param, 8 * payload_total)
    return header, sections, sizes
