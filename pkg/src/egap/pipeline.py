"""End-to-end glue: gap analysis, adaptation, container encode and decode.

An :class:`Instance` is either factorized-only (the main latent is coded with
one learned table per channel) or hyperprior (the side latent is coded with
the per-channel tables, the main latent with the scale-indexed Gaussian
tables picked by the out-of-band side info).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from egap import rangecoder
from egap.adapt import AdaptationConfig, select_tables
from egap.container import ContainerHeader, Section, pack, unpack
from egap.entropy import ScaleTable, SymbolStream, count_symbols, pmf_from_cdf
from egap.errors import FormatError
from egap.gap import ModelStats, build_report, gap_from_counts
from egap.latents import LatentTensor, SynthSpec, learned_support, synthesize

DEFAULT_PRECISION = rangecoder.DEFAULT_PRECISION


def default_configs(mode):
    """Per-model adaptation defaults: GMM K=2 on 64 tables when factorized-only;
    GMM K=1 on 32 side tables plus zero-mean Gaussian on 32 main tables otherwise."""
    if mode == "factorized":
        return {"factorized": AdaptationConfig("gmm", K=2, T=64)}
    return {
        "factorized": AdaptationConfig("gmm", K=1, T=32),
        "hyperprior": AdaptationConfig("zero-mean-gaussian", T=32),
    }


def baseline_configs(mode):
    names = ["factorized"] if mode == "factorized" else ["factorized", "hyperprior"]
    return {name: AdaptationConfig("none") for name in names}


@dataclass(frozen=True)
class Instance:
    main: LatentTensor
    tables: list
    side_info: object = None
    side: LatentTensor = None
    scale_table: ScaleTable = None

    def __post_init__(self):
        object.__setattr__(self, "tables", list(self.tables))
        if self.side_info is None:
            if self.main.shape[2] != len(self.tables):
                raise ValueError(
                    f"factorized mode needs one table per channel: {self.main.shape[2]} channels, {len(self.tables)} tables"
                )
            return
        if self.side is None:
            raise ValueError("hyperprior mode needs the side latent")
        if len(self.side_info) != self.main.size:
            raise ValueError("side-info length mismatch")
        if self.side.shape[2] != len(self.tables):
            raise ValueError(
                f"side latent has {self.side.shape[2]} channels but {len(self.tables)} tables were given"
            )
        if self.scale_table is None:
            object.__setattr__(self, "scale_table", ScaleTable.log_spaced())

    @property
    def mode(self):
        return "factorized" if self.side_info is None else "hyperprior"

    def streams(self):
        """``[(model, SymbolStream, learned tables)]`` in coding order."""
        if self.mode == "factorized":
            return [("factorized", SymbolStream.factorized(self.main), self.tables)]
        return [
            ("factorized", SymbolStream.factorized(self.side), self.tables),
            ("hyperprior", SymbolStream.hyperprior(self.main, self.side_info, self.scale_table), self.scale_table.tables()),
        ]


@dataclass(frozen=True)
class ModelResult:
    name: str
    stream: SymbolStream
    tables: list
    counts: list
    gap: object
    record: object

    def stats(self, coded_bits=None):
        rec = self.record
        saved = rec.saved_bits
        return ModelStats(
            self.name,
            bits=self.gap.learned_total,
            gap_bits=self.gap.gap_total,
            adapted_bits=self.gap.learned_total - saved,
            param_bits=rec.param_bits,
            signal_bits=rec.signal_bits,
            coded_bits=coded_bits,
        )


def _fit_config(cfg, n_tables, precision):
    return dataclasses.replace(cfg, T=min(cfg.T, n_tables), precision=precision)


def analyze(inst, configs=None, precision=DEFAULT_PRECISION):
    """Histogram, gap and table selection for every model of ``inst``.

    ``T`` larger than a model's table count is clamped to it.
    """
    configs = default_configs(inst.mode) if configs is None else configs
    results = []
    for name, stream, tables in inst.streams():
        counts = count_symbols(stream, tables)
        gap = gap_from_counts(counts, tables)
        cfg = _fit_config(configs.get(name, AdaptationConfig("none")), len(tables), precision)
        record = select_tables(counts, tables, cfg)
        results.append(ModelResult(name, stream, tables, counts, gap, record))
    return results


def report(results, label="", coded_bits=None):
    coded_bits = coded_bits or {}
    return build_report([r.stats(coded_bits.get(r.name)) for r in results], label)


@dataclass(frozen=True)
class EncodeResult:
    data: bytes
    sizes: object
    results: list

    def report(self, label=""):
        coded = {}
        _, sections, _ = unpack(self.data)
        for r, sec in zip(self.results, sections):
            coded[r.name] = 8 * len(sec.payload)
        return report(self.results, label, coded)


def encode_instance(inst, configs=None, precision=DEFAULT_PRECISION):
    """Adapt, range-code and pack ``inst``; returns an :class:`EncodeResult`."""
    results = analyze(inst, configs, precision)
    sections = []
    for r in results:
        freqs = r.record.freq_tables(r.tables)
        payload = rangecoder.encode(r.stream, freqs).data
        sections.append(Section(r.name, len(r.tables), r.record, payload))
    if inst.mode == "hyperprior":
        if inst.scale_table.descriptor is None:
            raise ValueError("container needs a log-spaced scale table (with a descriptor)")
        header = ContainerHeader("hyperprior", precision, inst.main.shape, inst.side.shape, inst.scale_table.descriptor)
    else:
        header = ContainerHeader("factorized", precision, inst.main.shape)
    data, sizes = pack(header, sections)
    return EncodeResult(data, sizes, results)


@dataclass(frozen=True)
class Decoded:
    main: LatentTensor
    side: LatentTensor = None


def _check_tables(sec, learned, channels):
    if not sec.n_tables == len(learned) == channels:
        raise FormatError(
            f"container expects {sec.n_tables} {sec.model} tables for {channels} channels, "
            f"decoder has {len(learned)}",
            chunk=sec.model,
        )


def _decode_section(sec, learned, assignment, n, shape, role):
    try:
        freqs = sec.record.freq_tables(learned)
    except ValueError as exc:
        raise FormatError(f"cannot rebuild adapted tables: {exc}", chunk=sec.model) from exc
    symbols = rangecoder.decode(sec.payload, freqs, assignment, n)
    if symbols.size and (symbols.min() < -(2**31) or symbols.max() >= 2**31):
        raise FormatError("decoded symbol out of int32 range", chunk=sec.model)
    return LatentTensor(symbols.reshape(shape), role=role)


def unpack_and_decode(data, tables, side_info=None):
    """Rebuild the latent(s) from a container.

    ``tables`` are the learned per-channel tables; hyperprior containers also
    need the side info the hyper-decoder would have produced.
    """
    header, sections, _ = unpack(data)
    expected = ["factorized"] if header.mode == "factorized" else ["factorized", "hyperprior"]
    if [s.model for s in sections] != expected:
        raise FormatError(f"{header.mode} container must hold sections {expected}", chunk="header")
    h, w, c = header.main_shape
    if header.mode == "factorized":
        _check_tables(sections[0], tables, c)
        asg = np.tile(np.arange(c, dtype=np.int64), h * w)
        main = _decode_section(sections[0], tables, asg, h * w * c, header.main_shape, "main")
        return Decoded(main)

    if side_info is None:
        raise FormatError("hyperprior container needs side info to decode", chunk="header")
    if len(side_info) != h * w * c:
        raise FormatError("side-info length does not match the main latent shape", chunk="header")
    sh, sw, sc = header.side_shape
    _check_tables(sections[0], tables, sc)
    try:
        scale_table = ScaleTable.log_spaced(*header.scale_descriptor)
    except ValueError as exc:
        raise FormatError(f"bad scale table: {exc}", chunk="header") from exc
    if sections[1].n_tables != len(scale_table):
        raise FormatError("hyperprior section does not match the scale table", chunk="hyperprior")
    asg = np.tile(np.arange(sc, dtype=np.int64), sh * sw)
    side = _decode_section(sections[0], tables, asg, sh * sw * sc, header.side_shape, "side")
    stream = SymbolStream.hyperprior(LatentTensor(np.zeros(header.main_shape, np.int64)), side_info, scale_table)
    main = _decode_section(
        sections[1], scale_table.tables(), stream.assignment, h * w * c, header.main_shape, "main"
    )
    return Decoded(main, side)


# -- synthetic instances -----------------------------------------------------


def channel_dists(dist, channels, spread=1.0):
    """``channels`` copies of ``dist`` whose spread runs log-uniformly over [1/spread, spread]."""
    if not spread >= 1.0:
        raise ValueError("spread must be >= 1")
    if channels == 1 or spread == 1.0:
        return (dist,) * channels
    return tuple(dist.scaled(spread**t) for t in np.linspace(-1.0, 1.0, channels))


def factorized_tables(dists):
    """Learned per-channel tables for symbols stored relative to each channel mean."""
    return [pmf_from_cdf(d.centered().cdf, *learned_support(d), "factorized", i) for i, d in enumerate(dists)]


@dataclass(frozen=True)
class SynthInstance:
    instance: Instance
    main_spec: SynthSpec
    side_spec: SynthSpec = None


def synth_instance(
    seed,
    shape,
    true,
    learned,
    mode="hyperprior",
    side_shape=None,
    side_true=None,
    side_learned=None,
    scale_factor=1.0,
    mean_offset=0.0,
    spread=1.0,
):
    """Synthesize a full instance.

    In hyperprior mode the side latent uses seed ``seed + 1`` and, unless
    given, the main distributions and a shape of (H/4, W/4, C).
    """
    if mode not in ("factorized", "hyperprior"):
        raise ValueError(f"mode must be factorized or hyperprior, got {mode!r}")
    c = int(shape[2])
    main_spec = SynthSpec(
        seed, shape, channel_dists(true, c, spread), channel_dists(learned, c, spread), scale_factor, mean_offset
    )
    main, side_info, main_learned = synthesize(main_spec)
    if mode == "factorized":
        return SynthInstance(Instance(main, factorized_tables(main_learned)), main_spec)
    if side_shape is None:
        side_shape = (max(1, shape[0] // 4), max(1, shape[1] // 4), c)
    sc = int(side_shape[2])
    side_spec = SynthSpec(
        seed + 1,
        side_shape,
        channel_dists(side_true or true, sc, spread),
        channel_dists(side_learned or learned, sc, spread),
        scale_factor,
        mean_offset,
        role="side",
    )
    side, _, side_learned_d = synthesize(side_spec)
    inst = Instance(main, factorized_tables(side_learned_d), side_info, side)
    return SynthInstance(inst, main_spec, side_spec)
