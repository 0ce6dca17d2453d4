"""Latent tensors, side information, the LATB file format and synthesis.

LATB v1 layout (little-endian)::

    "LATB" | version u16 = 1 | role u8 (0 main, 1 side) | h u32 | w u32 | c u32
    | h*w*c i32 symbols, row-major (h, w, c)
    [ | "SIDE" | count u64 | count f32 means | count f32 scales ]

Synthesis draws from ``numpy.random.Generator(PCG64(seed))``; PCG64 is a
documented, platform-independent generator, so a seed pins the output bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from egap.entropy import symmetric_support
from egap.errors import FormatError
from egap.special import normal_cdf

MAGIC = b"LATB"
SIDE_MAGIC = b"SIDE"
VERSION = 1
ROLES = ("main", "side")

_HEADER = struct.Struct("<4sHB3I")


def round_half_away(x):
    """Round to the nearest integer, halves away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class LatentTensor:
    symbols: np.ndarray
    role: str = "main"

    def __post_init__(self):
        arr = np.array(self.symbols, dtype=np.int64)
        if arr.ndim != 3:
            raise ValueError(f"latent must be 3-D (h, w, c), got shape {arr.shape}")
        if arr.size and (arr.min() < -(2**31) or arr.max() >= 2**31):
            raise ValueError("latent symbols must fit in int32")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        arr = arr.astype(np.int32)
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @property
    def shape(self):
        return self.symbols.shape

    @property
    def size(self):
        return self.symbols.size

    def flat(self):
        """Symbols in coding order (row-major h, w, c) as int64."""
        return self.symbols.reshape(-1).astype(np.int64)

    def channel_index(self):
        """Channel of every symbol in coding order."""
        return np.tile(np.arange(self.shape[2], dtype=np.int64), self.shape[0] * self.shape[1])

    def __eq__(self, other):
        if not isinstance(other, LatentTensor):
            return NotImplemented
        return (
            self.role == other.role
            and self.shape == other.shape
            and bool(np.array_equal(self.symbols, other.symbols))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SideInfo:
    """Per-point predicted means and scales, in the main tensor's coding order."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float32).reshape(-1)
        scales = np.array(self.scales, dtype=np.float32).reshape(-1)
        if means.shape != scales.shape:
            raise ValueError(
                f"side-info length mismatch: {means.size} means vs {scales.size} scales"
            )
        if not np.all(np.isfinite(means)):
            raise ValueError("side-info means must be finite")
        if not np.all(np.isfinite(scales) & (scales > 0)):
            raise ValueError("side-info scales must be finite and > 0")
        means.setflags(write=False)
        scales.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    def __len__(self):
        return self.means.size

    def __eq__(self, other):
        if not isinstance(other, SideInfo):
            return NotImplemented
        return bool(
            np.array_equal(self.means, other.means) and np.array_equal(self.scales, other.scales)
        )

    __hash__ = None


def save_latents(tensor, side, path):
    """Write ``tensor`` (and ``side`` when given) as a LATB v1 file."""
    Path(path).write_bytes(latents_to_bytes(tensor, side))


def latents_to_bytes(tensor, side=None):
    if side is not None and len(side) != tensor.size:
        raise ValueError(
            f"side-info length mismatch: {len(side)} entries for {tensor.size} symbols"
        )
    h, w, c = tensor.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, ROLES.index(tensor.role), h, w, c),
        tensor.symbols.astype("<i4").tobytes(),
    ]
    if side is not None:
        parts += [
            SIDE_MAGIC,
            struct.pack("<Q", len(side)),
            side.means.astype("<f4").tobytes(),
            side.scales.astype("<f4").tobytes(),
        ]
    return b"".join(parts)


def load_latents(path):
    """Read a LATB v1 file; returns ``(LatentTensor, SideInfo or None)``."""
    return latents_from_bytes(Path(path).read_bytes())


def latents_from_bytes(data):
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic, expected b'LATB'", chunk="header", offset=0)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", chunk="header", offset=len(data))
    _, version, role, h, w, c = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported LATB version {version}", chunk="header", offset=4)
    if role >= len(ROLES):
        raise FormatError(f"unknown role byte {role}", chunk="header", offset=6)
    pos = _HEADER.size
    n = h * w * c
    end = pos + 4 * n
    if len(data) < end:
        raise FormatError(
            f"truncated symbols: need {4 * n} bytes, have {len(data) - pos}",
            chunk="symbols",
            offset=pos,
        )
    symbols = np.frombuffer(data, dtype="<i4", count=n, offset=pos).reshape(h, w, c)
    tensor = LatentTensor(symbols, role=ROLES[role])
    pos = end
    if pos == len(data):
        return tensor, None

    if data[pos : pos + 4] != SIDE_MAGIC:
        raise FormatError("expected SIDE chunk or end of file", chunk="SIDE", offset=pos)
    if len(data) < pos + 12:
        raise FormatError("truncated SIDE count", chunk="SIDE", offset=pos + 4)
    (count,) = struct.unpack_from("<Q", data, pos + 4)
    pos += 12
    if count != n:
        raise FormatError(
            f"side-info length mismatch: {count} entries for {n} symbols",
            chunk="SIDE",
            offset=pos - 8,
        )
    if len(data) != pos + 8 * count:
        raise FormatError(
            f"SIDE chunk expects {8 * count} bytes, found {len(data) - pos}",
            chunk="SIDE",
            offset=pos,
        )
    means = np.frombuffer(data, dtype="<f4", count=count, offset=pos)
    scales = np.frombuffer(data, dtype="<f4", count=count, offset=pos + 4 * count)
    bad = np.flatnonzero(~np.isfinite(means))
    if bad.size:
        raise FormatError("non-finite mean", chunk="SIDE", offset=pos + 4 * int(bad[0]))
    bad = np.flatnonzero(~(np.isfinite(scales) & (scales > 0)))
    if bad.size:
        raise FormatError(
            "non-positive scale", chunk="SIDE", offset=pos + 4 * count + 4 * int(bad[0])
        )
    return tensor, SideInfo(means, scales)


# -- synthesis ---------------------------------------------------------------

FAMILIES = ("gaussian", "laplacian", "mixture")


@dataclass(frozen=True)
class Dist:
    """A continuous 1-D distribution.

    ``mixture`` is ``weight * N(loc, scale) + (1 - weight) * N(loc2, scale2)``;
    the other families use ``loc`` and ``scale`` only (laplacian ``scale`` is b).
    """

    family: str = "gaussian"
    scale: float = 1.0
    loc: float = 0.0
    weight: float = 0.5
    scale2: float = 1.0
    loc2: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        scales = [self.scale] + ([self.scale2] if self.family == "mixture" else [])
        if not all(math.isfinite(s) and s > 0 for s in scales):
            raise ValueError(f"degenerate {self.family} descriptor: scale must be > 0")
        if self.family == "mixture" and not 0.0 <= self.weight <= 1.0:
            raise ValueError("mixture weight must lie in [0, 1]")

    @property
    def mean(self):
        if self.family == "mixture":
            return self.weight * self.loc + (1 - self.weight) * self.loc2
        return self.loc

    @property
    def std(self):
        if self.family == "gaussian":
            return self.scale
        if self.family == "laplacian":
            return math.sqrt(2.0) * self.scale
        m = self.mean
        w = self.weight
        second = w * (self.scale**2 + self.loc**2) + (1 - w) * (self.scale2**2 + self.loc2**2)
        return math.sqrt(max(second - m * m, 1e-12))

    def shifted(self, offset):
        return replace(self, loc=self.loc + offset, loc2=self.loc2 + offset)

    def centered(self):
        return self.shifted(-self.mean)

    def scaled(self, factor):
        """Scale the spread by ``factor`` around the mean."""
        m = self.mean
        return replace(
            self,
            scale=self.scale * factor,
            scale2=self.scale2 * factor,
            loc=m + (self.loc - m) * factor,
            loc2=m + (self.loc2 - m) * factor,
        )

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.family == "gaussian":
            return normal_cdf((x - self.loc) / self.scale)
        if self.family == "laplacian":
            z = (x - self.loc) / self.scale
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1 - 0.5 * np.exp(-np.maximum(z, 0.0)))
        return self.weight * normal_cdf((x - self.loc) / self.scale) + (1 - self.weight) * normal_cdf(
            (x - self.loc2) / self.scale2
        )

    def sample(self, rng, n):
        if self.family == "gaussian":
            return rng.normal(self.loc, self.scale, n)
        if self.family == "laplacian":
            return rng.laplace(self.loc, self.scale, n)
        first = rng.random(n) < self.weight
        a = rng.normal(self.loc, self.scale, n)
        b = rng.normal(self.loc2, self.scale2, n)
        return np.where(first, a, b)


def learned_support(dist):
    """Symmetric table support used for ``dist`` once centered."""
    return symmetric_support(dist.centered().cdf)


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    shape: tuple
    true: tuple
    learned: tuple
    scale_factor: float = 1.0
    mean_offset: float = 0.0
    role: str = "main"

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError(f"shape must be three positive ints, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        for name in ("true", "learned"):
            dists = getattr(self, name)
            if isinstance(dists, Dist):
                dists = (dists,) * shape[2]
            dists = tuple(dists)
            if len(dists) != shape[2]:
                raise ValueError(f"need one {name} descriptor per channel ({shape[2]}), got {len(dists)}")
            object.__setattr__(self, name, dists)
        if not (math.isfinite(self.scale_factor) and self.scale_factor > 0):
            raise ValueError("scale_factor must be > 0")


def synthesize(spec):
    """Draw a latent whose channels follow ``spec.true`` but are modelled by ``spec.learned``.

    Symbols are ``round(y - mu_learned)`` with ``y`` drawn from the true
    distribution (after the mismatch knobs), clipped to the learned table's
    support. Returns ``(LatentTensor, SideInfo, learned descriptors)``; the side
    info carries the learned mean and standard deviation of each point's channel.
    """
    h, w, c = spec.shape
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    symbols = np.empty((h, w, c), dtype=np.int64)
    for ch in range(c):
        learned = spec.learned[ch]
        true = spec.true[ch].scaled(spec.scale_factor).shifted(spec.mean_offset)
        y = true.sample(rng, h * w)
        lo, hi = learned_support(learned)
        q = round_half_away(y - learned.mean)
        symbols[:, :, ch] = np.clip(q, lo, hi).reshape(h, w)
    means = np.array([d.mean for d in spec.learned], dtype=np.float64)
    stds = np.array([d.std for d in spec.learned], dtype=np.float64)
    side = SideInfo(np.tile(means, h * w), np.tile(stds, h * w))
    return LatentTensor(symbols, role=spec.role), side, spec.learned
