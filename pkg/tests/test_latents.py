import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from egap.entropy import SymbolStream
from egap.errors import FormatError
from egap.gap import gap_bits
from egap.latents import (
    Dist,
    LatentTensor,
    SideInfo,
    SynthSpec,
    latents_from_bytes,
    latents_to_bytes,
    learned_support,
    load_latents,
    round_half_away,
    save_latents,
    synthesize,
)
from egap.pipeline import factorized_tables
from egap.special import normal_cdf


def _header(h, w, c, role=0, version=1):
    return struct.pack("<4sHB3I", b"LATB", version, role, h, w, c)


def test_minimal_file():
    t, side = latents_from_bytes(_header(1, 1, 1) + struct.pack("<i", 0))
    assert t.shape == (1, 1, 1) and t.symbols.tolist() == [[[0]]] and side is None


def test_side_chunk_length_mismatch_is_named():
    body = _header(2, 2, 1) + np.zeros(4, "<i4").tobytes()
    side = b"SIDE" + struct.pack("<Q", 5) + np.zeros(5, "<f4").tobytes() + np.ones(5, "<f4").tobytes()
    with pytest.raises(FormatError, match="side-info length mismatch") as err:
        latents_from_bytes(body + side)
    assert err.value.chunk == "SIDE"


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda b: b"XXXX" + b[4:], "bad magic"),
        (lambda b: b[:10], "truncated header"),
        (lambda b: b[:4] + struct.pack("<H", 2) + b[6:], "version"),
        (lambda b: b[:6] + b"\x07" + b[7:], "role"),
        (lambda b: b[:30], "truncated symbols"),
        (lambda b: b[:-1], "SIDE chunk expects"),
        (lambda b: b + b"junk", "SIDE chunk expects"),
    ],
)
def test_parse_errors(mutate, needle):
    t = LatentTensor(np.arange(8).reshape(2, 2, 2))
    good = latents_to_bytes(t, SideInfo(np.zeros(8), np.ones(8)))
    with pytest.raises(FormatError, match=needle):
        latents_from_bytes(mutate(good))


def test_trailing_garbage_without_side_chunk():
    good = latents_to_bytes(LatentTensor(np.zeros((1, 1, 2), np.int64)))
    with pytest.raises(FormatError, match="expected SIDE"):
        latents_from_bytes(good + b"abcd")


def test_non_positive_scale_reports_offset():
    t = LatentTensor(np.zeros((1, 1, 3), np.int64))
    data = bytearray(latents_to_bytes(t, SideInfo(np.zeros(3), np.ones(3))))
    off = len(data) - 4  # last scale
    data[off:] = struct.pack("<f", 0.0)
    with pytest.raises(FormatError, match="non-positive scale") as err:
        latents_from_bytes(bytes(data))
    assert err.value.offset == off


def test_mismatched_side_rejected_before_write(tmp_path):
    p = tmp_path / "x.latb"
    with pytest.raises(ValueError, match="side-info length mismatch"):
        save_latents(LatentTensor(np.zeros((1, 1, 4), np.int64)), SideInfo(np.zeros(3), np.ones(3)), p)
    assert not p.exists()


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(np.int32, hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=5)),
    st.booleans(),
    st.sampled_from(["main", "side"]),
)
def test_round_trip(symbols, with_side, role):
    t = LatentTensor(symbols, role=role)
    side = None
    if with_side:
        rng = np.random.default_rng(symbols.size)
        side = SideInfo(rng.normal(size=t.size), rng.uniform(0.01, 50, t.size))
    data = latents_to_bytes(t, side)
    t2, side2 = latents_from_bytes(data)
    assert t2 == t and t2.role == role
    assert (side2 is None) == (side is None)
    if side is not None:
        assert side2 == side
    assert latents_to_bytes(t2, side2) == data


def test_two_saves_are_byte_identical(tmp_path):
    t, side, _ = synthesize(SynthSpec(3, (4, 5, 3), Dist("laplacian", 1.0), Dist("gaussian", 2.0)))
    save_latents(t, side, tmp_path / "a")
    save_latents(t, side, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    t2, side2 = load_latents(tmp_path / "a")
    assert t2 == t and side2 == side


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away(np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.4])), [-3, -2, -1, 1, 2, 2])


def test_synthesize_deterministic():
    spec = SynthSpec(7, (16, 16, 8), Dist("gaussian", 1.3), Dist("gaussian", 2.0))
    a, sa, _ = synthesize(spec)
    b, sb, _ = synthesize(spec)
    assert a == b and sa == sb
    c, _, _ = synthesize(SynthSpec(8, (16, 16, 8), Dist("gaussian", 1.3), Dist("gaussian", 2.0)))
    assert not c == a


def test_synthesize_respects_learned_support_and_side_info():
    learned = Dist("mixture", 1.0, -1.0, 0.3, 2.0, 2.0)
    t, side, dists = synthesize(SynthSpec(1, (20, 20, 2), Dist("laplacian", 4.0), learned, mean_offset=0.7))
    lo, hi = learned_support(learned)
    assert t.symbols.min() >= lo and t.symbols.max() <= hi
    np.testing.assert_allclose(side.means, np.float32(learned.mean))
    np.testing.assert_allclose(side.scales, np.float32(learned.std))


@pytest.mark.parametrize("bad", [Dist("gaussian", 1.0), None])
def test_synth_spec_validation(bad):
    with pytest.raises(ValueError):
        if bad is None:
            Dist("gaussian", -1.0)
        SynthSpec(0, (2, 2, 3), (bad, bad), Dist("gaussian", 1.0))


def _disc_gauss(sigma, lo, hi):
    x = np.arange(lo, hi + 1, dtype=np.float64)
    p = normal_cdf((x + 0.5) / sigma) - normal_cdf((x - 0.5) / sigma)
    p[0] += normal_cdf(np.array([(lo - 0.5) / sigma]))[0]
    p[-1] += 1 - normal_cdf(np.array([(hi + 0.5) / sigma]))[0]
    return p


def _gap_per_symbol(true, learned, n=1_000_000):
    t, _, dists = synthesize(SynthSpec(11, (n // 1000, 1000, 1), true, learned))
    g = gap_bits(SymbolStream.factorized(t), factorized_tables(dists))
    return g.gap_total / n, g.learned_total


def test_mismatch_gap_matches_analytic_kl():
    learned = Dist("gaussian", 2.0)
    (table,) = factorized_tables([learned])
    p = _disc_gauss(1.3, table.support_min, table.support_max)
    kl = float(np.sum(p * np.log2(p / table.probs)))
    per_symbol, _ = _gap_per_symbol(Dist("gaussian", 1.3), learned)
    assert abs(per_symbol / kl - 1) < 0.05


def test_matched_prior_gap_vanishes():
    d = Dist("gaussian", 2.0)
    per_symbol, learned_total = _gap_per_symbol(d, d)
    assert 100 * per_symbol * 1_000_000 / learned_total < 0.1
