import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egap.entropy import (
    P_FLOOR,
    PmfTable,
    ScaleTable,
    SymbolStream,
    apply_floor,
    assign_scales,
    count_symbols,
    discretized_gaussian_pmf,
    gaussian_support,
    ideal_bits,
    pmf_from_cdf,
    tables_from_bytes,
    tables_to_bytes,
)
from egap.errors import FormatError, SupportError
from egap.latents import LatentTensor, SideInfo
from egap.special import normal_cdf

PHI_CENTER = 0.38292492254802624  # Phi(0.5) - Phi(-0.5), from mpmath


def test_linear_cdf_gives_uniform():
    t = pmf_from_cdf(lambda x: (x + 1.5) / 3.0, -1, 1)
    np.testing.assert_allclose(t.probs, [1 / 3] * 3, atol=1e-15)


def test_gaussian_cdf_center_bin():
    t = pmf_from_cdf(normal_cdf, -4, 4)
    assert abs(t.center - PHI_CENTER) < 1e-4
    d = discretized_gaussian_pmf(1.0, -4, 4)
    assert abs(d.center - PHI_CENTER) < 1e-4


def test_constant_cdf_rejected():
    with pytest.raises(ValueError, match="zero total mass"):
        pmf_from_cdf(lambda x: np.full_like(x, 0.4), -2, 2)


def test_flat_limit_and_symmetry():
    d = discretized_gaussian_pmf(1e4, -2, 2)
    np.testing.assert_allclose(d.probs, 0.2, atol=1e-4)
    for sigma in (0.11, 0.7, 3.3, 40.0):
        lo, hi = gaussian_support(sigma)
        p = discretized_gaussian_pmf(sigma, lo, hi).probs
        assert np.array_equal(p, p[::-1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=300).filter(lambda v: sum(v) > 0))
def test_floor_invariants(raw):
    p = apply_floor(np.array(raw))
    assert abs(math.fsum(p) - 1) < 1e-9
    assert p.min() >= P_FLOOR * (1 - 1e-12)


def test_pmf_table_validation():
    with pytest.raises(ValueError, match="contain 0"):
        PmfTable(1, 3, [0.2, 0.3, 0.5])
    with pytest.raises(ValueError, match="sum"):
        PmfTable(-1, 1, [0.2, 0.3, 0.6])
    with pytest.raises(ValueError, match="floor"):
        PmfTable(-1, 1, [0.0, 0.5, 0.5])


def _linear_scan(sigmas, scales):
    out = []
    for s in np.asarray(sigmas, dtype=np.float32):
        k = next((i for i, v in enumerate(scales) if v >= s), len(scales) - 1)
        out.append(k)
    return np.array(out)


def test_assign_scales_examples():
    st_ = ScaleTable.log_spaced()
    sc = st_.scales
    mid = np.float32(np.sqrt(float(sc[9]) * float(sc[10])))
    got = assign_scales(np.array([sc[5], 0.01, mid, 1e6], dtype=np.float32), st_)
    assert got.tolist() == [5, 0, 10, 63]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 500, allow_nan=False), min_size=1, max_size=50), st.integers(2, 70))
def test_assign_scales_linear_scan_oracle(sigmas, s):
    table = ScaleTable.log_spaced(s)
    side = SideInfo(np.zeros(len(sigmas)), np.array(sigmas))
    assert np.array_equal(assign_scales(side, table), _linear_scan(side.scales, table.scales))


def test_ideal_bits_examples():
    uniform = PmfTable(-1, 1, [1 / 3] * 3)
    stream = SymbolStream(np.array([-1] + [0] * 8 + [1]), np.zeros(10, np.int64))
    assert abs(ideal_bits(stream, [uniform]) - 10 * math.log2(3)) < 1e-9
    assert abs(ideal_bits(stream, [uniform]) - 15.8496) < 1e-4
    own = PmfTable(-1, 1, [0.1, 0.8, 0.1])
    assert abs(ideal_bits(stream, [own]) - 9.2193) < 1e-4
    certain = PmfTable(0, 0, [1.0])
    assert ideal_bits(SymbolStream(np.zeros(37, np.int64), np.zeros(37, np.int64)), [certain]) == 0.0


def test_count_symbols_and_support_error():
    t = PmfTable(-1, 1, [0.25, 0.5, 0.25])
    (c,) = count_symbols(SymbolStream(np.array([0, 0, 1]), np.zeros(3, np.int64)), [t])
    assert c.tolist() == [0, 2, 1]
    (c,) = count_symbols(SymbolStream(np.zeros(0, np.int64), np.zeros(0, np.int64)), [t])
    assert c.tolist() == [0, 0, 0]
    with pytest.raises(SupportError, match="outside"):
        count_symbols(SymbolStream(np.array([0, 2]), np.zeros(2, np.int64)), [t])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_counts_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    tables = [PmfTable(-k, k, apply_floor(np.ones(2 * k + 1))) for k in rng.integers(0, 6, 4)]
    n = int(rng.integers(0, 200))
    asg = rng.integers(0, 4, n)
    sym = np.array([rng.integers(tables[a].support_min, tables[a].support_max + 1) for a in asg], dtype=np.int64)
    counts = count_symbols(SymbolStream(sym, asg), tables)
    for t in range(4):
        brute = [int(np.sum((asg == t) & (sym == v))) for v in tables[t].values]
        assert counts[t].tolist() == brute


def test_hyperprior_stream_uses_side_scales():
    st_ = ScaleTable.log_spaced(8, 0.5, 8.0)
    main = LatentTensor(np.zeros((2, 2, 1), np.int64))
    side = SideInfo(np.zeros(4), np.array([0.1, 0.5, 0.6, 100.0]))
    s = SymbolStream.hyperprior(main, side, st_)
    assert s.assignment.tolist() == [0, 0, 1, 7]


def test_pmft_round_trip_and_errors():
    tables = [discretized_gaussian_pmf(1.5, -6, 6, "factorized", i) for i in range(3)]
    data = tables_to_bytes(tables)
    assert tables_from_bytes(data) == tables
    assert tables_to_bytes(tables_from_bytes(data)) == data
    with pytest.raises(FormatError, match="trailing"):
        tables_from_bytes(data + b"\0")
    with pytest.raises(FormatError, match="truncated"):
        tables_from_bytes(data[:-3])
    with pytest.raises(FormatError, match="magic"):
        tables_from_bytes(b"NOPE" + data[4:])
