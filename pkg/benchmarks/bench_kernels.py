"""Time the numba range-coder and tally kernels against their interpreted fallbacks.

    python benchmarks/bench_kernels.py --n 200000 --tables 64

Both paths must produce identical bytes and counts; the script exits non-zero
if they do not. Set EGAP_DISABLE_NUMBA=1 to see the fallback everywhere else.
"""

import argparse
import sys
import time

import numpy as np

from egap import kernels
from egap._jit import NUMBA_ENABLED
from egap.entropy import ScaleTable, SymbolStream, table_layout
from egap.rangecoder import _flatten, quantize_pmf


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def make_stream(n, n_tables, seed):
    rng = np.random.default_rng(seed)
    scales = ScaleTable.log_spaced(n_tables, 0.5, 12.0)
    tables = scales.tables()
    assignment = rng.integers(0, n_tables, n)
    sigma = scales.scales[assignment]
    symbols = np.rint(rng.normal(0.0, sigma)).astype(np.int64)
    sym_min, sizes, _ = table_layout(tables)
    lo = sym_min[assignment]
    symbols = np.clip(symbols, lo, lo + sizes[assignment] - 1)
    return SymbolStream(symbols, assignment), tables


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--tables", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    stream, tables = make_stream(args.n, args.tables, args.seed)
    freqs = [quantize_pmf(t) for t in tables]
    cdf_flat, cdf_base, sizes, sym_min, prec = _flatten(freqs)
    sym, asg = stream.symbols, stream.assignment
    _, tally_sizes, tally_base = table_layout(tables)
    n_bins = int(tally_sizes.sum())

    enc_args = (sym, asg, cdf_flat, cdf_base, sizes, sym_min, prec)
    kernels.range_encode(*enc_args)  # compile / load cache
    t_fast, (buf, nb, _) = best_of(lambda: kernels.range_encode(*enc_args), args.repeat)
    t_slow, (buf_py, nb_py, _) = best_of(lambda: kernels.range_encode_py(*enc_args), 1)
    data = np.asarray(buf[:nb], dtype=np.uint8)
    same_enc = nb == nb_py and bytes(data) == bytes(np.asarray(buf_py[:nb_py], dtype=np.uint8))

    dec_args = (data, nb, asg, cdf_flat, cdf_base, sizes, sym_min, prec, sym.size)
    kernels.range_decode(*dec_args)
    d_fast, (out, _, st) = best_of(lambda: kernels.range_decode(*dec_args), args.repeat)
    d_slow, (out_py, _, st_py) = best_of(lambda: kernels.range_decode_py(*dec_args), 1)
    same_dec = st == st_py == 0 and np.array_equal(out, sym) and np.array_equal(np.asarray(out_py), sym)

    tally_args = (sym, asg, tally_base, tally_sizes, sym_min, n_bins)
    kernels.tally(*tally_args)
    c_fast, (cnt, _) = best_of(lambda: kernels.tally(*tally_args), args.repeat)
    c_slow, (cnt_py, _) = best_of(lambda: kernels.tally_py(*tally_args), args.repeat)
    same_tally = np.array_equal(np.asarray(cnt), np.asarray(cnt_py))

    label = "numba" if NUMBA_ENABLED else "fallback"
    print(f"n={args.n} tables={args.tables} payload={nb} bytes  accelerated path: {label}")
    print(f"{'kernel':<10}{'accelerated s':>15}{'fallback s':>13}{'speedup':>10}  identical")
    for name, fast, slow, same in (
        ("encode", t_fast, t_slow, same_enc),
        ("decode", d_fast, d_slow, same_dec),
        ("tally", c_fast, c_slow, same_tally),
    ):
        print(f"{name:<10}{fast:>15.4f}{slow:>13.4f}{slow / max(fast, 1e-9):>10.1f}  {same}")
    return 0 if same_enc and same_dec and same_tally else 1


if __name__ == "__main__":
    sys.exit(main())
