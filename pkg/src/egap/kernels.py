"""Hot loops: range coder state machines and the per-table symbol tally.

Every kernel takes flat int64 arrays so the same body compiles under numba
and runs unchanged in the interpreter. Tables are concatenated cumulative
frequency arrays: table ``t`` occupies ``cdf_flat[cdf_base[t]:cdf_base[t] +
sizes[t] + 1]`` and starts at 0, ends at ``1 << precision``.
"""

import numpy as np

from egap._jit import NUMBA_ENABLED, interpreted, kernel

# Range is kept in [TOP, 2**32) between symbols.
TOP = 1 << 24
MASK32 = 0xFFFFFFFF

STATUS_OK = 0
STATUS_EXHAUSTED = 1
STATUS_CORRUPT = 2


def _range_encode(symbols, assignment, cdf_flat, cdf_base, sizes, sym_min, precision):
    n = len(symbols)
    out = np.zeros(2 * n + 16, dtype=np.uint8)
    pos = 0
    low = 0
    rng = MASK32
    cache = 0
    cache_size = 1
    dropped = False
    for i in range(n + 1):
        if i < n:
            t = assignment[i]
            k = symbols[i] - sym_min[t]
            if k < 0 or k >= sizes[t]:
                return out, 0, i
            j = cdf_base[t] + k
            a = (rng * cdf_flat[j]) >> precision
            b = (rng * cdf_flat[j + 1]) >> precision
            low += a
            rng = b - a
            shifts = 0
            while rng < TOP:
                rng <<= 8
                shifts += 1
        else:
            shifts = 5
        for _ in range(shifts):
            if (low & MASK32) < 0xFF000000 or (low >> 32) != 0:
                carry = low >> 32
                temp = cache
                while True:
                    # the very first byte is a carry slot that can never be set
                    if dropped:
                        out[pos] = (temp + carry) & 0xFF
                        pos += 1
                    else:
                        dropped = True
                    temp = 0xFF
                    cache_size -= 1
                    if cache_size == 0:
                        break
                cache = (low & MASK32) >> 24
            cache_size += 1
            low = (low << 8) & MASK32
    return out, pos, -1


def _range_decode(data, n_bytes, assignment, cdf_flat, cdf_base, sizes, sym_min, precision, n):
    out = np.zeros(n, dtype=np.int64)
    if n_bytes < 4:
        return out, 0, STATUS_EXHAUSTED
    code = 0
    for p in range(4):
        code = (code << 8) | data[p]
    pos = 4
    rng = MASK32
    for i in range(n):
        if code >= rng:
            return out, pos, STATUS_CORRUPT
        t = assignment[i]
        base = cdf_base[t]
        q = (((code + 1) << precision) - 1) // rng
        # largest k with cdf[k] <= q
        lo = 0
        hi = sizes[t]
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cdf_flat[base + mid] <= q:
                lo = mid
            else:
                hi = mid
        a = (rng * cdf_flat[base + lo]) >> precision
        b = (rng * cdf_flat[base + lo + 1]) >> precision
        out[i] = lo + sym_min[t]
        code -= a
        rng = b - a
        while rng < TOP:
            if pos >= n_bytes:
                return out, pos, STATUS_EXHAUSTED
            rng <<= 8
            code = (code << 8) | data[pos]
            pos += 1
    return out, pos, STATUS_OK


def _tally_loop(symbols, assignment, bin_base, sizes, sym_min, n_bins):
    counts = np.zeros(n_bins, dtype=np.int64)
    for i in range(len(symbols)):
        t = assignment[i]
        k = symbols[i] - sym_min[t]
        if k < 0 or k >= sizes[t]:
            return counts, i
        counts[bin_base[t] + k] += 1
    return counts, -1


def _tally_numpy(symbols, assignment, bin_base, sizes, sym_min, n_bins):
    symbols = np.asarray(symbols, dtype=np.int64)
    assignment = np.asarray(assignment, dtype=np.int64)
    k = symbols - sym_min[assignment]
    bad = np.flatnonzero((k < 0) | (k >= sizes[assignment]))
    if bad.size:
        return np.zeros(n_bins, dtype=np.int64), int(bad[0])
    counts = np.bincount(bin_base[assignment] + k, minlength=n_bins).astype(np.int64)
    return counts, -1


range_encode = kernel(_range_encode)
range_decode = kernel(_range_decode)
tally = kernel(_tally_loop) if NUMBA_ENABLED else _tally_numpy

# Reference paths, always interpreted; used by tests and the kernel benchmark.
range_encode_py = interpreted(_range_encode)
range_decode_py = interpreted(_range_decode)
tally_py = _tally_numpy
