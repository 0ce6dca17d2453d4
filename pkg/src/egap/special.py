"""Gaussian cdf built on a fixed erf/erfc evaluation.

Encoder and decoder must derive identical pmf tables, so the error function
is evaluated by one documented procedure instead of whatever libm provides:

* ``|x| < 3``: the non-alternating series
  ``erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (2n+1)!!``,
  summed for a fixed 64 terms (all positive, no cancellation).
* ``|x| >= 3``: the Laplace continued fraction for ``erfc``, evaluated
  bottom-up from a fixed depth of 48.

Absolute error is below 1e-15 over the real line.
"""

import numpy as np

_SERIES_TERMS = 64
_CF_DEPTH = 48
_SWITCH = 3.0
_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)
_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _erf_series(x):
    x2 = x * x
    term = x.copy()
    total = x.copy()
    for n in range(1, _SERIES_TERMS):
        term = term * (2.0 * x2) / (2 * n + 1)
        total = total + term
    return _TWO_OVER_SQRT_PI * np.exp(-x2) * total


def _erfc_cf(x):
    # erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))
    tail = x.copy()
    for k in range(_CF_DEPTH, 0, -1):
        tail = x + (0.5 * k) / tail
    return _INV_SQRT_PI * np.exp(-x * x) / tail


def erfc(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < _SWITCH
    if np.any(small):
        out[small] = 1.0 - _erf_series(ax[small])
    if np.any(~small):
        out[~small] = _erfc_cf(ax[~small])
    return np.where(x < 0, 2.0 - out, out)


def erf(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < _SWITCH
    if np.any(small):
        out[small] = _erf_series(ax[small])
    if np.any(~small):
        out[~small] = 1.0 - _erfc_cf(ax[~small])
    return np.copysign(out, x)


def normal_cdf(x):
    """Standard normal cdf."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) * _INV_SQRT2)


def normal_sf(x):
    """Standard normal upper tail ``1 - cdf(x)``, accurate far into the tail."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) * _INV_SQRT2)
