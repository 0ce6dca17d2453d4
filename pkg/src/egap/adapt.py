"""Instance-adaptive replacement pmfs and the per-table selection pass.

Three re-parameterizations of a learned table are supported:

* ``gmm``: a K-component Gaussian mixture whose density is evaluated at the
  integer symbols and renormalized over the table support;
* ``zero-mean-gaussian``: the same with K = 1 and the mean pinned at 0;
* ``center-bin``: move probability between the zero bin and all other bins,
  scaling the non-zero bins proportionally.

Parameters travel as b-bit indices into shared grids, and a table is only
replaced when the saving, evaluated with the dequantized parameters, beats
the parameter cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from egap.entropy import P_FLOOR, PmfTable, apply_floor, table_bits
from egap.gap import optimal_bits
from egap.rangecoder import DEFAULT_PRECISION, FreqTable, quantize_pmf

SIGMA_MIN = 0.002
SIGMA_MAX = 20.0
BETA_MIN = Fraction(-3, 100)
BETA_MAX = Fraction(3, 100)
METHODS = ("none", "gmm", "zero-mean-gaussian", "center-bin")

_LOG_SIGMA_MIN = math.log(SIGMA_MIN)
_LOG_SIGMA_MAX = math.log(SIGMA_MAX)


def _nearest(pos, levels):
    # nearest grid index, exact halves resolve to the lower index
    return np.clip(np.ceil(np.asarray(pos, dtype=np.float64) - 0.5), 0, levels - 1).astype(np.int64)


class QuantGrids:
    """Shared b-bit grids: log-spaced sigma, uniform weight, mean and center-bin beta."""

    def __init__(self, bits=8):
        if not 1 <= bits <= 16:
            raise ValueError("bit depth must be in [1, 16]")
        self.bits = bits
        self.levels = 1 << bits

    def __repr__(self):
        return f"QuantGrids(bits={self.bits})"

    @property
    def _span(self):
        return max(self.levels - 1, 1)

    def quantize_sigma(self, sigma):
        sigma = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
        pos = (np.log(sigma) - _LOG_SIGMA_MIN) / (_LOG_SIGMA_MAX - _LOG_SIGMA_MIN) * self._span
        return _nearest(pos, self.levels)

    def dequantize_sigma(self, idx):
        idx = np.asarray(idx, dtype=np.float64)
        return np.exp(_LOG_SIGMA_MIN + idx * (_LOG_SIGMA_MAX - _LOG_SIGMA_MIN) / self._span)

    def sigma_grid(self):
        return self.dequantize_sigma(np.arange(self.levels))

    def _uniform_index(self, v, lo, hi):
        v = np.clip(np.asarray(v, dtype=np.float64), lo, hi)
        if hi == lo:
            return np.zeros(v.shape, dtype=np.int64)
        return _nearest((v - lo) / (hi - lo) * self._span, self.levels)

    def _uniform_value(self, idx, lo, hi):
        return lo + np.asarray(idx, dtype=np.float64) * ((hi - lo) / self._span)

    def quantize_weight(self, w):
        return self._uniform_index(w, 0.0, 1.0)

    def dequantize_weight(self, idx):
        return self._uniform_value(idx, 0.0, 1.0)

    def quantize_mean(self, mu, support_min, support_max):
        return self._uniform_index(mu, float(support_min), float(support_max))

    def dequantize_mean(self, idx, support_min, support_max):
        return self._uniform_value(idx, float(support_min), float(support_max))

    def quantize_beta(self, beta):
        return self._uniform_index(beta, float(BETA_MIN), float(BETA_MAX))

    def beta_fraction(self, idx):
        """Exact rational value of beta grid point ``idx``."""
        return BETA_MIN + (BETA_MAX - BETA_MIN) * int(idx) / self._span

    def dequantize_beta(self, idx):
        return float(self.beta_fraction(idx))


# -- truncated Gaussian mixture ----------------------------------------------


@dataclass(frozen=True, eq=False)
class GmmParams:
    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        mu = np.array(self.means, dtype=np.float64).reshape(-1)
        s = np.array(self.sigmas, dtype=np.float64).reshape(-1)
        if not (w.size == mu.size == s.size >= 1):
            raise ValueError("need K >= 1 components with matching parameter lengths")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be >= 0 and sum to 1")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(s) & (s > 0)):
            raise ValueError("means must be finite and sigmas > 0")
        for name, arr in (("weights", w), ("means", mu), ("sigmas", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self):
        return self.weights.size

    @classmethod
    def single(cls, sigma, mean=0.0):
        return cls([1.0], [mean], [sigma])

    def as_tuple(self):
        return self.weights, self.means, self.sigmas


def _log_mixture(x, w, mu, s):
    """log of sum_k w_k N(x; mu_k, s_k), shape (len(x),)."""
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    z = (x[None, :] - mu[:, None]) / s[:, None]
    logc = logw[:, None] - np.log(s)[:, None] - 0.5 * z * z - 0.5 * math.log(2 * math.pi)
    m = np.max(logc, axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    return safe + np.log(np.sum(np.exp(logc - safe), axis=0)), logc


def _log_pmf(x, w, mu, s):
    lm, logc = _log_mixture(x, w, mu, s)
    top = np.max(lm)
    if not np.isfinite(top):
        raise ValueError("mixture has no mass on the support")
    return lm - (top + math.log(np.sum(np.exp(lm - top)))), logc


def truncated_gmm_pmf(params, support_min, support_max, model="factorized", index=0):
    """Mixture density at the integer support points, normalized over the support."""
    x = np.arange(support_min, support_max + 1, dtype=np.float64)
    logp, _ = _log_pmf(x, *params.as_tuple())
    probs = np.exp(logp)
    if not probs.sum() > 0:
        raise ValueError("total mass underflow")
    return PmfTable(support_min, support_max, apply_floor(probs), model, index)


def truncated_loglik(hist, support_min, params):
    """``sum_x hist(x) log p(x)`` under the unfloored truncated mixture."""
    hist = np.asarray(hist, dtype=np.float64)
    x = np.arange(support_min, support_min + hist.size, dtype=np.float64)
    return _objective(hist, x, *params.as_tuple())


def _objective(hist, x, w, mu, s):
    logp, _ = _log_pmf(x, w, mu, s)
    used = hist > 0
    return float(np.dot(hist[used], logp[used]))


def _clamp(w, mu, s, lo, hi):
    return w / w.sum(), np.clip(mu, lo, hi), np.clip(s, SIGMA_MIN, SIGMA_MAX)


def run_em(hist, support_min, init, max_iter=200, tol=1e-7, max_halvings=10):
    """Histogram-weighted EM on the truncated mixture.

    Each M-step is closed form. If it lowers the truncated objective the step
    is shortened towards the previous parameters (halving up to
    ``max_halvings`` times) and EM stops when that fails too. Returns the final
    parameters and the objective after every accepted iteration, which is
    non-decreasing by construction.
    """
    hist = np.asarray(hist, dtype=np.float64)
    n = hist.sum()
    if not n > 0:
        raise ValueError("empty histogram")
    x = np.arange(support_min, support_min + hist.size, dtype=np.float64)
    lo, hi = float(x[0]), float(x[-1])
    w, mu, s = _clamp(*(np.array(a, dtype=np.float64) for a in init.as_tuple()), lo, hi)
    obj = _objective(hist, x, w, mu, s)
    trace = [obj]
    for _ in range(max_iter):
        _, logc = _log_mixture(x, w, mu, s)
        m = np.max(logc, axis=0)
        m = np.where(np.isfinite(m), m, 0.0)
        r = np.exp(logc - m)
        r /= np.maximum(r.sum(axis=0), 1e-300)
        rh = r * hist
        nk = rh.sum(axis=1)
        live = nk > 0
        w_new = nk / n
        mu_new = mu.copy()
        s_new = s.copy()
        mu_new[live] = (rh[live] @ x) / nk[live]
        var = np.einsum("kx,kx->k", rh[live], (x[None, :] - mu_new[live, None]) ** 2) / nk[live]
        s_new[live] = np.sqrt(var)
        w_new, mu_new, s_new = _clamp(w_new, mu_new, s_new, lo, hi)

        step = 1.0
        cand = (w_new, mu_new, s_new)
        cand_obj = _objective(hist, x, *cand)
        halvings = 0
        while cand_obj < obj and halvings < max_halvings:
            step *= 0.5
            halvings += 1
            cand = tuple(old + step * (new - old) for old, new in zip((w, mu, s), (w_new, mu_new, s_new)))
            cand = _clamp(*cand, lo, hi)
            cand_obj = _objective(hist, x, *cand)
        if cand_obj < obj:
            break
        gain = (cand_obj - obj) / n
        w, mu, s = cand
        obj = cand_obj
        trace.append(obj)
        if gain < tol:
            break
    return GmmParams(w, mu, s), trace


def _weighted_moments(x, h):
    m = np.dot(h, x) / h.sum()
    sd = math.sqrt(max(np.dot(h, (x - m) ** 2) / h.sum(), 0.0))
    return m, sd


def _quantile_init(hist, support_min, K):
    hist = np.asarray(hist, dtype=np.float64)
    x = np.arange(support_min, support_min + hist.size, dtype=np.float64)
    occupied = np.flatnonzero(hist > 0)
    n = hist.sum()
    mid = np.cumsum(hist) - hist / 2
    seg = np.minimum((K * mid / n).astype(np.int64), K - 1)[occupied]
    groups = [occupied[seg == k] for k in range(K)]
    if any(g.size == 0 for g in groups):
        groups = np.array_split(occupied, K)
    w, mu, s = [], [], []
    for g in groups:
        m, sd = _weighted_moments(x[g], hist[g])
        w.append(hist[g].sum() / n)
        mu.append(m)
        s.append(max(sd, SIGMA_MIN))
    return GmmParams(np.array(w) / sum(w), mu, s)


def _pad(params, K, support_min):
    extra = K - params.K
    return GmmParams(
        np.concatenate([params.weights, np.zeros(extra)]),
        np.concatenate([params.means, np.full(extra, float(support_min))]),
        np.concatenate([params.sigmas, np.full(extra, SIGMA_MIN)]),
    )


def _seed_from(prev, hist, support_min):
    """Add a component at the bin the (K-1)-solution explains worst."""
    hist = np.asarray(hist, dtype=np.float64)
    x = np.arange(support_min, support_min + hist.size, dtype=np.float64)
    logp, _ = _log_pmf(x, *prev.as_tuple())
    resid = hist / hist.sum() - np.exp(logp)
    j = int(np.argmax(resid))
    new_w = float(min(max(resid[j], 0.05), 0.5))
    return GmmParams(
        np.concatenate([prev.weights * (1 - new_w), [new_w]]),
        np.concatenate([prev.means, [x[j]]]),
        np.concatenate([prev.sigmas, [1.0]]),
    )


def fit_gmm(hist, support_min, K, max_iter=200):
    """Fit a K-component truncated mixture to ``hist`` (aligned to ``support_min``).

    Starts from a quantile split of the histogram and, for K > 1, from the
    (K-1)-solution plus one component; the best local optimum wins. The
    (K-1)-solution itself, padded with a zero-weight component, is always a
    candidate, so adding components never lowers the objective. With fewer
    occupied bins than K the surplus components get zero weight.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if hist.sum() <= 0:
        raise ValueError("empty histogram")
    if K < 1:
        raise ValueError("K must be >= 1")
    occupied = int(np.count_nonzero(hist))
    if K > occupied:
        return _pad(fit_gmm(hist, support_min, occupied, max_iter), K, support_min)

    best, best_obj = None, -math.inf
    starts = [_quantile_init(hist, support_min, K)]
    if K > 1:
        prev = fit_gmm(hist, support_min, K - 1, max_iter)
        padded = _pad(prev, K, support_min)
        best, best_obj = padded, truncated_loglik(hist, support_min, padded)
        starts.append(_seed_from(prev, hist, support_min))
    for init in starts:
        params, trace = run_em(hist, support_min, init, max_iter=max_iter)
        if trace[-1] > best_obj:
            best, best_obj = params, trace[-1]
    return best


def _zero_mean_objective(hist, x, sigmas):
    # log p(x; s) = -x^2 / 2s^2 - log sum_z exp(-z^2 / 2s^2); the 1/s factor cancels
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=np.float64))
    q = -0.5 * (x[None, :] / sigmas[:, None]) ** 2
    top = q.max(axis=1, keepdims=True)
    log_z = top[:, 0] + np.log(np.exp(q - top).sum(axis=1))
    used = hist > 0
    return q[:, used] @ hist[used] - hist.sum() * log_z


def fit_zero_mean_gaussian(hist, support_min, grids=None, iters=80):
    """Best zero-mean truncated Gaussian scale for ``hist``.

    Scans the sigma grid, then golden-section searches log-sigma between the
    neighbours of the best grid point.
    """
    grids = grids or QuantGrids()
    hist = np.asarray(hist, dtype=np.float64)
    if hist.sum() <= 0:
        raise ValueError("empty histogram")
    x = np.arange(support_min, support_min + hist.size, dtype=np.float64)
    grid = grids.sigma_grid()
    scores = _zero_mean_objective(hist, x, grid)
    i = int(np.argmax(scores))
    a = math.log(grid[max(i - 1, 0)])
    b = math.log(grid[min(i + 1, grid.size - 1)])
    f = lambda t: float(_zero_mean_objective(hist, x, math.exp(t))[0])
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    t = (a + b) / 2
    sigma = math.exp(t) if f(t) >= scores[i] else grid[i]
    return GmmParams.single(float(np.clip(sigma, SIGMA_MIN, SIGMA_MAX)))


# -- center-bin difference ---------------------------------------------------


@dataclass(frozen=True)
class CenterBinParam:
    beta: float
    quantized_index: int
    dequantized: float


def center_bin_pmf(learned, beta):
    """Shift ``beta`` of mass out of the zero bin, spreading it proportionally.

    Bins the proportional shrink pushes under the pmf floor are lifted back
    onto it (water-filling over the rest), so tables with floored tails stay valid.
    """
    p0 = learned.center
    c = -learned.support_min
    if learned.size == 1:
        if beta != 0:
            raise ValueError("single-bin table admits only beta = 0")
        return learned
    new0 = p0 - beta
    if new0 < P_FLOOR:
        raise ValueError(f"beta {beta} drives the center probability below the floor")
    probs = learned.probs * (1.0 + beta / (1.0 - p0))
    probs[c] = new0
    if probs.min() < P_FLOOR:
        probs = apply_floor(probs)
    return PmfTable(learned.support_min, learned.support_max, probs, learned.model, learned.index)


def compute_center_beta(learned, hist, grids=None):
    """Learned center probability minus the observed one, clamped and quantized."""
    grids = grids or QuantGrids()
    hist = np.asarray(hist, dtype=np.float64)
    n = hist.sum()
    if not n > 0:
        raise ValueError("empty histogram")
    beta = learned.center - hist[-learned.support_min] / n
    beta = float(np.clip(beta, float(BETA_MIN), float(BETA_MAX)))
    idx = int(grids.quantize_beta(beta))
    return CenterBinParam(beta, idx, grids.dequantize_beta(idx))


def _round_half_away(fr):
    sign = -1 if fr < 0 else 1
    return sign * math.floor(abs(fr) + Fraction(1, 2))


def rebuild_center_bin_freqs(learned, beta_index, grids=None):
    """Integer-only center-bin adjustment of a learned frequency table.

    ``D = round(beta * total)`` (halves away from zero, exact rational beta),
    then :func:`shift_center_freqs`.
    """
    grids = grids or QuantGrids()
    return shift_center_freqs(learned, _round_half_away(grids.beta_fraction(beta_index) * learned.total))


def shift_center_freqs(learned, d):
    """Move ``d`` frequency units out of the zero bin.

    The center gets ``F(0) - d`` and every other bin
    ``floor(F(x) * (total - F~(0)) / (total - F(0)))``, at least 1, with the
    leftover units handed out by largest remainder (ties to the lower symbol).
    When the at-least-1 clamps overshoot, units come back from the bins with
    the smallest remainders.
    """
    total = learned.total
    c = learned.center_index()
    f = [int(v) for v in learned.freqs]
    f0 = f[c] - int(d)
    if f0 < 1:
        raise ValueError(f"center frequency {f[c]} - {d} drops below 1")
    if len(f) == 1:
        if d != 0:
            raise ValueError("single-bin table admits only beta = 0")
        return learned
    old_rest = total - f[c]
    new_rest = total - f0
    if new_rest < len(f) - 1:
        raise ValueError("not enough frequency left for the non-center bins")
    others = [i for i in range(len(f)) if i != c]
    quot = [max(1, f[i] * new_rest // old_rest) for i in others]
    rem = [f[i] * new_rest % old_rest for i in others]
    residual = new_rest - sum(quot)
    if residual > 0:
        for j in sorted(range(len(others)), key=lambda j: (-rem[j], j))[:residual]:
            quot[j] += 1
    while residual < 0:
        # bins clamped up to 1 are paid for by the smallest remainders
        spare = sorted((j for j in range(len(others)) if quot[j] > 1), key=lambda j: (rem[j], j))
        for j in spare[:-residual]:
            quot[j] -= 1
            residual += 1
    out = list(f)
    out[c] = f0
    for j, i in enumerate(others):
        out[i] = quot[j]
    return FreqTable(learned.support_min, learned.support_max, out, learned.precision)


# -- parameter transport -----------------------------------------------------


def param_count(method, K=1):
    if method == "gmm":
        return 3 * K
    if method in ("zero-mean-gaussian", "center-bin"):
        return 1
    return 0


def param_bits(method, K, bits):
    return param_count(method, K) * bits


def quantize_gmm(params, grids, support_min, support_max):
    """Grid indices ``[w_1, mu_1, s_1, w_2, ...]`` for a mixture."""
    wi = grids.quantize_weight(params.weights)
    mi = grids.quantize_mean(params.means, support_min, support_max)
    si = grids.quantize_sigma(params.sigmas)
    return np.stack([wi, mi, si], axis=1).reshape(-1)


def dequantize_gmm(indices, grids, support_min, support_max):
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    w = grids.dequantize_weight(idx[:, 0])
    if not w.sum() > 0:
        raise ValueError("all mixture weights quantized to zero")
    return GmmParams(
        w / w.sum(),
        grids.dequantize_mean(idx[:, 1], support_min, support_max),
        grids.dequantize_sigma(idx[:, 2]),
    )


def quantize_params(method, params, grids, support_min=0, support_max=0):
    """Quantize method parameters; returns ``(indices, dequantized)``."""
    if method == "gmm":
        idx = quantize_gmm(params, grids, support_min, support_max)
        return idx, dequantize_gmm(idx, grids, support_min, support_max)
    if method == "zero-mean-gaussian":
        idx = grids.quantize_sigma(params.sigmas[:1])
        return idx, GmmParams.single(float(grids.dequantize_sigma(idx[0])))
    if method == "center-bin":
        beta = params.beta if isinstance(params, CenterBinParam) else float(params)
        idx = np.array([grids.quantize_beta(beta)], dtype=np.int64)
        return idx, grids.dequantize_beta(idx[0])
    raise ValueError(f"method {method!r} has no parameters")


def adapted_pmf(method, indices, learned, grids):
    """The replacement pmf a decoder rebuilds from ``indices``."""
    lo, hi = learned.support_min, learned.support_max
    if method == "gmm":
        return truncated_gmm_pmf(dequantize_gmm(indices, grids, lo, hi), lo, hi, learned.model, learned.index)
    if method == "zero-mean-gaussian":
        sigma = float(grids.dequantize_sigma(indices[0]))
        return truncated_gmm_pmf(GmmParams.single(sigma), lo, hi, learned.model, learned.index)
    if method == "center-bin":
        return center_bin_pmf(learned, grids.dequantize_beta(indices[0]))
    raise ValueError(f"unknown method {method!r}")


def adapted_freqs(method, indices, learned, learned_freqs, grids, precision=DEFAULT_PRECISION):
    """The replacement frequency table, identical on encoder and decoder."""
    if method == "center-bin":
        return rebuild_center_bin_freqs(learned_freqs, indices[0], grids)
    return quantize_pmf(adapted_pmf(method, indices, learned, grids), precision)


# -- selection ---------------------------------------------------------------


@dataclass(frozen=True)
class AdaptationConfig:
    method: str = "none"
    K: int = 1
    T: int = 0
    bits: int = 8
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "gmm" and not 1 <= self.K <= 3:
            raise ValueError("K must be 1, 2 or 3")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.method == "none" and self.T:
            object.__setattr__(self, "T", 0)
        QuantGrids(self.bits)

    @property
    def grids(self):
        return QuantGrids(self.bits)

    @property
    def bits_per_table(self):
        return param_bits(self.method, self.K, self.bits)


@dataclass(frozen=True)
class TableChoice:
    table: int
    selected: bool
    indices: tuple
    learned_bits: float
    adapted_bits: float
    optimal_bits: float
    param_bits: int


@dataclass(frozen=True)
class AdaptationRecord:
    config: AdaptationConfig
    choices: tuple = field(default_factory=tuple)

    @property
    def targeted(self):
        return [c.table for c in self.choices]

    @property
    def flags(self):
        return [c.selected for c in self.choices]

    @property
    def signal_bits(self):
        return len(self.choices)

    @property
    def param_bits(self):
        return sum(c.param_bits for c in self.choices)

    @property
    def saved_bits(self):
        """Data bits saved by the replaced tables, before overheads."""
        return math.fsum(c.learned_bits - c.adapted_bits for c in self.choices)

    def selected(self):
        return [c for c in self.choices if c.selected]

    def pmf_tables(self, learned):
        out = list(learned)
        for c in self.selected():
            out[c.table] = adapted_pmf(self.config.method, c.indices, learned[c.table], self.config.grids)
        return out

    def freq_tables(self, learned, learned_freqs=None):
        cfg = self.config
        if learned_freqs is None:
            learned_freqs = [quantize_pmf(t, cfg.precision) for t in learned]
        out = list(learned_freqs)
        for c in self.selected():
            out[c.table] = adapted_freqs(
                cfg.method, c.indices, learned[c.table], learned_freqs[c.table], cfg.grids, cfg.precision
            )
        return out


def _candidate_bits(method, idx, learned, counts, grids, learned_freqs):
    try:
        pmf = adapted_pmf(method, idx, learned, grids)
        if method == "center-bin":
            rebuild_center_bin_freqs(learned_freqs, idx[0], grids)
    except ValueError:
        return math.inf
    return table_bits(counts, pmf.probs)


def _refine(method, idx, learned, counts, grids, learned_freqs):
    """One greedy pass trying -1/+1 on every grid index."""
    idx = np.array(idx, dtype=np.int64)
    best = _candidate_bits(method, idx, learned, counts, grids, learned_freqs)
    for j in range(idx.size):
        for delta in (-1, 1):
            v = idx[j] + delta
            if not 0 <= v < grids.levels:
                continue
            cand = idx.copy()
            cand[j] = v
            bits = _candidate_bits(method, cand, learned, counts, grids, learned_freqs)
            if bits < best:
                best, idx = bits, cand
    return idx, best


def fit_table(method, counts, learned, grids, K=1, learned_freqs=None, precision=DEFAULT_PRECISION):
    """Fit, quantize and refine one table; returns ``(indices, adapted_bits)``."""
    lo, hi = learned.support_min, learned.support_max
    if learned_freqs is None:
        learned_freqs = quantize_pmf(learned, precision)
    if method == "gmm":
        params = fit_gmm(counts, lo, K)
        idx, _ = quantize_params(method, params, grids, lo, hi)
    elif method == "zero-mean-gaussian":
        idx, _ = quantize_params(method, fit_zero_mean_gaussian(counts, lo, grids), grids)
    elif method == "center-bin":
        idx = np.array([compute_center_beta(learned, counts, grids).quantized_index])
    else:
        raise ValueError(f"unknown method {method!r}")
    return _refine(method, idx, learned, counts, grids, learned_freqs)


def target_tables(learned_bits, T):
    """The ``T`` tables with the largest learned-bit contribution, ties by index."""
    if T > len(learned_bits):
        raise ValueError(f"T={T} exceeds the {len(learned_bits)} available tables")
    order = sorted(range(len(learned_bits)), key=lambda t: (-learned_bits[t], t))
    return order[:T]


def select_tables(counts, learned, config):
    """Decide, table by table, whether a re-parameterized pmf pays for itself.

    ``counts`` are per-table histograms aligned to ``learned``. A targeted
    table is replaced iff learned bits minus adapted bits (dequantized
    parameters) exceeds the parameter cost.
    """
    if len(counts) != len(learned):
        raise ValueError("need one histogram per learned table")
    if config.method == "none":
        return AdaptationRecord(config, ())
    grids = config.grids
    learned_bits = [table_bits(c, t.probs) for c, t in zip(counts, learned)]
    cost = config.bits_per_table
    choices = []
    for t in target_tables(learned_bits, config.T):
        c = np.asarray(counts[t])
        lb = learned_bits[t]
        ob = optimal_bits(c)
        if c.sum() == 0 or learned[t].size == 1:
            choices.append(TableChoice(t, False, (), lb, lb, ob, 0))
            continue
        idx, ab = fit_table(config.method, c, learned[t], grids, config.K, precision=config.precision)
        if lb - ab - cost > 0:
            choices.append(TableChoice(t, True, tuple(int(i) for i in idx), lb, ab, ob, cost))
        else:
            choices.append(TableChoice(t, False, (), lb, lb, ob, 0))
    return AdaptationRecord(config, tuple(choices))
