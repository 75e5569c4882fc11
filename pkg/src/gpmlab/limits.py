"""Limit-theorem diagnostics: σ², bounded-LIL and SLLN ratio scans, stable-law
tail checks and Kolmogorov–Smirnov distances.

Sum sources wrap a way of producing partial sums per replica:
:class:`OrbitSource` (deterministic orbits from ν), :class:`ChainSource`
(the preimage chain) and :class:`IIDSource` (surrogate i.i.d. streams).
"""
from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np
from scipy import stats

from . import _jit
from ._util import loglog_fit, ordered_map, replica_rng
from .simulate import (DEFAULT_BURN_IN, _map_arrays, chain_sums, orbit_sums,
                       sample_stationary)

__all__ = ["LimitReport", "SeriesDivergenceError", "SampleSizeError", "sigma2_spectral",
           "batch_means_sigma2", "orbit_batch_means_sigma2", "lil_ratio_scan",
           "slln_rate_scan", "stable_law_diagnostics", "ks_distance", "hill_estimator",
           "OrbitSource", "ChainSource", "IIDSource", "loglog2", "dyadic",
           "gaussian_ks_scaled", "tail_mass_ratio"]


class SeriesDivergenceError(RuntimeError):
    """Correlation series shows no decay."""


class SampleSizeError(ValueError):
    pass


def loglog2(n):
    """``LLx = ln(ln(x ∨ e) ∨ e)``."""
    n = np.asarray(n, dtype=float)
    return np.log(np.maximum(np.log(np.maximum(n, math.e)), math.e))


def dyadic(n_max_log2, start=1):
    return 2 ** np.arange(start, n_max_log2 + 1, dtype=np.int64)


@dataclass
class LimitReport:
    sigma2: float = float("nan")
    sigma2_tail_bound: float = float("nan")
    n: list = field(default_factory=list)
    ratios: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    hill: dict = field(default_factory=dict)
    ks: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(_jsonable(asdict(self)))

    def curves_csv(self, path, key):
        """Rows ``n, median ratio, 5% and 95% replica quantiles``."""
        arr = np.asarray(self.ratios[key])
        with open(path, "w") as fh:
            fh.write("n,ratio,q05,q95\n")
            for j, n in enumerate(self.n):
                col = arr[:, j]
                fh.write(f"{n},{float(np.median(col))!r},{float(np.quantile(col, 0.05))!r},"
                         f"{float(np.quantile(col, 0.95))!r}\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


# ------------------------------------------------------------------ σ²

def sigma2_spectral(kernel, f, k_max=4000, tol=1e-15, fit_window=None):
    """``σ² = ν(f0²) + 2 Σ_{k=1}^{k_max} ν(K^k(f0) f)`` with ``f0 = f - ν(f)``.

    ``f`` holds cell values (array or GridFunction).  The series stops early
    once ``|ν(K^k f0 f)|`` drops below ``tol``; otherwise the remainder is
    bounded from a power-law fit to the last correlations.  Returns
    ``(sigma2, tail_bound)``.
    """
    f = np.asarray(getattr(f, "values", f), dtype=float)
    nu = kernel.nu
    f0 = f - nu @ f
    c0 = float(nu @ (f0 * f0))
    # centring a constant leaves rounding residue only
    if c0 <= 1e-24 * max(float(nu @ (f * f)), 1e-300):
        return 0.0, 0.0
    g = f0
    cs = []
    for _ in range(k_max):
        g = kernel.P @ g
        c = float(nu @ (g * f))
        cs.append(c)
        if abs(c) < tol * c0:
            return c0 + 2.0 * sum(cs), 0.0
    cs = np.array(cs)
    k = np.arange(1, len(cs) + 1)
    win = fit_window or (len(cs) // 4, len(cs))
    slope, icpt, _ = loglog_fit(k[win[0]:win[1]], np.abs(cs[win[0]:win[1]]))
    if not slope < -1.0:
        raise SeriesDivergenceError(f"correlations decay like k^{slope:.2f}; series not summable")
    tail = math.exp(icpt) * k_max ** (slope + 1.0) / (-slope - 1.0)
    return c0 + 2.0 * float(cs.sum()), 2.0 * tail


def batch_means_sigma2(x, batch_len=None):
    """Batch-means long-run variance with batch length ``√n`` by default."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    b = int(batch_len or max(1, int(math.isqrt(n))))
    m = n // b
    if m < 2:
        raise SampleSizeError("need at least two batches")
    sums = x[: m * b].reshape(m, b).sum(axis=1)
    return float(np.var(sums, ddof=1) / b)


def orbit_batch_means_sigma2(tmap, density, f, n, seed):
    """Batch-means σ² from one ν-distributed orbit of length ``n`` (streamed)."""
    b = max(1, math.isqrt(n))
    m = n // b
    br, kd, pm = _map_arrays(tmap)
    x0 = sample_stationary(density, np.random.default_rng(seed))
    sums = _jit.orbit_batch_sums(br, kd, pm, x0, m, b, f.okinds, f.ocoef)
    return float(np.var(sums, ddof=1) / b), float(sums.sum() / (m * b))


# --------------------------------------------------------- sum sources

class OrbitSource:
    def __init__(self, tmap, density, mean=None):
        self.tmap, self.density, self.mean = tmap, density, mean

    def sums(self, f, n, replicas, seed, checkpoints=None, threads=None):
        return orbit_sums(self.tmap, self.density, f, n, replicas, seed, checkpoints,
                          self.mean, threads)


class ChainSource:
    def __init__(self, tmap, density, mean=None, burn_in=DEFAULT_BURN_IN):
        self.tmap, self.density, self.mean, self.burn_in = tmap, density, mean, burn_in

    def sums(self, f, n, replicas, seed, checkpoints=None, threads=None):
        return chain_sums(self.tmap, self.density, f, n, replicas, seed, checkpoints,
                          self.mean, self.burn_in, threads=threads)


class IIDSource:
    """``draw(rng, n)`` returns ``n`` i.i.d. values; ``f`` (if given) is applied,
    then ``mean`` subtracted."""

    def __init__(self, draw, mean=0.0):
        self.draw, self.mean = draw, mean

    def sums(self, f, n, replicas, seed, checkpoints=None, threads=None):
        cp = np.array([n]) if checkpoints is None else np.asarray(checkpoints)

        def one(r):
            x = self.draw(replica_rng(seed, r), n)
            x = (f(x) if f is not None else x) - self.mean
            part = np.cumsum(x)
            run = np.maximum.accumulate(np.abs(part))
            return part[cp - 1], run[cp - 1]

        res = ordered_map(one, range(replicas), threads)
        return np.array([s for s, _ in res]), np.array([m for _, m in res])


# ---------------------------------------------------------- ratio scans

def lil_ratio_scan(source, f, A, n_max_log2, replicas, seed, threads=None):
    """Per replica, ``max over dyadic n`` of ``max_{k<=n}|S_k| / √(2 n LLn)``."""
    ns = dyadic(n_max_log2)
    _, M = source.sums(f, int(ns[-1]), replicas, seed, ns, threads)
    ratios = M / np.sqrt(2.0 * ns * loglog2(ns))[None, :]
    worst = ratios.max(axis=1)
    summary = {"A": float(A), "fraction_below": float(np.mean(worst < A)),
               "max_ratio": float(worst.max()), "median_ratio": float(np.median(worst))}
    return LimitReport(n=ns.tolist(), ratios={"lil": ratios}, summary=summary)


def slln_rate_scan(source, f, p, b, n_max_log2, replicas, seed, window=3, threads=None):
    """``max_{k<=n}|S_k| / (n^{1/p} (ln n)^b)`` at dyadic n.

    A replica counts as decreasing when the least-squares slope of the log
    ratio against ``log n`` over the last ``window`` dyadic steps is negative.
    """
    ns = dyadic(n_max_log2)
    _, M = source.sums(f, int(ns[-1]), replicas, seed, ns, threads)
    ratios = M / (ns ** (1.0 / p) * np.log(ns) ** b)[None, :]
    tail_n = np.log(ns[-(window + 1):])
    tail_r = np.log(np.maximum(ratios[:, -(window + 1):], 1e-300))
    xc = tail_n - tail_n.mean()
    slopes = (tail_r - tail_r.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
    summary = {"p": p, "b": b, "window": window,
               "fraction_decreasing": float(np.mean(slopes < 0)),
               "last_window_max": float(ratios[:, -(window + 1):].max()),
               "median_slope": float(np.median(slopes))}
    return LimitReport(n=ns.tolist(), ratios={"slln": ratios}, summary=summary)


# ---------------------------------------------------- stable-law checks

def hill_estimator(sample, fraction=0.05, bootstrap=200, seed=0, min_k=200):
    """Hill tail index from the top ``fraction`` of the positive part of ``sample``.

    Returns ``(index, ci_low, ci_high)`` with a 95% bootstrap interval.
    """
    x = np.asarray(sample, dtype=float)
    k = int(fraction * len(x))
    if k < min_k:
        raise SampleSizeError(f"only {k} upper order statistics (< {min_k})")

    def est(v):
        top = np.sort(v)[::-1][: k + 1]
        if top[k] <= 0:
            raise SampleSizeError("upper order statistics are not positive")
        return 1.0 / np.mean(np.log(top[:k] / top[k]))

    a = est(x)
    rng = np.random.default_rng(seed)
    boot = np.array([est(x[rng.integers(0, len(x), len(x))]) for _ in range(bootstrap)])
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return float(a), float(lo), float(hi)


def tail_mass_ratio(sample, level=0.99):
    """Right/left tail masses beyond the ``level`` quantile of ``|sample|``."""
    x = np.asarray(sample, dtype=float)
    q = np.quantile(np.abs(x), level)
    right, left = float(np.mean(x > q)), float(np.mean(x < -q))
    return right / left if left > 0 else math.inf, right, left


def stable_law_diagnostics(source, f, p, n, replicas, seed, fraction=0.05, threads=None,
                           bootstrap=200):
    """Tail index and one-sidedness of ``W = n^{-1/p} S_n`` over replicas."""
    if int(fraction * replicas) < 200:
        raise SampleSizeError(f"{replicas} replicas give fewer than 200 upper order statistics")
    S, _ = source.sums(f, n, replicas, seed, None, threads)
    W = S[:, 0] / n ** (1.0 / p)
    idx, lo, hi = hill_estimator(W, fraction, bootstrap, seed)
    ratio, right, left = tail_mass_ratio(W)
    return LimitReport(n=[n], summary={"p": p, "tail_ratio": ratio, "right_mass": right,
                                       "left_mass": left, "W": W},
                       hill={"index": idx, "ci": [lo, hi], "fraction": fraction})


def gaussian_ks_scaled(sample, fit_loc=False):
    """KS distance to N(loc, scale²) with the scale (and optionally loc) fitted."""
    x = np.asarray(sample, dtype=float)
    loc = float(np.mean(x)) if fit_loc else 0.0
    scale = float(np.sqrt(np.mean((x - loc) ** 2)))
    return ks_distance((x - loc) / scale, "norm"), scale


# ------------------------------------------------------------------ KS

def ks_distance(a, b):
    """One-sample KS when ``b`` is a CDF (callable or scipy.stats name),
    two-sample KS when ``b`` is a sample.  Returns ``{statistic, p_value}``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise SampleSizeError("empty sample")
    if callable(b) or isinstance(b, str):
        res = stats.kstest(a, b, method="asymp")
    else:
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            raise SampleSizeError("empty sample")
        res = stats.ks_2samp(a, b, method="asymp")
    return {"statistic": float(res.statistic), "p_value": float(res.pvalue)}
