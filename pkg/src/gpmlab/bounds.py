"""Explicit right-hand sides: the maximal inequality with its R/S functions,
the bounded-LIL constants, the Pinelis martingale bound, the covariance
inequality and the SLLN series, each with a Monte-Carlo domination test.

``alpha`` arguments may be an :class:`~gpmlab.kernel.AlphaSequence`, a
callable on integer lags, or an array (taken as zero past its end).
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import stats

from ._util import chunks, ordered_map, replica_rng
from .observables import ConditionError, q_integral
from .limits import loglog2

__all__ = ["h_fn", "BoundInputs", "gamma_surrogate", "RS", "r_and_s", "fn_maximal_bound", "fn_simplified_bound", "r_grid",
           "best_fn_bound", "min_sn2", "domination_test_fn", "lil_constant",
           "pinelis_bound", "pinelis_test", "rio_covariance_bound", "rio_test",
           "slln_series_bound", "wilson_interval", "BoundReport", "ContractError"]


class ContractError(ValueError):
    """A stated precondition of an inequality is violated."""


def h_fn(u):
    """``h(u) = (1+u) ln(1+u) - u``."""
    u = np.asarray(u, dtype=float)
    return (1.0 + u) * np.log1p(u) - u


@dataclass
class BoundInputs:
    """Inputs of the maximal inequality; ``sn2`` defaults to its smallest
    admissible value."""

    tail: object
    alpha1: object
    alpha2: object
    n: int
    sn2: float = None

    def __post_init__(self):
        need = min_sn2(self.tail, self.alpha1, self.n)
        if self.sn2 is None:
            self.sn2 = need
        elif self.sn2 < need * (1.0 - 1e-12):
            raise ContractError(f"s_n^2 = {self.sn2:.6g} below the required {need:.6g}")

    @property
    def extended(self):
        """True when α is read past its measured range."""
        ext = _alpha_extension(self.alpha1)
        return ext is not None and ext[0] < self.n

    def bound(self, x, r, simplified=False):
        fn = fn_simplified_bound if simplified else fn_maximal_bound
        return fn(self.tail, self.alpha1, self.alpha2, self.n, x, r, self.sn2)


# ------------------------------------------------------------ α helpers

def _alpha_values(alpha, lags):
    """α at integer ``lags`` (array), with the conventions in the module doc."""
    lags = np.asarray(lags, dtype=np.int64)
    if hasattr(alpha, "values") and callable(alpha):
        return np.asarray(alpha(lags), dtype=float)
    if callable(alpha):
        return np.array([float(alpha(int(k))) for k in lags])
    a = np.asarray(alpha, dtype=float)
    out = np.zeros(len(lags))
    inside = lags < len(a)
    out[inside] = a[lags[inside]]
    return out


def _alpha_extension(alpha):
    """(n_max, last value, slope) when α carries a fitted power-law tail."""
    if hasattr(alpha, "values") and hasattr(alpha, "slope"):
        return len(alpha.values) - 1, float(alpha.values[-1]), float(alpha.slope)
    return None


# ---------------------------------------------------------- R(u), S(v)

class RS:
    """``R(u) = (min{q >= 1 : α2(q) <= u} ∧ n) Q(u)`` and its right inverse
    ``S(v) = inf{u ∈ [0, 1] : R(u) <= v}``."""

    def __init__(self, tail, alpha2, n):
        self.tail, self.n = tail, int(n)
        self._a2 = _alpha_values(alpha2, np.arange(1, self.n + 1))
        if np.any(np.diff(self._a2) > 1e-15):
            raise ContractError("alpha2 must be nonincreasing")

    def qmin(self, u):
        u = np.asarray(u, dtype=float)
        # first index with a2 <= u in a nonincreasing array
        idx = np.searchsorted(-self._a2, -u, side="left")
        return np.where(idx < self.n, idx + 1, self.n)

    def R(self, u):
        u = np.asarray(u, dtype=float)
        return self.qmin(u) * self.tail.Q(u)

    def S(self, v, iters=200):
        v = float(v)
        if float(self.R(0.0)) <= v:
            return 0.0
        lo, hi = 0.0, 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if float(self.R(mid)) <= v:
                hi = mid
            else:
                lo = mid
        return hi


def r_and_s(tail, alpha2, n):
    return RS(tail, alpha2, n)


# -------------------------------------------------------- maximal ineq

def min_sn2(tail, alpha1, n):
    """Smallest admissible ``s_n² = 4n Σ_{i<n} ∫_0^{α1(i)} Q²``."""
    a = _alpha_values(alpha1, np.arange(n))
    return 4.0 * n * sum(q_integral(tail, ai, 2) for ai in a)


def _check_sn(tail, alpha1, n, sn2):
    need = min_sn2(tail, alpha1, n)
    if sn2 < need * (1.0 - 1e-12):
        raise ContractError(f"s_n^2 = {sn2:.6g} below the required {need:.6g}")


def _integral_term(rs, tail, x, r, n, sn2):
    s = rs.S(x / r)
    return n * (6.0 / x + 16.0 * x / (r * sn2)) * q_integral(tail, s, 1)


def fn_maximal_bound(tail, alpha1, alpha2, n, x, r, sn2=None, rs=None):
    """Right-hand side of the maximal inequality for ``P(sup_k |S_k| >= 5x)``."""
    if x <= 0 or r < 1:
        raise ContractError("need x > 0 and r >= 1")
    sn2 = min_sn2(tail, alpha1, n) if sn2 is None else float(sn2)
    if rs is None:
        _check_sn(tail, alpha1, n, sn2)
        rs = RS(tail, alpha2, n)
    expo = (r * r * sn2) / (8.0 * x * x) * float(h_fn(2.0 * x * x / (r * sn2)))
    return 4.0 * math.exp(-expo) + _integral_term(rs, tail, x, r, n, sn2)


def fn_simplified_bound(tail, alpha1, alpha2, n, x, r, sn2=None, rs=None):
    """Variant with ``4 (1 + 2x²/(r s_n²))^{-r/8}`` as the first term."""
    if x <= 0 or r < 1:
        raise ContractError("need x > 0 and r >= 1")
    sn2 = min_sn2(tail, alpha1, n) if sn2 is None else float(sn2)
    if rs is None:
        _check_sn(tail, alpha1, n, sn2)
        rs = RS(tail, alpha2, n)
    first = 4.0 * (1.0 + 2.0 * x * x / (r * sn2)) ** (-r / 8.0)
    return first + _integral_term(rs, tail, x, r, n, sn2)


def r_grid(n):
    """``{1, 2, 4, ...}`` up to ``8 LLn``, with ``8 LLn`` itself appended."""
    top = 8.0 * float(loglog2(n))
    g = [1.0]
    while g[-1] * 2 <= top:
        g.append(g[-1] * 2)
    if g[-1] < top:
        g.append(top)
    return np.array(g)


def best_fn_bound(tail, alpha1, alpha2, n, x, sn2=None):
    """min over ``r`` in :func:`r_grid` of the maximal-inequality bound."""
    sn2 = min_sn2(tail, alpha1, n) if sn2 is None else float(sn2)
    _check_sn(tail, alpha1, n, sn2)
    rs = RS(tail, alpha2, n)
    vals = [fn_maximal_bound(tail, alpha1, alpha2, n, x, r, sn2, rs) for r in r_grid(n)]
    k = int(np.argmin(vals))
    return float(vals[k]), float(r_grid(n)[k])


def wilson_interval(k, n, level=0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class BoundReport:
    bound_name: str
    inputs: dict
    rhs: list
    mc_lhs: list
    mc_ci: list
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"bound_name": self.bound_name, "inputs": self.inputs, "rhs": self.rhs,
                "mc_lhs": self.mc_lhs, "mc_ci": self.mc_ci, "pass": self.passed,
                **self.extra}

    def to_json(self):
        return json.dumps(self.to_dict(), default=float)


def domination_test_fn(source, f, tail, alpha1, alpha2, n, x_grid, replicas, seed,
                       threads=None):
    """Monte-Carlo ``P(sup_{k<=n} |S_k| >= 5x)`` against the best bound over r.

    ``source`` is a sum source (see :mod:`gpmlab.limits`); passes iff the
    Wilson upper limit stays below the bound at every ``x``.
    """
    _, M = source.sums(f, n, replicas, seed, None, threads)
    M = M[:, 0]
    sn2 = min_sn2(tail, alpha1, n)
    rhs, lhs, ci, rs_used = [], [], [], []
    for x in x_grid:
        b, r = best_fn_bound(tail, alpha1, alpha2, n, float(x), sn2)
        k = int(np.sum(M >= 5.0 * x))
        lo, hi = wilson_interval(k, replicas)
        rhs.append(b)
        lhs.append(k / replicas)
        ci.append([lo, hi])
        rs_used.append(r)
    ok = all(c[1] <= b for c, b in zip(ci, rhs))
    return BoundReport("fn_maximal", {"n": n, "x": list(map(float, x_grid)), "sn2": sn2,
                                      "r": rs_used, "replicas": replicas},
                       rhs, lhs, ci, ok)


# ------------------------------------------------------------- LIL A

def _q2_series(tail, alpha, start):
    """``Σ_{k>=start} ∫_0^{α(k)} Q²`` split into measured part and extension."""
    ext = _alpha_extension(alpha)
    vals = np.asarray(getattr(alpha, "values", alpha), dtype=float)
    measured = float(sum(q_integral(tail, v, 2) for v in vals[start:]))
    if ext is None:
        return measured, 0.0
    n_max, last, slope = ext
    if last <= 0.0:
        return measured, 0.0
    # past n_max, ∫_0^{α(k)} Q² ~ α(k)^{1-2e} with α(k) on the fitted power law
    decay = slope * (1.0 - 2.0 * tail.q_exponent())
    if not decay < -1.0:
        raise ConditionError(f"α tail terms decay like k^{decay:.2f}; series diverges")
    ks = np.arange(n_max + 1, n_max + 2001, dtype=float)
    ext_sum = float(sum(q_integral(tail, v, 2) for v in last * (ks / n_max) ** slope))
    k0 = ks[-1] + 1
    ext_sum += q_integral(tail, last * (k0 / n_max) ** slope, 2) * k0 / (-decay - 1.0)
    return measured, ext_sum


def lil_constant(alpha1, tail):
    """Chain constant ``20 (Σ_{k>=0} ∫_0^{α1(k)} Q²)^{1/2}`` and map constant
    ``40√2 (Σ_{k>=1} ∫_0^{α1(k)} Q²)^{1/2}``, each with the change caused by
    the fitted α extension beyond the measured range."""
    out = {}
    for name, start, c in (("chain", 0, 20.0), ("map", 1, 40.0 * math.sqrt(2.0))):
        measured, ext = _q2_series(tail, alpha1, start)
        full = c * math.sqrt(measured + ext)
        out[name] = full
        out[name + "_truncation"] = full - c * math.sqrt(measured)
    return out


# ------------------------------------------------------------- Pinelis

def pinelis_bound(c, y, x):
    """``2 exp(-(y/c²) h(x c / y))``."""
    if min(c, y, x) <= 0:
        raise ContractError("c, y, x must be positive")
    return 2.0 * math.exp(-(y / (c * c)) * float(h_fn(x * c / y)))


def pinelis_test(n, x_values, replicas, seed, c=1.0, threads=None, chunk=500):
    """±c coin-flip martingale: ``P(sup_j |M_j| >= x)`` versus the bound with ``y = n c²``."""
    x_values = np.asarray(x_values, dtype=float)

    def one(block):
        i, (a, b) = block
        rng = replica_rng(seed, i)
        steps = rng.integers(0, 2, size=(b - a, n), dtype=np.int8)
        walk = np.cumsum(2 * steps.astype(np.int32) - 1, axis=1)
        return np.max(np.abs(walk), axis=1) * c

    sups = np.concatenate(ordered_map(one, list(enumerate(chunks(replicas, chunk))), threads))
    y = n * c * c
    rhs, lhs, ci = [], [], []
    for x in x_values:
        k = int(np.sum(sups >= x))
        rhs.append(pinelis_bound(c, y, x))
        lhs.append(k / replicas)
        ci.append(list(wilson_interval(k, replicas)))
    ok = all(cc[1] <= r for cc, r in zip(ci, rhs))
    return BoundReport("pinelis", {"n": n, "c": c, "y": y, "x": x_values.tolist(),
                                   "replicas": replicas}, rhs, lhs, ci, ok)


# ------------------------------------------------------------ covariance

def gamma_surrogate(tail, alpha1, i):
    """``4 ∫_0^{α1(i)} Q``, used in place of ``‖E(X_i | F_0)‖_1``."""
    a = float(_alpha_values(alpha1, [abs(int(i))])[0])
    return 4.0 * q_integral(tail, a, 1)


def rio_covariance_bound(tail, alpha1, i):
    """``4 ∫_0^{α1(|i|)} Q²``."""
    a = float(_alpha_values(alpha1, [abs(int(i))])[0])
    return 4.0 * q_integral(tail, a, 2)


def rio_test(kernel, f_cells, tail, alpha1, lags, rtol=1e-12):
    """Spectral ``|ν(K^i f0 · f)|`` against the covariance bound at each lag.

    Covariances within ``rtol · ν(f0²)`` of the bound pass, so that
    round-off does not fail an exactly-zero bound.
    """
    f = np.asarray(f_cells, dtype=float)
    f0 = f - kernel.nu @ f
    slack = rtol * float(kernel.nu @ (f0 * f0))
    g = f0
    lags = sorted(int(i) for i in lags)
    cov, rhs = [], []
    k = 0
    for i in lags:
        while k < i:
            g = kernel.P @ g
            k += 1
        cov.append(abs(float(kernel.nu @ (g * f))))
        rhs.append(rio_covariance_bound(tail, alpha1, i))
    ok = all(c <= r + slack for c, r in zip(cov, rhs))
    return BoundReport("rio_covariance", {"lags": lags}, rhs, cov, [[c, c] for c in cov], ok)


# ------------------------------------------------------------------ SLLN

def slln_series_bound(tail, alpha1, p, gamma=None, strict=False):
    """``∫_0^1 (α1^{-1}(u))^{p-1} Q^p(u) du`` and, given ``gamma``, the proxy
    ``∫_0^1 u^{-γ(p-1)/(1-γ)} Q^p(u) du``.

    Uses ``(α1^{-1})^{p-1} = Σ_j ((j+1)^{p-1} - j^{p-1}) 1_{u < α1(j)}``.  For
    an :class:`AlphaSequence`, lags past the measured range follow its fitted
    power law.  Returns a dict with values and finiteness verdicts; with
    ``strict`` a divergent series raises :class:`ConditionError` instead.
    """
    if not 1.0 < p <= 2.0:
        raise ConditionError("p must lie in (1, 2]")
    out = {"p": p}
    ext = _alpha_extension(alpha1)
    e = p * tail.q_exponent()
    if ext is None:
        a = np.asarray(alpha1 if not hasattr(alpha1, "values") else alpha1.values, dtype=float)
        js = np.arange(len(a), dtype=float)
        w = (js + 1) ** (p - 1) - js ** (p - 1)
        val = float(sum(wi * q_integral(tail, ai, p) for wi, ai in zip(w, a)))
        out.update(series=val, series_finite=math.isfinite(val), extended=False)
    else:
        n_max, last, slope = ext
        vals = np.asarray(alpha1.values, dtype=float)
        js = np.arange(n_max + 1, dtype=float)
        w = (js + 1) ** (p - 1) - js ** (p - 1)
        measured = float(sum(wi * q_integral(tail, ai, p) for wi, ai in zip(w, vals)))
        # tail terms ~ j^{p-2} j^{slope (1-e)} (ln j)^{-c}
        decay = (p - 2.0) + slope * (1.0 - e)
        c = p * tail.b / tail.q if tail.family == "powerlog" else 0.0
        border = abs(decay + 1.0) < 1e-12
        finite = e < 1.0 and (decay < -1.0 and not border or border and c > 1.0)
        if finite and last > 0:
            jj = np.arange(n_max + 1, n_max + 2001, dtype=float)
            ww = (jj + 1) ** (p - 1) - jj ** (p - 1)
            aa = last * (jj / n_max) ** slope
            tail_sum = float(sum(wi * q_integral(tail, ai, p) for wi, ai in zip(ww, aa)))
            j0 = jj[-1] + 1
            t0 = ((j0 + 1) ** (p - 1) - j0 ** (p - 1)) * q_integral(tail, last * (j0 / n_max) ** slope, p)
            tail_sum += t0 * j0 * (math.log(j0) / (c - 1.0) if border else 1.0 / (-decay - 1.0))
        else:
            tail_sum = 0.0 if finite else math.inf
        out.update(series=measured + tail_sum, series_finite=bool(finite), extended=True,
                   extension=tail_sum)
    if gamma is not None:
        beta = gamma * (p - 1.0) / (1.0 - gamma)
        prox = q_integral(tail, 1.0, p, weight_exp=beta)
        out.update(proxy=prox, proxy_finite=math.isfinite(prox))
    if strict and not out["series_finite"]:
        raise ConditionError("series diverges")
    return out
