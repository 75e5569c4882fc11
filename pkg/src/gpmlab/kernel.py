"""Discretized Perron-Frobenius kernel with respect to ν.

The kernel ``K f = L(h f) / h`` is realized at cell level as the ν-reversal
of the Ulam matrix, ``P[j, i] = ν_i L[i, j] / ν_j``.  On top of it live the
trajectory-masked operators ``A_a, B_b, C_n, T_k, R_k`` (first and last
visits to the reference set ``(z1, 1]``) and the dependence coefficients
built from indicators ``1_{[0, x]}``.
"""
from dataclasses import dataclass, field, replace
import csv
import json
import logging

import numpy as np
import scipy.sparse as sp

from ._util import loglog_fit
from .density import GridFunction, variation_norm

__all__ = ["KernelModel", "KernelError", "HorizonError", "kernel_matrix",
           "MaskedOperators", "masked_operators", "decomposition_errors",
           "en_remainder", "variation_bound_check", "correlation_decay",
           "AlphaSequence", "alpha_estimate", "threshold_grid", "iid_surrogate"]

logger = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-13


class KernelError(ValueError):
    pass


class HorizonError(RuntimeError):
    """Requested power beyond the configured operator horizon."""


@dataclass(frozen=True)
class KernelModel:
    P: sp.csr_matrix = field(repr=False)
    nu: np.ndarray = field(repr=False)
    grid: np.ndarray = field(repr=False)
    z0: float
    z1: float
    renorm_max_dev: float
    low: np.ndarray = field(repr=False)
    high: np.ndarray = field(repr=False)
    ref0: np.ndarray = field(repr=False)

    @property
    def n_cells(self):
        return self.P.shape[0]

    def apply(self, f, n=1):
        """``K^n f`` for a vector or an (N, m) block of cell values."""
        out = np.asarray(f, dtype=float)
        for _ in range(n):
            out = self.P @ out
        return out

    def mean(self, f):
        """ν(f) for cell values (columns of a block)."""
        return self.nu @ np.asarray(f, dtype=float)

    def l1(self, f):
        return self.nu @ np.abs(f)

    def indicator(self, x):
        """Cell values of ``1_{[0, x]}``; x is snapped to the nearest boundary."""
        j = int(np.argmin(np.abs(self.grid - x)))
        v = np.zeros(self.n_cells)
        v[:j] = 1.0
        return v


def kernel_matrix(density, tmap, grid=None, tol=1e-6):
    """Build the ν-kernel from a density model.

    Rows are renormalized to sum to one; the largest renormalization factor
    deviation is recorded and must stay below ``tol``.
    """
    grid = density.grid if grid is None else np.asarray(grid)
    nu = density.nu_weights
    if np.any(nu <= 0):
        raise KernelError("density vanishes on a cell")
    z0, z1 = tmap.z0, tmap.z1
    for z, name in ((z0, "z0"), (z1, "z1")):
        if not np.any(np.abs(grid - z) <= 1e-14):
            raise KernelError(f"{name}={z} is not a grid boundary")
    L = density.ulam
    P = (sp.diags(1.0 / nu) @ L.T @ sp.diags(nu)).tocsr()
    rs = np.asarray(P.sum(axis=1)).ravel()
    dev = float(np.max(np.abs(rs - 1.0)))
    if dev > tol:
        raise KernelError(f"row renormalization factor off by {dev:.2e} (> {tol})")
    logger.info("kernel row renormalization: max |factor - 1| = %.2e", dev)
    P = (sp.diags(1.0 / rs) @ P).tocsr()
    c = 0.5 * (grid[1:] + grid[:-1])
    low = c < z1
    return KernelModel(P=P, nu=nu, grid=grid, z0=z0, z1=z1, renorm_max_dev=dev,
                       low=low, high=~low, ref0=(c > z1) & (c < z0))


def iid_surrogate(kernel):
    """Same ν, but every row of P equals ν: the chain forgets its state in one step."""
    P = np.tile(kernel.nu, (kernel.n_cells, 1))
    return replace(kernel, P=P, renorm_max_dev=0.0)


class MaskedOperators:
    """Masked powers of the kernel, applied lazily to vectors or blocks.

    With ``Pi_L`` and ``Pi_H`` the restrictions to ``[0, z1]`` and
    ``(z1, 1]``::

        A_a = (Pi_L P)^a Pi_H            B_b = Pi_H (P Pi_L)^b
        C_n = (Pi_L P)^n Pi_L            T_k = Pi_H P^k Pi_H
        R_k = Pi_H P (Pi_L P)^(k-1) Pi_H  (k >= 1)
    """

    def __init__(self, kernel, horizon):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.kernel = kernel
        self.horizon = horizon
        self._lo = kernel.low.astype(float)
        self._hi = kernel.high.astype(float)

    def _check(self, n):
        if n > self.horizon:
            raise HorizonError(f"power {n} exceeds configured horizon {self.horizon}")

    def _mask(self, m, F):
        return m[:, None] * F if F.ndim == 2 else m * F

    def _P(self, F):
        return self.kernel.P @ F

    def A(self, a, F):
        self._check(a)
        G = self._mask(self._hi, F)
        for _ in range(a):
            G = self._mask(self._lo, self._P(G))
        return G

    def B(self, b, F):
        self._check(b)
        G = F
        for _ in range(b):
            G = self._P(self._mask(self._lo, G))
        return self._mask(self._hi, G)

    def C(self, n, F):
        self._check(n)
        G = self._mask(self._lo, F)
        for _ in range(n):
            G = self._mask(self._lo, self._P(G))
        return G

    def T(self, k, F):
        self._check(k)
        G = self._mask(self._hi, F)
        for _ in range(k):
            G = self._P(G)
        return self._mask(self._hi, G)

    def R(self, k, F):
        if k < 1:
            raise ValueError("R_k needs k >= 1")
        self._check(k)
        G = self._mask(self._hi, F)
        for _ in range(k - 1):
            G = self._mask(self._lo, self._P(G))
        return self._mask(self._hi, self._P(G))

    def dense(self, name, n):
        """Materialize one operator as a dense matrix (small grids only)."""
        eye = np.eye(self.kernel.n_cells)
        return getattr(self, name)(n, eye)


def masked_operators(kernel, n):
    return MaskedOperators(kernel, n)


def decomposition_errors(kernel, n_max, F=None):
    """Max-norm errors of the first/last-visit decomposition and the renewal identity.

    The convolution sums are accumulated Horner-style::

        Y_m = B_m F + P Y_{m-1}          (so Pi_H Y_m = sum_{k+b=m} T_k B_b F)
        X_n = Pi_H Y_n + Pi_L P X_{n-1}  (so X_n = sum_{a+k+b=n} A_a T_k B_b F)
        Z_n = Pi_H T_{n-1} F + Pi_L P Z_{n-1},  sum_k R_k T_{n-k} F = Pi_H P Z_n

    ``F`` defaults to the identity (every basis function at once).
    """
    N = kernel.n_cells
    if F is None:
        F = np.eye(N)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    lo = kernel.low.astype(float)[:, None]
    hi = kernel.high.astype(float)[:, None]
    P = kernel.P
    report = []
    G = F                       # (P Pi_L)^b F, before the final Pi_H
    Y = hi * F                  # m = 0: B_0 F
    X = hi * Y
    Kn = F
    Cn = lo * F
    for n in range(n_max + 1):
        if n > 0:
            G = P @ (lo * G)
            Y = hi * G + P @ Y
            X = hi * Y + lo * (P @ X)
            Kn = P @ Kn
            Cn = lo * (P @ Cn)
        err = float(np.max(np.abs(Kn - X - Cn)))
        report.append({"identity": "first_last_visit", "n": n, "max_abs_error": err})
    Pn = hi * F                 # P^n Pi_H F
    Tprev = Pn                  # T_0 F
    Z = None
    for n in range(1, n_max + 1):
        Z = hi * Tprev if Z is None else hi * Tprev + lo * (P @ Z)
        Pn = P @ Pn
        Tn = hi * Pn
        rhs = hi * (P @ Z)
        report.append({"identity": "renewal", "n": n,
                       "max_abs_error": float(np.max(np.abs(Tn - rhs)))})
        Tprev = Tn
    return report


@dataclass
class DecayReport:
    n: np.ndarray
    values: np.ndarray
    slope: float
    fit_residual: float
    fit_range: tuple

    def to_csv(self, path):
        _write_series(path, self.n, self.values)


def _fit_range(n, values, fit_range):
    lo, hi = fit_range
    sel = (n >= lo) & (n <= hi)
    return loglog_fit(n[sel], values[sel])


def en_remainder(kernel, n_max, f=None, fit_range=(8, 64)):
    """Variation of ``E_n f = T_n f - ν(1_H f) 1_H`` for n = 0..n_max.

    ``f`` defaults to the indicator of the reference set ``(z1, 1]``.
    """
    hi = kernel.high.astype(float)
    f = hi.copy() if f is None else np.asarray(f, dtype=float)
    proj = float(kernel.nu @ (hi * f))
    G = hi * f
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        if n > 0:
            G = kernel.P @ G
        E = hi * G - proj * hi
        out[n] = variation_norm(E)
    ns = np.arange(n_max + 1)
    slope, _, res = _fit_range(ns, out, fit_range)
    return DecayReport(n=ns, values=out, slope=slope, fit_residual=res, fit_range=fit_range)


def variation_bound_check(kernel, test_fns, n_max):
    """Ratios ``Var(K^n f) / Var(f)`` for n = 1..n_max, per test function."""
    out = {}
    for name, f in test_fns.items():
        f = np.asarray(f, dtype=float)
        v0 = variation_norm(f)
        G = f
        ratios = np.empty(n_max)
        for n in range(1, n_max + 1):
            G = kernel.P @ G
            ratios[n - 1] = variation_norm(G) / v0 if v0 > 0 else variation_norm(G)
        last = ratios[-max(1, n_max // 10):]
        out[name] = {"ratios": ratios, "sup": float(ratios.max()),
                     "first": float(ratios[0]),
                     "last_decade_trend": float(last[-1] - last[0])}
    return out


def correlation_decay(kernel, f, phi, n_max, fit_range=(8, 128)):
    """``|ν(φ K^n (f - ν f))|``, i.e. ``|ν(φ∘T^n (f - ν f))|`` by duality."""
    f0 = np.asarray(f, dtype=float) - kernel.mean(f)
    G = f0
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        if n > 0:
            G = kernel.P @ G
        out[n] = abs(float(kernel.nu @ (np.asarray(phi) * G)))
    ns = np.arange(n_max + 1)
    slope, _, res = _fit_range(ns, out, fit_range)
    return DecayReport(n=ns, values=out, slope=slope, fit_residual=res, fit_range=fit_range)


@dataclass
class AlphaSequence:
    """Estimated dependence coefficients α_k(n), n = 0..n_max."""

    order: int
    values: np.ndarray
    slope: float
    slope_band: tuple
    fit_range: tuple
    fit_residual: float
    thresholds: np.ndarray = field(repr=False)

    @property
    def n(self):
        return np.arange(len(self.values))

    def __call__(self, q):
        """α(q) for integer q, extended past n_max by the fitted power law."""
        q = np.asarray(q, dtype=float)
        nmax = len(self.values) - 1
        inside = np.clip(q, 0, nmax).astype(int)
        out = self.values[inside].astype(float)
        far = q > nmax
        if np.any(far):
            out = np.where(far, self.values[-1] * (np.maximum(q, 1) / nmax) ** self.slope, out)
        return out

    def to_csv(self, path):
        _write_series(path, self.n, self.values)


def threshold_grid(kernel, count=64):
    """``count`` thresholds at ν-quantiles (logit-spaced levels), snapped to boundaries."""
    levels = 1.0 / (1.0 + np.exp(-np.linspace(-7.0, 7.0, count)))
    cdf = np.concatenate([[0.0], np.cumsum(kernel.nu)])
    idx = np.clip(np.searchsorted(cdf, levels), 1, kernel.n_cells - 1)
    return kernel.grid[np.unique(idx)]


def _centered_indicators(kernel, xs):
    G = np.stack([kernel.indicator(x) for x in xs], axis=1)
    return G - kernel.mean(G)[None, :]


def _l1_decay(kernel, G, n_max):
    """max over columns of ν|K^n G| for n = 0..n_max."""
    out = np.empty(n_max + 1)
    nu = kernel.nu
    for n in range(n_max + 1):
        if n > 0:
            G = kernel.P @ G
        out[n] = float((nu @ np.abs(G)).max())
    return out


def alpha_estimate(kernel, order, n_max, x_grid=None, m_max=16, pair_grid=None,
                   fit_range=(8, 128)):
    """Dependence coefficients from the kernel acting on centered indicators.

    Order 1: ``sup_x ν|K^n(1_{[0,x]} - ν[0,x])|``.  Order 2 adds
    ``sup ν|K^n(g1 K^m g2) - ν(g1 K^m g2)|`` over threshold pairs and gaps
    ``m <= m_max``.  The sup over ``i >= n`` is taken as a suffix maximum,
    and values under ``ALPHA_FLOOR`` (round-off level) are set to zero.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    xs = threshold_grid(kernel) if x_grid is None else np.asarray(x_grid, dtype=float)
    G = _centered_indicators(kernel, xs)
    raw = _l1_decay(kernel, G, n_max)
    if order == 2:
        xs2 = xs if pair_grid is None else np.asarray(pair_grid, dtype=float)
        G2 = _centered_indicators(kernel, xs2)
        Km = G2.copy()
        for m in range(m_max + 1):
            if m > 0:
                Km = kernel.P @ Km
            # columns g1 * K^m g2 for every pair, centered
            prod = (G2[:, :, None] * Km[:, None, :]).reshape(kernel.n_cells, -1)
            prod = prod - kernel.mean(prod)[None, :]
            raw = np.maximum(raw, _l1_decay(kernel, prod, n_max))
    values = np.maximum.accumulate(raw[::-1])[::-1]
    values[values < ALPHA_FLOOR] = 0.0
    ns = np.arange(n_max + 1)
    slope, _, res = _fit_range(ns, values, fit_range)
    # crude band: slopes over the two halves of the fit range
    lo, hi = fit_range
    mid = int(np.sqrt(lo * hi))
    s1 = _fit_range(ns, values, (lo, mid))[0]
    s2 = _fit_range(ns, values, (mid, hi))[0]
    return AlphaSequence(order=order, values=values, slope=slope,
                         slope_band=(min(s1, s2), max(s1, s2)), fit_range=fit_range,
                         fit_residual=res, thresholds=xs)


def _write_series(path, n, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "value"])
        for a, b in zip(n, values):
            w.writerow([int(a), repr(float(b))])


def identities_json(report):
    """Newline-delimited JSON records for decomposition identity reports."""
    return "\n".join(json.dumps(r) for r in report)
