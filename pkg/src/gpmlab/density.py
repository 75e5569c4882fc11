"""Ulam discretization and the invariant density of a GPM map."""
from dataclasses import dataclass, field
import csv
import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _jit
from .maps import inverse_branch, z_sequence

__all__ = ["GridFunction", "DensityModel", "ConvergenceError", "make_graded_grid",
           "anchor_grid", "model_grid", "ulam_matrix", "invariant_density",
           "density_series_extension", "SeriesExtension"]

logger = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Power iteration failed to reach the requested residual."""


@dataclass(frozen=True)
class GridFunction:
    """Piecewise-constant function on the cells of ``grid``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != grid.shape[0] - 1:
            raise ValueError("need one value per cell")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def widths(self):
        return np.diff(self.grid)

    @property
    def centers(self):
        return 0.5 * (self.grid[1:] + self.grid[:-1])

    def variation_norm(self):
        """Total variation on R of the function extended by 0 outside [0, 1]."""
        return variation_norm(self.values)

    def integral(self, weights=None):
        """Integral against cell ``weights`` (Lebesgue cell widths by default)."""
        w = self.widths if weights is None else weights
        return float(np.dot(w, self.values))

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.grid, self.values * other.values)
        return GridFunction(self.grid, self.values * other)

    __rmul__ = __mul__

    @classmethod
    def indicator(cls, grid, lo, hi):
        """Indicator of the union of cells whose centers lie in [lo, hi]."""
        c = 0.5 * (grid[1:] + grid[:-1])
        return cls(grid, ((c >= lo) & (c <= hi)).astype(float))


def variation_norm(values, axis=0):
    v = np.asarray(values, dtype=float)
    v = np.moveaxis(v, axis, 0)
    pad = np.zeros((1,) + v.shape[1:])
    ext = np.concatenate([pad, v, pad], axis=0)
    return np.abs(np.diff(ext, axis=0)).sum(axis=0)


def make_graded_grid(n_cells, grading=1.0, tmap=None):
    """Boundaries ``t_i = (i/N)**grading``.

    With ``grading=None`` and a map, the grading defaults to ``1/gamma`` so
    the cells near 0 shrink like the backward neutral orbit.
    """
    if grading is None:
        grading = 1.0 / tmap.gamma
    if n_cells < 1 or grading < 1:
        raise ValueError("need n_cells >= 1 and grading >= 1")
    t = (np.arange(n_cells + 1) / n_cells) ** grading
    t[0], t[-1] = 0.0, 1.0
    return t


def anchor_grid(grid, points):
    """Move the nearest interior boundary onto each anchor point."""
    g = np.array(grid, dtype=float)
    for p in sorted(points):
        if p <= 0.0 or p >= 1.0 or np.any(np.isclose(g, p, rtol=0, atol=1e-15)):
            continue
        i = int(np.argmin(np.abs(g[1:-1] - p))) + 1
        g[i] = p
    if np.any(np.diff(g) <= 0):
        raise ValueError("anchoring produced a non-increasing grid; use more cells")
    return g


def model_grid(tmap, n_cells, grading=None):
    """Graded grid with z0, z1 and the branch breakpoints as cell boundaries."""
    g = make_graded_grid(n_cells, grading, tmap)
    anchors = list(tmap.breakpoints[1:-1]) + [tmap.z0, tmap.z1]
    return anchor_grid(g, anchors)


def ulam_matrix(tmap, grid):
    """Row-stochastic Ulam matrix ``L[i, j] = |cell_i ∩ T^-1 cell_j| / |cell_i|``.

    Preimages of the cell boundaries are computed branch by branch, so cells
    straddling a breakpoint are split exactly.
    """
    grid = np.asarray(grid, dtype=float)
    rows, cols, vals = [], [], []
    for k in range(tmap.n_branches):
        a, b = tmap.branch_interval(k)
        lo, hi = tmap.branch_image(k)
        inc = tmap.is_increasing(k)
        inner_dst = grid[(grid > lo) & (grid < hi)]
        tau = np.concatenate([[lo], inner_dst, [hi]])
        pre = inverse_branch(tmap, k, inner_dst) if inner_dst.size else inner_dst
        q = np.concatenate([[a], pre, [b]]) if inc else np.concatenate([[a], pre[::-1], [b]])
        q = np.maximum.accumulate(q)
        tmid = 0.5 * (tau[1:] + tau[:-1])
        dst_of_seg = np.clip(np.searchsorted(grid, tmid) - 1, 0, len(grid) - 2)
        if not inc:
            dst_of_seg = dst_of_seg[::-1]
        src_pts = grid[(grid > a) & (grid < b)]
        pts = np.unique(np.concatenate([q, src_pts]))
        lengths = np.diff(pts)
        mids = 0.5 * (pts[1:] + pts[:-1])
        keep = lengths > 0
        lengths, mids = lengths[keep], mids[keep]
        src = np.clip(np.searchsorted(grid, mids) - 1, 0, len(grid) - 2)
        r = np.clip(np.searchsorted(q, mids, side="right") - 1, 0, len(q) - 2)
        rows.append(src)
        cols.append(dst_of_seg[r])
        vals.append(lengths)
    n = len(grid) - 1
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    L.sum_duplicates()
    rs = np.asarray(L.sum(axis=1)).ravel()
    width_err = np.max(np.abs(rs / np.diff(grid) - 1.0))
    if width_err > 1e-6:
        raise RuntimeError(f"preimage lengths miss cell widths by {width_err:.2e}")
    L = sp.diags(1.0 / rs) @ L
    return L.tocsr()


@dataclass(frozen=True)
class DensityModel:
    """Invariant density of a map on a grid, with the Ulam matrix it came from."""

    h: GridFunction
    nu_weights: np.ndarray
    ulam: sp.csr_matrix = field(repr=False)
    gamma: float
    residual: float
    iterations: int

    @property
    def grid(self):
        return self.h.grid

    def nu_mass(self, lo, hi):
        """ν-mass of the cells inside [lo, hi]."""
        c = self.h.centers
        return float(self.nu_weights[(c >= lo) & (c <= hi)].sum())

    def interpolated(self, x):
        """Piecewise-linear density through cell centers, ``x**-gamma`` below."""
        c, v = self.h.centers, self.h.values
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.interp(x, c, v)
        low = x < c[0]
        out[low] = v[0] * (np.maximum(x[low], 1e-300) / c[0]) ** (-self.gamma)
        return out

    def to_csv(self, path):
        g = self.grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_left", "cell_right", "h_value", "nu_mass"])
            for row in zip(g[:-1], g[1:], self.h.values, self.nu_weights):
                w.writerow([repr(float(x)) for x in row])


def stationary_vector(L, tol=1e-10, max_iter=100_000, x0=None, polish=True):
    """Left fixed probability vector of a row-stochastic matrix.

    Power iteration with an L1 stopping rule.  With ``polish`` the start
    vector comes from a sparse direct solve, which the iteration then has
    to confirm; this keeps per-cell relative accuracy on tiny cells that
    power iteration alone reaches only after ~N/tol steps.
    """
    n = L.shape[0]
    LT = L.T.tocsr()
    if x0 is None:
        x0 = np.full(n, 1.0 / n)
    nu = np.asarray(x0, dtype=float)
    if polish:
        A = (LT - sp.identity(n, format="csr")).tolil()
        A[0, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[0] = 1.0
        direct = spla.spsolve(A.tocsc(), rhs)
        if np.all(np.isfinite(direct)) and direct.min() > 0:
            nu = direct
    nu = nu / nu.sum()
    res = np.inf
    for it in range(1, max_iter + 1):
        nxt = LT @ nu
        nxt /= nxt.sum()
        res = float(np.abs(nxt - nu).sum())
        nu = nxt
        if res < tol:
            return nu, res, it
    raise ConvergenceError(f"no convergence after {max_iter} iterations, residual {res:.3e}")


def invariant_density(tmap, grid, tol=1e-10, max_iter=100_000, polish=True):
    """Invariant density of ``tmap`` on ``grid`` via the Ulam matrix."""
    grid = np.asarray(grid, dtype=float)
    L = ulam_matrix(tmap, grid)
    widths = np.diff(grid)
    c = 0.5 * (grid[1:] + grid[:-1])
    start = widths * c ** (-min(tmap.gamma, 0.99))
    nu, res, it = stationary_vector(L, tol, max_iter, start / start.sum(), polish)
    if np.any(nu <= 0):
        raise ConvergenceError("stationary vector has nonpositive cells")
    logger.debug("stationary vector: residual %.2e after %d iterations", res, it)
    # purely expanding maps have a bounded density: no x**-gamma profile at 0
    gamma = 0.0 if tmap.expanding_only else tmap.gamma
    return DensityModel(h=GridFunction(grid, nu / widths), nu_weights=nu, ulam=L,
                        gamma=gamma, residual=res, iterations=it)


@dataclass(frozen=True)
class SeriesExtension:
    h: np.ndarray
    points: np.ndarray
    tail_bound: np.ndarray
    n_terms: int


def density_series_extension(tmap, density, n_terms, points=None, rtol=1e-3):
    """Rebuild h on [0, z1] from its values on (z1, 1].

    Sums ``h(x) = sum_n sum_m |(v_m v_0^n)'(x)| h(v_m v_0^n x)`` over the
    member branches m, with h on (z1, 1] read from ``density``.  The tail
    beyond ``n_terms`` is bounded by extrapolating the last term with the
    decay ``(v_0^n)' ~ n^{-(1+gamma)/gamma}``.
    """
    z1 = tmap.z1
    grid = density.grid
    if points is None:
        c = density.h.centers
        points = c[c <= z1]
    x = np.asarray(points, dtype=float)
    members = tmap.members()
    hc = density.h.centers[density.h.centers > z1]
    hv = density.h.values[density.h.centers > z1]

    def h_high(y):
        return np.interp(y, hc, hv)

    a0, b0 = tmap.branch_interval(0)
    kind0, prm0 = tmap.kinds[0], tmap.params[0]
    y = x.copy()
    dy = np.ones_like(x)
    total = np.zeros_like(x)
    last = np.zeros_like(x)
    for n in range(n_terms):
        term = np.zeros_like(x)
        for m in members:
            lo, hi = tmap.branch_image(m)
            ok = (y >= lo) & (y <= hi)
            if not np.any(ok):
                continue
            vm, dvm = inverse_branch(tmap, m, y[ok], with_derivative=True)
            term[ok] += dy[ok] * dvm * h_high(vm)
        total += term
        last = term
        # advance y -> v_0(y), accumulating (v_0^n)'
        ynew = _jit.inverse_array(kind0, prm0, a0, b0, y)
        dy = dy / np.abs(tmap.derivative(0, ynew))
        y = ynew
    s = (1.0 + tmap.gamma) / tmap.gamma
    # sum_{k>N} (k/N)^{-s} <= N/(s-1)
    tail = last * n_terms / (s - 1.0)
    if np.any(tail > rtol * np.maximum(total, 1e-300)):
        warnings.warn(f"series truncated at {n_terms} terms: relative tail up to "
                      f"{np.max(tail / np.maximum(total, 1e-300)):.2e}", stacklevel=2)
    return SeriesExtension(h=total, points=x, tail_bound=tail, n_terms=n_terms)
