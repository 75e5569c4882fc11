"""Generalized Pomeau-Manneville interval maps.

A map is a finite list of monotone branches on ``0 = y_0 < ... < y_d = 1``,
the first of which has a neutral fixed point at 0.  Branch formulas come
from a small closed family so that they can be evaluated inside compiled
loops and differentiated exactly:

``neutral``   ``T(x) = s + x + c x**(1+g)``
``affine``    ``T(x) = a x + b``
``power``     ``T(x) = s + c (x - x0)**q``
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import _jit

__all__ = ["GpmMap", "ZSequence", "MapDomainError", "ValidationReport",
           "make_lsv", "make_pm", "make_doubling", "map_from_config",
           "inverse_branch", "z_sequence", "validate_gpm"]

_KIND_CODES = {"neutral": _jit.NEUTRAL, "lsv-neutral": _jit.NEUTRAL,
               "affine": _jit.AFFINE, "power": _jit.POWER}
_KIND_NAMES = {_jit.NEUTRAL: "neutral", _jit.AFFINE: "affine",
               _jit.POWER: "power"}


class MapDomainError(ValueError):
    """Raised for parameters or points outside a map's domain."""


@dataclass(frozen=True)
class GpmMap:
    """Piecewise monotone map of [0, 1] with a neutral fixed point at 0.

    Parameters
    ----------
    gamma : float
        Intermittency parameter in (0, 1).
    breakpoints : array
        Branch partition ``0 = y_0 < y_1 < ... < y_d = 1``.
    kinds : array of int
        Branch family code per branch (see module docstring).
    params : (d, 4) array
        Branch coefficients, laid out as in ``_jit.branch_value``.
    z0 : float
        Reference boundary in (0, y_1).
    """

    gamma: float
    breakpoints: np.ndarray
    kinds: np.ndarray
    params: np.ndarray
    z0: float
    name: str = "custom"
    expanding_only: bool = field(default=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        kinds = np.asarray(self.kinds, dtype=np.int64)
        params = np.zeros((len(kinds), 4))
        raw = np.asarray(self.params, dtype=float)
        params[:, :raw.shape[1]] = raw
        if bp[0] != 0.0 or bp[-1] != 1.0 or np.any(np.diff(bp) <= 0):
            raise MapDomainError(f"breakpoints must increase from 0 to 1, got {bp}")
        if len(kinds) != len(bp) - 1:
            raise MapDomainError("need one branch per partition interval")
        for arr in (bp, kinds, params):
            arr.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "params", params)
        if not self.expanding_only and not 0.0 < self.gamma < 1.0:
            raise MapDomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.z0 < bp[1]:
            raise MapDomainError(f"z0 must lie in (0, y_1={bp[1]}), got {self.z0}")

    @property
    def n_branches(self):
        return len(self.kinds)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = _jit.forward_array(self.breakpoints, self.kinds, self.params,
                                 np.atleast_1d(x).ravel())
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def branch(self, k, x):
        """Value of the extended branch ``T_(k)`` at ``x``."""
        x = np.asarray(x, dtype=float)
        return _jit.branch_value(self.kinds[k], self.params[k], x) if x.ndim == 0 \
            else np.array([_jit.branch_value(self.kinds[k], self.params[k], v)
                           for v in x.ravel()]).reshape(x.shape)

    def derivative(self, k, x):
        x = np.asarray(x, dtype=float)
        f = np.vectorize(lambda v: _jit.branch_deriv(self.kinds[k], self.params[k], v))
        return float(f(x)) if x.ndim == 0 else f(x)

    def second_derivative(self, k, x):
        x = np.asarray(x, dtype=float)
        f = np.vectorize(lambda v: _jit.branch_deriv2(self.kinds[k], self.params[k], v))
        return float(f(x)) if x.ndim == 0 else f(x)

    def branch_interval(self, k):
        return float(self.breakpoints[k]), float(self.breakpoints[k + 1])

    def branch_image(self, k):
        """Closed image interval ``T_(k)(I_k)`` as (low, high)."""
        a, b = self.branch_interval(k)
        ta = _jit.branch_value(self.kinds[k], self.params[k], a)
        tb = _jit.branch_value(self.kinds[k], self.params[k], b)
        return (min(ta, tb), max(ta, tb))

    def is_increasing(self, k):
        a, b = self.branch_interval(k)
        return (_jit.branch_value(self.kinds[k], self.params[k], b)
                > _jit.branch_value(self.kinds[k], self.params[k], a))

    def members(self):
        """Branch indices m >= 1 with 0 in the image of branch m."""
        out = []
        for m in range(1, self.n_branches):
            lo, hi = self.branch_image(m)
            if lo <= 1e-14 and hi > 0.0:
                out.append(m)
        return out

    @property
    def z1(self):
        return inverse_branch(self, 0, self.z0)

    def describe(self):
        return {"name": self.name, "gamma": self.gamma, "z0": self.z0,
                "breakpoints": self.breakpoints.tolist(),
                "branches": [{"kind": _KIND_NAMES[int(k)], "params": p.tolist()}
                             for k, p in zip(self.kinds, self.params)]}


def make_lsv(gamma, z0=None):
    """Liverani-Saussol-Vaienti map ``x(1 + 2^g x^g)`` on [0, 1/2], ``2x - 1`` after."""
    if not 0.0 < gamma < 1.0:
        raise MapDomainError(f"gamma must lie in (0, 1), got {gamma}")
    return GpmMap(gamma=gamma, breakpoints=[0.0, 0.5, 1.0],
                  kinds=[_jit.NEUTRAL, _jit.AFFINE],
                  params=[[2.0 ** gamma, gamma, 0.0, 0.0], [2.0, -1.0, 0.0, 0.0]],
                  z0=0.25 if z0 is None else z0, name="lsv")


def make_pm(gamma, z0=None):
    """Original Pomeau-Manneville map ``x + x^(1+g) mod 1``."""
    if not 0.0 < gamma < 1.0:
        raise MapDomainError(f"gamma must lie in (0, 1), got {gamma}")
    # y1 solves y + y^(1+g) = 1
    y1 = 0.6
    for _ in range(100):
        y1 -= (y1 + y1 ** (1 + gamma) - 1) / (1 + (1 + gamma) * y1 ** gamma)
    return GpmMap(gamma=gamma, breakpoints=[0.0, y1, 1.0],
                  kinds=[_jit.NEUTRAL, _jit.NEUTRAL],
                  params=[[1.0, gamma, 0.0, 0.0], [1.0, gamma, -1.0, 0.0]],
                  z0=y1 / 2 if z0 is None else z0, name="pm")


def make_doubling(z0=0.25):
    """The doubling map, used as an exactly solvable reference (h = 1)."""
    return GpmMap(gamma=0.5, breakpoints=[0.0, 0.5, 1.0],
                  kinds=[_jit.AFFINE, _jit.AFFINE],
                  params=[[2.0, 0.0], [2.0, -1.0]], z0=z0, name="doubling",
                  expanding_only=True)


def map_from_config(cfg):
    """Build a map from a preset name or a declarative branch list.

    ``cfg`` is either ``{"map": "lsv"|"pm"|"doubling", "gamma": g, "z0": ...}``
    or ``{"gamma": g, "breakpoints": [...], "branches": [{"kind": "affine",
    "params": [...]}, ...], "z0": ...}``.
    """
    name = cfg.get("map", "custom")
    z0 = cfg.get("z0")
    if name == "lsv":
        return make_lsv(float(cfg["gamma"]), z0)
    if name == "pm":
        return make_pm(float(cfg["gamma"]), z0)
    if name == "doubling":
        return make_doubling(0.25 if z0 is None else z0)
    try:
        kinds = [_KIND_CODES[b["kind"]] for b in cfg["branches"]]
    except KeyError as exc:
        raise MapDomainError(f"unknown map or branch kind: {exc}") from None
    bp = cfg["breakpoints"]
    return GpmMap(gamma=float(cfg["gamma"]), breakpoints=bp, kinds=kinds,
                  params=[list(b["params"]) + [0.0] * (4 - len(b["params"]))
                          for b in cfg["branches"]],
                  z0=bp[1] / 2 if z0 is None else z0, name=name)


def inverse_branch(tmap, k, x, with_derivative=False):
    """Preimage of ``x`` under branch ``k``.

    Returns ``v_k(x)`` (and ``|v_k'(x)| = 1/|T_(k)'(v_k x)|`` when
    ``with_derivative``).  Accepts scalars or arrays.
    """
    lo, hi = tmap.branch_image(k)
    xa = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    tol = 1e-12 * max(1.0, abs(hi))
    bad = (xa < lo - tol) | (xa > hi + tol)
    if np.any(bad):
        raise MapDomainError(
            f"point {xa[bad][0]!r} outside image [{lo}, {hi}] of branch {k}")
    a, b = tmap.branch_interval(k)
    v = _jit.inverse_array(tmap.kinds[k], tmap.params[k], a, b, np.clip(xa, lo, hi))
    scalar = np.ndim(x) == 0
    if with_derivative:
        dv = 1.0 / np.abs(tmap.derivative(k, v))
        if scalar:
            return float(v[0]), float(dv[0])
        return v.reshape(np.shape(x)), dv.reshape(np.shape(x))
    return float(v[0]) if scalar else v.reshape(np.shape(x))


@dataclass(frozen=True)
class ZSequence:
    """Backward orbit ``z_0 > z_1 > ... > z_N`` of z0 under the neutral branch."""

    values: np.ndarray
    gamma: float

    @property
    def widths(self):
        """Lebesgue measure of ``J_n = (z_{n+1}, z_n]``."""
        return self.values[:-1] - self.values[1:]

    def ratio(self, n):
        """``z_n / z_{2n}``; tends to ``2**(1/gamma)``."""
        return self.values[n] / self.values[2 * n]


def z_sequence(tmap, N):
    """Iterate the neutral inverse branch N times from ``tmap.z0``."""
    if N < 0:
        raise MapDomainError("N must be nonnegative")
    z = np.empty(N + 1)
    z[0] = tmap.z0
    a, b = tmap.branch_interval(0)
    kind, prm = tmap.kinds[0], tmap.params[0]
    for n in range(1, N + 1):
        z[n] = _jit.inverse(kind, prm, a, b, z[n - 1])
    return ZSequence(values=z, gamma=tmap.gamma)


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self):
        return all(c["status"] in ("pass", "assumed") for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)


def validate_gpm(tmap, n_grid=512, n_geom=40):
    """Check the GPM conditions that are decidable on finite grids.

    Every check reports a measured margin; topological transitivity is
    reported as assumed.
    """
    checks = []
    # expansion |T'_(k)| > 1 for k >= 1
    for k in range(1, tmap.n_branches):
        a, b = tmap.branch_interval(k)
        xs = np.linspace(a, b, n_grid)
        d = np.abs(tmap.derivative(k, xs))
        margin = float(d.min() - 1.0)
        checks.append({"name": f"expansion[{k}]", "status": "pass" if margin > 0 else "fail",
                       "margin": margin, "z0": tmap.z0})
    # neutral branch: T(0) = 0, T'(0) = 1, T'' ~ c x^(g - 1)
    t0 = float(tmap.branch(0, 0.0))
    d0 = float(tmap.derivative(0, 0.0))
    checks.append({"name": "neutral_fixed_point", "status": "pass" if abs(t0) < 1e-14 else "fail",
                   "margin": abs(t0)})
    checks.append({"name": "neutral_slope_one", "status": "pass" if abs(d0 - 1) < 1e-12 else "fail",
                   "margin": abs(d0 - 1)})
    a, b = tmap.branch_interval(0)
    inner = np.linspace(a, b, n_grid)[1:]
    margin = float(np.abs(tmap.derivative(0, inner)).min() - 1.0)
    checks.append({"name": "neutral_expanding_away_from_0",
                   "status": "pass" if margin > 0 else "fail", "margin": margin})
    xs = b * 0.5 ** np.arange(2, n_geom + 2)
    ratio = _fd_second_derivative(tmap, xs) / xs ** (tmap.gamma - 1.0)
    spread = float(ratio.max() / ratio.min()) if ratio.min() > 0 else math.inf
    checks.append({"name": "neutral_curvature", "status": "pass" if spread < 4.0 else "fail",
                   "margin": spread, "ratio_min": float(ratio.min()),
                   "ratio_max": float(ratio.max())})
    # v_0' nonincreasing on (0, z0]
    zs = np.linspace(tmap.z0, 0.0, n_grid, endpoint=False)[::-1]
    _, dv = inverse_branch(tmap, 0, zs, with_derivative=True)
    worst = float(np.max(np.diff(dv), initial=-np.inf))
    checks.append({"name": "v0_derivative_nonincreasing",
                   "status": "pass" if worst <= 1e-13 else "fail", "margin": -worst,
                   "z0": tmap.z0})
    members = tmap.members()
    checks.append({"name": "members_nonempty", "status": "pass" if members else "fail",
                   "members": members})
    # z0 small enough: images of non-member branches avoid [0, z0]
    bad = [k for k in range(1, tmap.n_branches) if k not in members
           and tmap.branch_image(k)[0] <= tmap.z0]
    checks.append({"name": "z0_clear_of_nonmembers", "status": "fail" if bad else "pass",
                   "branches": bad, "z0": tmap.z0})
    checks.append({"name": "topological_transitivity", "status": "assumed"})
    return ValidationReport(checks)


def _fd_second_derivative(tmap, xs):
    h = xs * 1e-3
    f = lambda v: np.array([tmap.branch(0, float(u)) for u in v])
    return (f(xs + h) - 2 * f(xs) + f(xs - h)) / h ** 2
