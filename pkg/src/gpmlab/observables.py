"""Observables, tail functions and the moment conditions they must satisfy.

A tail function ``H`` is paired with its càdlàg inverse ``Q(u) = inf{t >= 0 :
H(t) <= u}``.  Three analytic families are supported so that finiteness of
the moment integrals can be decided by exponent algebra:

* ``power``     ``H(x) = min(1, x**-q)``
* ``powerlog``  ``H(x) = min(1, x**-q (1 + ln max(x, 1))**-b)``
* ``indicator`` ``H = 1_{[0, M)}`` (bounded observables)

Observables are finite weighted sums of monotone pieces, each supported on
an interval ``(lo, hi]``.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import integrate, optimize

from . import _jit

__all__ = ["TailSpec", "Piece", "ObservableSpec", "ObservableIntegrabilityError",
           "ConditionError", "tail_of_observable", "quantile_of_observable",
           "check_condition", "change_of_variables_identity", "q_integral",
           "parse_tail", "parse_observable", "PIECE_FAMILIES"]

_QUAD = dict(epsabs=0.0, epsrel=1e-11, limit=400)


class ObservableIntegrabilityError(ValueError):
    pass


class ConditionError(ValueError):
    """Moment integral diverges or parameters leave the admissible domain."""


# ---------------------------------------------------------------- tails

@dataclass(frozen=True)
class TailSpec:
    family: str
    q: float = 1.0
    b: float = 0.0
    M: float = 1.0

    def __post_init__(self):
        if self.family not in ("power", "powerlog", "indicator"):
            raise ValueError(f"unknown tail family {self.family!r}")
        if self.family != "indicator" and self.q <= 0:
            raise ValueError("tail exponent q must be positive")
        if self.family == "indicator" and self.M <= 0:
            raise ValueError("indicator cutoff M must be positive")

    @classmethod
    def power(cls, q):
        return cls("power", q=q)

    @classmethod
    def powerlog(cls, q, b):
        return cls("powerlog", q=q, b=b)

    @classmethod
    def indicator(cls, M=1.0):
        return cls("indicator", M=M)

    @property
    def bounded(self):
        return self.family == "indicator"

    def H(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "indicator":
            return np.where(x < self.M, 1.0, 0.0)
        xs = np.maximum(x, 1.0)
        val = xs ** (-self.q)
        if self.family == "powerlog":
            val = val * (1.0 + np.log(xs)) ** (-self.b)
        return np.where(x <= 1.0, 1.0, val)

    def _log_H(self, s):
        # ln H(e^s) for s >= 0
        return -self.q * s - self.b * math.log1p(s)

    def Q(self, u):
        """Quantile function; ``Q(u) = 0`` for ``u >= 1``."""
        u = np.asarray(u, dtype=float)
        if self.family == "indicator":
            return np.where(u < 1.0, self.M, 0.0)
        if self.family == "power":
            with np.errstate(divide="ignore"):
                return np.where(u < 1.0, np.maximum(u, 0.0) ** (-1.0 / self.q), 0.0)
        flat = np.atleast_1d(u)
        out = np.array([self._q_powerlog(v) for v in flat])
        return out.reshape(u.shape)

    def _q_powerlog(self, u):
        if u >= 1.0:
            return 0.0
        if u <= 0.0:
            return math.inf
        return math.exp(self.log_Q(math.log(u)))

    def log_Q(self, lu):
        """``ln Q(e**lu)`` for ``lu < 0`` (powerlog family), solved in log space."""
        if self.family == "power":
            return -lu / self.q
        if self.family == "indicator":
            return math.log(self.M)
        hi = -lu / self.q + 1.0
        while self._log_H(hi) > lu:
            hi *= 2.0
        return optimize.brentq(lambda s: self._log_H(s) - lu, 0.0, hi, xtol=1e-300, rtol=1e-15)

    def q_exponent(self):
        """Exponent e with ``Q(u) ~ u**-e`` at 0 (0 for bounded tails)."""
        return 0.0 if self.family == "indicator" else 1.0 / self.q

    def describe(self):
        if self.family == "indicator":
            return {"family": "indicator", "M": self.M}
        d = {"family": self.family, "q": self.q}
        if self.family == "powerlog":
            d["b"] = self.b
        return d


def parse_tail(text):
    """``power:q=4``, ``powerlog:q=3,b=2`` or ``indicator:M=1``."""
    name, _, rest = text.partition(":")
    kw = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        kw[k.strip()] = float(v)
    return TailSpec(name.strip(), **kw)


# ------------------------------------------------------ quantile integrals

def _quad(fn, a, b, **kw):
    opts = dict(_QUAD)
    opts.update(kw)
    val, err = integrate.quad(fn, a, b, **opts)
    return val, err


def q_integral(tail, a, m, weight_exp=0.0):
    """``∫_0^a u**-weight_exp Q(u)**m du`` for ``0 <= a <= 1``.

    The singularity at 0 is removed by ``u = v**s`` with ``s`` taken from the
    local exponent of the integrand.  Returns ``inf`` when it diverges.
    """
    a = float(min(max(a, 0.0), 1.0))
    if a == 0.0:
        return 0.0
    if tail.family == "indicator":
        if weight_exp >= 1.0:
            return math.inf
        return tail.M ** m * a ** (1.0 - weight_exp) / (1.0 - weight_exp)
    e = weight_exp + m * tail.q_exponent()
    logexp = m * tail.b / tail.q if tail.family == "powerlog" else 0.0
    if not _q_side_finite(e, logexp):
        return math.inf
    if tail.family == "power":
        return a ** (1.0 - e) / (1.0 - e)
    return _log_substituted(lambda lu: -weight_exp * lu + m * tail.log_Q(lu), a)


def _log_substituted(log_fn, a):
    """``∫_0^a exp(log_fn(ln u)) du`` through ``u = a e^-w``.

    This turns a power-law singularity at 0, including the logarithmically
    damped borderline ``u**-1 (ln 1/u)**-c``, into a decaying tail on
    ``[0, inf)``; the integrand is assembled in log space so it never
    overflows.
    """
    la = math.log(a)

    def integrand(w):
        lu = la - w
        return math.exp(log_fn(lu) + lu)

    val, _ = _quad(integrand, 0.0, math.inf)
    return val


def _q_side_finite(e, log_exp):
    """∫_0 u**-e (ln 1/u)**-log_exp du < inf."""
    if abs(e - 1.0) <= 1e-12:
        return log_exp > 1.0
    return e < 1.0


def _h_side_finite(tail, p, kappa):
    """∫^inf x**(p-1) H(x)**kappa dx < inf, from the descriptor exponents."""
    if tail.family == "indicator":
        return True
    lead = tail.q * kappa
    if not np.isclose(lead, p, rtol=1e-12, atol=0.0):
        return lead > p
    return tail.family == "powerlog" and tail.b * kappa > 1.0


def _h_moment(tail, p, kappa):
    """∫_0^inf x**(p-1) H(x)**kappa dx (finite case)."""
    if tail.family == "indicator":
        return tail.M ** p / p
    # H = 1 on [0, 1]; on [1, inf) substitute x = e^s
    def integrand(s):
        return math.exp(p * s + kappa * tail._log_H(s))

    val, _ = _quad(integrand, 0.0, math.inf)
    return 1.0 / p + val


def _validate_gp(gamma, p):
    if not 0.0 < gamma < 1.0:
        raise ConditionError("gamma must lie in (0, 1)")
    if not 1.0 < p <= 2.0:
        raise ConditionError("p must lie in (1, 2]")
    if gamma * p >= 1.0:
        raise ConditionError("need gamma < 1/p")


def check_condition(tail, gamma, p=2.0, which="rate"):
    """Moment conditions on ``H`` for the LIL (``lil``), the strong SLLN rate
    (``rate``) and the weak rate (``rate_weak``).

    ``lil`` and ``rate``: ``∫ x**(p-1) H(x)**κ dx`` with ``κ = (1-pγ)/(1-γ)``
    (``p = 2`` for ``lil``).  ``rate_weak``: ``sup_x x**p H(x)**κ``.
    """
    if which == "lil":
        p = 2.0
    _validate_gp(gamma, p)
    kappa = (1.0 - p * gamma) / (1.0 - gamma)
    rec = {"condition": which, "parameters": {"gamma": gamma, "p": p, "kappa": kappa,
                                              "tail": tail.describe()}}
    if which in ("lil", "rate"):
        holds = _h_side_finite(tail, p, kappa)
        val = _h_moment(tail, p, kappa) if holds else math.inf
    elif which == "rate_weak":
        if tail.family == "indicator":
            holds, val = True, tail.M ** p
        else:
            lead = tail.q * kappa
            if np.isclose(lead, p, rtol=1e-12, atol=0.0):
                holds = tail.family == "power" or tail.b >= 0
            else:
                holds = lead > p
            if holds:
                xs = np.logspace(0, 12, 4000)
                val = float(np.max(xs ** p * tail.H(xs) ** kappa))
            else:
                val = math.inf
    else:
        raise ValueError(f"unknown condition {which!r}")
    rec.update(holds=bool(holds), value=float(val))
    return rec


def change_of_variables_identity(tail, gamma, p):
    """Both sides of ``∫_0^1 u**-β Q**p du = (1/κ) p ∫_0^inf x**(p-1) H**κ dx``.

    ``β = γ(p-1)/(1-γ)`` and ``κ = 1 - β = (1-pγ)/(1-γ)``.  The left side is
    integrated in the quantile variable, the right side in the tail variable.
    """
    _validate_gp(gamma, p)
    beta = gamma * (p - 1.0) / (1.0 - gamma)
    kappa = (1.0 - p * gamma) / (1.0 - gamma)
    if not _h_side_finite(tail, p, kappa):
        raise ConditionError("moment integral diverges")
    lhs = _q_side_integral(tail, beta, p)
    rhs = p * _h_moment(tail, p, kappa) / kappa
    return {"lhs": lhs, "rhs": rhs, "relative_gap": abs(lhs - rhs) / abs(lhs)}


def _q_side_integral(tail, beta, p):
    if tail.family == "indicator":
        return tail.M ** p / (1.0 - beta)
    e = beta + p / tail.q
    logexp = p * tail.b / tail.q if tail.family == "powerlog" else 0.0
    if not _q_side_finite(e, logexp):
        return math.inf
    if tail.family == "power":
        # u = v**s turns u**-e into a constant integrand
        s = 1.0 / (1.0 - e)

        def integrand(v):
            if v <= 0.0:
                return s
            u = v ** s
            if u == 0.0:
                return s
            return s * v ** (s - 1.0) * u ** (-beta) * float(tail.Q(u)) ** p

        return _quad(integrand, 0.0, 1.0)[0]
    return _log_substituted(lambda lu: -beta * lu + p * tail.log_Q(lu), 1.0)


# ----------------------------------------------------------- observables

PIECE_FAMILIES = {"pow0": _jit.OBS_POW0, "pow1": _jit.OBS_POW1, "abspow": _jit.OBS_ABSPOW,
                  "logabs": _jit.OBS_LOGABS, "affine": _jit.OBS_AFFINE,
                  "indicator": _jit.OBS_INDICATOR}


@dataclass(frozen=True)
class Piece:
    """One monotone piece ``weight * f(x)`` on ``(lo, hi]`` (``[0, hi]`` if ``lo = 0``)."""

    family: str
    weight: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    a: float = 0.0
    x0: float = 0.0
    c0: float = 0.0
    c1: float = 0.0

    def __post_init__(self):
        if self.family not in PIECE_FAMILIES:
            raise ValueError(f"unknown piece family {self.family!r}")
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise ValueError("piece interval must satisfy 0 <= lo < hi <= 1")
        if self.family in ("abspow", "logabs") and self.lo < self.x0 < self.hi:
            raise ValueError("singular point inside the piece interval; split the piece")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        f = self.family
        with np.errstate(divide="ignore", invalid="ignore"):
            if f == "pow0":
                v = x ** (-self.a)
            elif f == "pow1":
                v = (1.0 - x) ** (-self.a)
            elif f == "abspow":
                v = np.abs(x - self.x0) ** (-self.a)
            elif f == "logabs":
                v = np.log(np.abs(x - self.x0))
            elif f == "affine":
                v = self.c0 + self.c1 * x
            else:
                v = np.ones_like(x)
        inside = ((x > self.lo) & (x <= self.hi)) | ((x == self.lo) & (self.lo == 0.0))
        return np.where(inside, self.weight * v, 0.0)

    def antiderivative(self, x):
        """Primitive of the unweighted piece formula (no support restriction)."""
        x = np.asarray(x, dtype=float)
        f, a = self.family, self.a
        with np.errstate(divide="ignore", invalid="ignore"):
            if f == "pow0":
                return x ** (1.0 - a) / (1.0 - a)
            if f == "pow1":
                return -((1.0 - x) ** (1.0 - a)) / (1.0 - a)
            if f == "abspow":
                d = x - self.x0
                return np.sign(d) * np.abs(d) ** (1.0 - a) / (1.0 - a)
            if f == "logabs":
                d = x - self.x0
                return np.where(d == 0.0, 0.0, d * np.log(np.abs(d)) - d)
            if f == "affine":
                return self.c0 * x + 0.5 * self.c1 * x * x
            return x

    def singular_point(self):
        if self.family == "pow0":
            return 0.0
        if self.family == "pow1":
            return 1.0
        if self.family in ("abspow", "logabs"):
            return self.x0
        return None


@dataclass(frozen=True)
class ObservableSpec:
    """``f = Σ w_ℓ f_ℓ``.  The normalized weights ``w_ℓ / scale`` satisfy
    ``Σ |w_ℓ| / scale <= 1``; theorem constants refer to ``f / scale``.

    A finite piece list blows up at finitely many points only; members of
    the monotone-combination class with infinitely many singularities are
    not representable.
    """

    pieces: tuple
    name: str = ""
    okinds: np.ndarray = field(init=False, repr=False, compare=False)
    ocoef: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("observable needs at least one piece")
        object.__setattr__(self, "pieces", pieces)
        ok = np.array([PIECE_FAMILIES[p.family] for p in pieces], dtype=np.int64)
        oc = np.array([[p.weight, p.lo, p.hi, p.a, p.x0, p.c0, p.c1] for p in pieces],
                      dtype=float)
        ok.setflags(write=False)
        oc.setflags(write=False)
        object.__setattr__(self, "okinds", ok)
        object.__setattr__(self, "ocoef", oc)

    @classmethod
    def indicator(cls, lo=0.0, hi=0.5):
        return cls((Piece("indicator", 1.0, lo, hi),), name=f"1[{lo},{hi}]")

    @classmethod
    def power_at_zero(cls, a, weight=1.0):
        return cls((Piece("pow0", weight, 0.0, 1.0, a=a),), name=f"x^-{a:g}")

    @classmethod
    def constant(cls, c=1.0):
        return cls((Piece("indicator", c, 0.0, 1.0),), name=f"const{c:g}")

    @property
    def scale(self):
        return max(1.0, float(np.sum(np.abs(self.ocoef[:, 0]))))

    @property
    def normalized_weights(self):
        return self.ocoef[:, 0] / self.scale

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(np.atleast_1d(x).ravel())
        return _jit.obs_array(self.okinds, self.ocoef, flat).reshape(x.shape)

    def check_integrable(self, gamma):
        for p in self.pieces:
            s = p.singular_point()
            if s is None or p.family == "logabs":
                continue
            if not (p.lo <= s <= p.hi):
                continue
            limit = 1.0 - gamma if s == 0.0 else 1.0
            if p.a >= limit:
                raise ObservableIntegrabilityError(
                    f"{p.family} piece with exponent {p.a} is not ν-integrable: the "
                    f"density behaves like x^-{gamma:g} near 0, so the exponent must be "
                    f"below {limit:g}")

    def cell_integrals(self, grid):
        """``∫_cell f dx`` for every cell of ``grid`` (exact primitives)."""
        grid = np.asarray(grid, dtype=float)
        out = np.zeros(len(grid) - 1)
        for p in self.pieces:
            a = np.clip(grid[:-1], p.lo, p.hi)
            b = np.clip(grid[1:], p.lo, p.hi)
            live = b > a
            if not np.any(live):
                continue
            Fa = p.antiderivative(a[live])
            Fb = p.antiderivative(b[live])
            out[live] += p.weight * (Fb - Fa)
        return out

    def cell_averages(self, grid):
        return self.cell_integrals(grid) / np.diff(grid)

    def nu_mean(self, density):
        """ν(f) against the piecewise-constant density of ``density``."""
        self.check_integrable(density.gamma)
        return float(np.dot(density.h.values, self.cell_integrals(density.grid)))

    def describe(self):
        return {"name": self.name, "pieces": [p.__dict__ for p in self.pieces]}

    def to_json(self):
        return json.dumps(self.describe())


def parse_observable(text):
    """Parse ``indicator:lo=0,hi=0.5``, ``pow0:a=0.25`` and the like.

    Several pieces may be joined with ``+``.
    """
    pieces = []
    for chunk in text.split("+"):
        name, _, rest = chunk.strip().partition(":")
        kw = {}
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            kw[k.strip()] = float(v)
        pieces.append(Piece(name.strip(), **kw))
    return ObservableSpec(tuple(pieces), name=text)


# ------------------------------------------------------------ tail of f

def _nu_cdf(density, x):
    """ν([0, x]) with h constant per cell except in the first cell, where the
    mass follows the ``x**-gamma`` profile of the density at 0."""
    grid = density.grid
    cum = np.concatenate([[0.0], np.cumsum(density.nu_weights)])
    x = float(min(max(x, 0.0), 1.0))
    i = min(int(np.searchsorted(grid, x, side="right")) - 1, len(grid) - 2)
    frac = (x - grid[i]) / (grid[i + 1] - grid[i])
    if i == 0:
        frac = frac ** (1.0 - density.gamma)
    return float(cum[i] + frac * density.nu_weights[i])


def _mass_of_intervals(density, intervals):
    return sum(max(_nu_cdf(density, hi) - _nu_cdf(density, lo), 0.0)
               for lo, hi in intervals)


def _level_set(piece, t):
    """Sub-intervals of the piece support where ``|weight * f| > t``."""
    lo, hi = piece.lo, piece.hi
    g = lambda x: abs(float(piece.value(np.array([x]))[0]))
    # monotone piece: |f| is monotone, or monotone on both sides of one zero
    # uniform samples plus geometric clustering at both ends, where pieces blow up
    off = (hi - lo) * np.logspace(-300, -1, 400)
    xs = np.unique(np.concatenate([np.linspace(lo, hi, 257), lo + off, hi - off]))
    xs = xs[(xs > lo) & (xs < hi) | (xs == hi)]
    xs = np.concatenate([[lo], xs]) if piece.singular_point() != lo else xs
    vals = np.abs(piece.value(xs))
    above = vals > t
    out = []
    i = 0
    while i < len(xs) - 1:
        if above[i] or above[i + 1]:
            j = i
            while j < len(xs) - 1 and (above[j] or above[j + 1]):
                j += 1
            left = xs[i] if above[i] else optimize.brentq(lambda x: g(x) - t, xs[i], xs[i + 1],
                                                          xtol=1e-15)
            right = xs[j] if above[j] else optimize.brentq(lambda x: g(x) - t, xs[j - 1], xs[j],
                                                           xtol=1e-15)
            if i == 0 and above[0]:
                left = lo
            out.append((left, right))
            i = j
        else:
            i += 1
    return out


def tail_of_observable(f, density, t_grid):
    """``ν(|f| > t)`` on ``t_grid``.

    Non-overlapping pieces are handled exactly by inverting each monotone
    piece; overlapping pieces fall back to 64-point sub-cell sampling.
    """
    f.check_integrable(density.gamma)
    t_grid = np.asarray(t_grid, dtype=float)
    ivs = sorted((p.lo, p.hi) for p in f.pieces)
    disjoint = all(ivs[i][1] <= ivs[i + 1][0] for i in range(len(ivs) - 1))
    out = np.empty_like(t_grid)
    if disjoint:
        for k, t in enumerate(t_grid):
            out[k] = sum(_mass_of_intervals(density, _level_set(p, t)) for p in f.pieces)
        return out
    grid = density.grid
    sub = (np.arange(64) + 0.5) / 64
    xs = grid[:-1, None] + np.diff(grid)[:, None] * sub[None, :]
    vals = np.abs(f(xs))
    w = density.nu_weights[:, None] / 64.0
    for k, t in enumerate(t_grid):
        out[k] = float(np.sum(w * (vals > t)))
    return out


def quantile_of_observable(f, density, u_grid, t_max=1e12):
    """``Q_{|f|}(u) = inf{t >= 0 : ν(|f| > t) <= u}`` by bisection in ``t``."""
    u_grid = np.asarray(u_grid, dtype=float)
    out = np.empty_like(u_grid)
    for k, u in enumerate(u_grid):
        if tail_of_observable(f, density, [0.0])[0] <= u:
            out[k] = 0.0
            continue
        lo, hi = 0.0, 1.0
        while tail_of_observable(f, density, [hi])[0] > u and hi < t_max:
            lo, hi = hi, hi * 4.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if tail_of_observable(f, density, [mid])[0] > u:
                lo = mid
            else:
                hi = mid
        out[k] = hi
    return out


def in_class(f, tail, density, t_grid):
    """Membership ``ν(|f/scale| > t) <= H(t)`` on ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    emp = tail_of_observable(f, density, t_grid * f.scale)
    return bool(np.all(emp <= tail.H(t_grid) + 1e-12))


def extrapolated_nu_mean(f, tmap, n_cells=(1000, 4000, 16000), grading=None):
    """ν(f) extrapolated in the grid size from three nested Ulam densities.

    The discretization error of ν(f) behaves like ``C N**-r``; three levels
    with a common refinement factor determine ``r`` and remove the leading
    term.  Falls back to the finest level if the differences are not
    geometric.  Returns ``(mean, {N: mean_N}, r)``.
    """
    from .density import invariant_density, model_grid

    vals = [f.nu_mean(invariant_density(tmap, model_grid(tmap, n, grading)))
            for n in n_cells]
    a, b, c = vals
    levels = dict(zip(n_cells, vals))
    if (b - a) * (c - b) <= 0 or c == b:
        return c, levels, float("nan")
    ratio = (b - a) / (c - b)
    if ratio <= 1.0:
        return c, levels, float("nan")
    rate = math.log(ratio) / math.log(n_cells[1] / n_cells[0])
    return c + (c - b) / (ratio - 1.0), levels, rate
