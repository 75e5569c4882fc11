"""Compiled inner loops shared by the map, density and simulation modules.

Branches and observables are passed around as flat arrays so that the same
kernels serve every preset and every user-configured map:

* branch ``kind`` codes: ``NEUTRAL`` (``s + x + c*x**(1+g)``), ``AFFINE``
  (``a*x + b``) and ``POWER`` (``s + c*(x - x0)**q``);
* observable piece codes listed under ``OBS_*``.
"""
import math

import numba
import numpy as np

NEUTRAL = 0
AFFINE = 1
POWER = 2

OBS_POW0 = 0      # x**-a
OBS_POW1 = 1      # (1 - x)**-a
OBS_ABSPOW = 2    # |x - x0|**-a
OBS_LOGABS = 3    # ln|x - x0|
OBS_AFFINE = 4    # c0 + c1*x
OBS_INDICATOR = 5

_EPS = 2.220446049250313e-16

jit = numba.njit(cache=True, nogil=True)


@jit
def branch_value(kind, prm, x):
    if kind == NEUTRAL:
        return prm[2] + x + prm[0] * x ** (1.0 + prm[1])
    elif kind == AFFINE:
        return prm[0] * x + prm[1]
    else:
        return prm[0] + prm[1] * (x - prm[2]) ** prm[3]


@jit
def branch_deriv(kind, prm, x):
    if kind == NEUTRAL:
        return 1.0 + prm[0] * (1.0 + prm[1]) * x ** prm[1]
    elif kind == AFFINE:
        return prm[0]
    else:
        return prm[1] * prm[3] * (x - prm[2]) ** (prm[3] - 1.0)


@jit
def branch_deriv2(kind, prm, x):
    if kind == NEUTRAL:
        return prm[0] * (1.0 + prm[1]) * prm[1] * x ** (prm[1] - 1.0)
    elif kind == AFFINE:
        return 0.0
    else:
        q = prm[3]
        return prm[1] * q * (q - 1.0) * (x - prm[2]) ** (q - 2.0)


@jit
def branch_index(breaks, x):
    # right-closed branches (y_k, y_{k+1}], with 0 attached to branch 0
    k = np.searchsorted(breaks, x) - 1
    if k < 0:
        k = 0
    if k > breaks.shape[0] - 2:
        k = breaks.shape[0] - 2
    return k


@jit
def forward(breaks, kinds, params, x):
    k = branch_index(breaks, x)
    y = branch_value(kinds[k], params[k], x)
    if y < 0.0:
        y = 0.0
    elif y > 1.0:
        y = 1.0
    return y


@jit
def inverse(kind, prm, lo, hi, y):
    """Solve T_(k)(x) = y for x in [lo, hi].

    Closed forms for affine and power branches; safeguarded Newton with a
    bisection fallback for the neutral family.
    """
    if kind == AFFINE:
        x = (y - prm[1]) / prm[0]
    elif kind == POWER:
        r = (y - prm[0]) / prm[1]
        if r < 0.0:
            r = 0.0
        x = prm[2] + r ** (1.0 / prm[3])
    else:
        f_lo = branch_value(kind, prm, lo) - y
        f_hi = branch_value(kind, prm, hi) - y
        if f_lo >= 0.0:
            return lo
        if f_hi <= 0.0:
            return hi
        a = lo
        b = hi
        # T(x) >= x + s on the neutral family, so x <= y - s bounds the root
        x = y - prm[2]
        if x > b or x < a:
            x = 0.5 * (a + b)
        for _ in range(200):
            fx = branch_value(kind, prm, x) - y
            if fx == 0.0:
                break
            if fx > 0.0:
                b = x
            else:
                a = x
            d = branch_deriv(kind, prm, x)
            xn = x - fx / d
            if not (a < xn < b):
                xn = 0.5 * (a + b)
            if abs(xn - x) <= 2.0 * _EPS * abs(xn) or b - a <= 2.0 * _EPS * abs(b):
                x = xn
                break
            x = xn
    if x < lo:
        x = lo
    elif x > hi:
        x = hi
    return x


@jit
def inverse_array(kind, prm, lo, hi, ys):
    out = np.empty(ys.shape[0])
    for i in range(ys.shape[0]):
        out[i] = inverse(kind, prm, lo, hi, ys[i])
    return out


@jit
def forward_array(breaks, kinds, params, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = forward(breaks, kinds, params, xs[i])
    return out


@jit
def obs_piece(kind, a, x0, c0, c1, x):
    if kind == OBS_POW0:
        return x ** (-a)
    elif kind == OBS_POW1:
        return (1.0 - x) ** (-a)
    elif kind == OBS_ABSPOW:
        return abs(x - x0) ** (-a)
    elif kind == OBS_LOGABS:
        return math.log(abs(x - x0))
    elif kind == OBS_AFFINE:
        return c0 + c1 * x
    else:
        return 1.0


@jit
def obs_value(okinds, ocoef, x):
    """Sum of weighted pieces; ``ocoef`` rows are (weight, lo, hi, a, x0, c0, c1)."""
    s = 0.0
    for j in range(okinds.shape[0]):
        lo = ocoef[j, 1]
        hi = ocoef[j, 2]
        if (lo < x <= hi) or (x == lo and lo == 0.0):
            s += ocoef[j, 0] * obs_piece(okinds[j], ocoef[j, 3], ocoef[j, 4],
                                         ocoef[j, 5], ocoef[j, 6], x)
    return s


@jit
def obs_array(okinds, ocoef, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = obs_value(okinds, ocoef, xs[i])
    return out


@jit
def orbit_states(breaks, kinds, params, x0, n):
    out = np.empty(n)
    x = x0
    for i in range(n):
        out[i] = x
        x = forward(breaks, kinds, params, x)
    return out


@jit
def orbit_partial_sums(breaks, kinds, params, x0, n, okinds, ocoef, mean,
                       checkpoints):
    """Stream S_k = sum_{i<k} (f(T^i x0) - mean) along an orbit.

    Returns S_k and max_{j<=k} |S_j| at each checkpoint k (1-based counts).
    """
    ncp = checkpoints.shape[0]
    s_cp = np.empty(ncp)
    m_cp = np.empty(ncp)
    x = x0
    s = 0.0
    m = 0.0
    c = 0
    for i in range(n):
        s += obs_value(okinds, ocoef, x) - mean
        a = abs(s)
        if a > m:
            m = a
        while c < ncp and checkpoints[c] == i + 1:
            s_cp[c] = s
            m_cp[c] = m
            c += 1
        x = forward(breaks, kinds, params, x)
    return s_cp, m_cp


@jit
def density_at(centers, hvals, gamma, x):
    # analytic x**-gamma profile spliced below the first cell center
    if x < centers[0]:
        if x <= 0.0:
            x = 1e-300
        return hvals[0] * (x / centers[0]) ** (-gamma)
    return np.interp(x, centers, hvals)


@jit
def chain_run(breaks, kinds, params, centers, hvals, gamma, y0, uniforms,
              burn_in, out):
    """Backward (preimage) random walk driven by ``uniforms``.

    Fills ``out`` with the states after ``burn_in`` steps and returns
    (sum of raw weight totals, max |raw total - 1|) over all steps.
    """
    d = kinds.shape[0]
    y = y0
    wk = np.empty(d)
    xk = np.empty(d)
    total_raw = 0.0
    worst = 0.0
    n_out = out.shape[0]
    for t in range(burn_in + n_out):
        hy = density_at(centers, hvals, gamma, y)
        wsum = 0.0
        for k in range(d):
            lo = breaks[k]
            hi = breaks[k + 1]
            ta = branch_value(kinds[k], params[k], lo)
            tb = branch_value(kinds[k], params[k], hi)
            if ta > tb:
                ta, tb = tb, ta
            if ta <= y <= tb:
                v = inverse(kinds[k], params[k], lo, hi, y)
                dv = abs(branch_deriv(kinds[k], params[k], v))
                if dv > 0.0 and v > 0.0:
                    w = density_at(centers, hvals, gamma, v) / (dv * hy)
                elif v == 0.0 and y == 0.0:
                    w = 1.0
                else:
                    w = 0.0
                wk[k] = w
                xk[k] = v
                wsum += w
            else:
                wk[k] = 0.0
                xk[k] = 0.0
        total_raw += wsum
        dev = abs(wsum - 1.0)
        if dev > worst:
            worst = dev
        u = uniforms[t] * wsum
        acc = 0.0
        nxt = -1
        for k in range(d):
            if wk[k] > 0.0:
                acc += wk[k]
                nxt = k
                if u < acc:
                    break
        y = xk[nxt]
        if t >= burn_in:
            out[t - burn_in] = y
    return total_raw, worst


@jit
def orbit_batch_sums(breaks, kinds, params, x0, n_batches, batch_len, okinds, ocoef):
    """Sums of f over consecutive orbit blocks of length ``batch_len``."""
    out = np.empty(n_batches)
    x = x0
    for b in range(n_batches):
        s = 0.0
        for _ in range(batch_len):
            s += obs_value(okinds, ocoef, x)
            x = forward(breaks, kinds, params, x)
        out[b] = s
    return out
