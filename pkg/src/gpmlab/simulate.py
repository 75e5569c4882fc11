"""Orbits of the map and the dual (preimage) Markov chain.

The chain moves from ``y`` to a preimage ``v_k(y)`` with probability
``h(v_k y) |v_k'(y)| / h(y)``; started from ν it has the law of the orbit
read backwards, ``(x_0, ..., x_{n-1}) ~ (Y_n, ..., Y_1)``.

Every replica ``r`` of a sweep draws from its own stream seeded by
``(seed, r)``, so results do not depend on the thread count.
"""
from dataclasses import dataclass, field
import csv
import logging

import numpy as np
from scipy import stats

from . import _jit
from ._util import ordered_map, replica_rng

__all__ = ["Trajectory", "ChainWeightError", "sample_stationary", "simulate_chain",
           "simulate_orbit", "escape_time", "orbit_sums", "chain_sums",
           "time_reversal_test", "TimeReversalReport", "DEFAULT_BURN_IN"]

logger = logging.getLogger(__name__)

DEFAULT_BURN_IN = 1000


class ChainWeightError(RuntimeError):
    """Raw preimage weights drift too far from summing to one."""


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray = field(repr=False)
    mode: str
    seed: int
    burn_in: int = 0
    weight_sum_mean: float = 1.0
    weight_sum_worst: float = 0.0

    def __post_init__(self):
        self.states.setflags(write=False)

    def __len__(self):
        return len(self.states)

    def values(self, f):
        return f(self.states)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "state"])
            for i, x in enumerate(self.states):
                w.writerow([i, repr(float(x))])

    def to_binary(self, path):
        """Raw little-endian float64 stream."""
        self.states.astype("<f8").tofile(path)


def sample_stationary(density, rng, size=None):
    """Draw from the discretized ν: a cell by its mass, then uniform inside it."""
    nu = density.nu_weights
    cdf = np.cumsum(nu)
    cdf /= cdf[-1]
    grid = density.grid
    m = 1 if size is None else int(np.prod(size))
    u = rng.random(m)
    cell = np.minimum(np.searchsorted(cdf, u, side="right"), len(nu) - 1)
    x = grid[cell] + rng.random(m) * (grid[cell + 1] - grid[cell])
    x = np.clip(x, 0.0, 1.0)
    return float(x[0]) if size is None else x.reshape(size)


def _map_arrays(tmap):
    return (np.ascontiguousarray(tmap.breakpoints, dtype=float),
            np.ascontiguousarray(tmap.kinds, dtype=np.int64),
            np.ascontiguousarray(tmap.params, dtype=float))


def _density_arrays(density):
    return (np.ascontiguousarray(density.h.centers),
            np.ascontiguousarray(density.h.values), float(density.gamma))


def _run_chain(tmap, density, n, rng, burn_in, y0=None):
    br, kd, pm = _map_arrays(tmap)
    c, hv, g = _density_arrays(density)
    if y0 is None:
        y0 = sample_stationary(density, rng)
    u = rng.random(burn_in + n)
    out = np.empty(n)
    total, worst = _jit.chain_run(br, kd, pm, c, hv, g, float(y0), u, burn_in, out)
    mean_sum = total / (burn_in + n) if burn_in + n else 1.0
    if worst > 0.2:
        raise ChainWeightError(f"raw preimage weights sum to 1 ± {worst:.3f} (> 20%)")
    return out, mean_sum, worst


def simulate_chain(tmap, density, n, seed, burn_in=DEFAULT_BURN_IN, y0=None):
    """``n`` chain states after ``burn_in`` steps, started from the discretized ν."""
    rng = np.random.default_rng(seed)
    out, mean_sum, worst = _run_chain(tmap, density, n, rng, burn_in, y0)
    if worst > 5e-2 or abs(mean_sum - 1.0) > 5e-3:
        logger.warning("preimage weight sums: mean %.4f, worst deviation %.3f",
                       mean_sum, worst)
    return Trajectory(out, "chain", seed, burn_in, mean_sum, worst)


def simulate_orbit(tmap, density, n, seed, x0=None):
    """Orbit of length ``n`` in double precision from ``x0`` (default: drawn from ν)."""
    if x0 is None:
        x0 = sample_stationary(density, np.random.default_rng(seed))
    br, kd, pm = _map_arrays(tmap)
    return Trajectory(_jit.orbit_states(br, kd, pm, float(x0), n), "orbit", seed)


def escape_time(tmap, x, bound=None, max_steps=10 ** 7):
    """Smallest ``n`` with ``T^n x > bound`` (``bound`` defaults to ``z1``)."""
    bound = tmap.z1 if bound is None else bound
    br, kd, pm = _map_arrays(tmap)
    y = float(x)
    for n in range(max_steps + 1):
        if y > bound:
            return n
        y = _jit.forward(br, kd, pm, y)
    return None


def _checkpoints(n, checkpoints):
    if checkpoints is None:
        return np.array([n], dtype=np.int64)
    cp = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cp[0] < 1 or cp[-1] > n:
        raise ValueError("checkpoints must lie in [1, n]")
    return cp


def orbit_sums(tmap, density, f, n, replicas, seed, checkpoints=None, mean=None,
               threads=None):
    """Birkhoff sums along ν-distributed orbits.

    Returns ``(S, M)``, arrays of shape (replicas, checkpoints), with
    ``S[r, c] = Σ_{i<k} (f(T^i x) - mean)`` and ``M[r, c] = max_{j<=k} |S_j|``
    at ``k = checkpoints[c]`` (default: ``k = n`` only).
    """
    cp = _checkpoints(n, checkpoints)
    mean = f.nu_mean(density) if mean is None else float(mean)
    br, kd, pm = _map_arrays(tmap)

    def one(r):
        x0 = sample_stationary(density, replica_rng(seed, r))
        return _jit.orbit_partial_sums(br, kd, pm, x0, n, f.okinds, f.ocoef, mean, cp)

    res = ordered_map(one, range(replicas), threads)
    return np.array([s for s, _ in res]), np.array([m for _, m in res])


def chain_sums(tmap, density, f, n, replicas, seed, checkpoints=None, mean=None,
               burn_in=DEFAULT_BURN_IN, suffix=False, threads=None):
    """Sums of ``X_i = f(Y_i) - mean`` along chain replicas.

    Same layout as :func:`orbit_sums`: ``S[r, c] = Σ_{i<=k} X_i`` and
    ``M[r, c] = max_{j<=k} |Σ_{i<=j} X_i|``.  With ``suffix=True`` the sums run
    backwards from ``X_k``, giving ``max_{j<=k} |Σ_{i=j}^k X_i|``.
    """
    cp = _checkpoints(n, checkpoints)
    mean = f.nu_mean(density) if mean is None else float(mean)

    def one(r):
        ys, _, _ = _run_chain(tmap, density, n, replica_rng(seed, r), burn_in)
        x = f(ys) - mean
        S = np.empty(len(cp))
        M = np.empty(len(cp))
        if suffix:
            for c, k in enumerate(cp):
                part = np.cumsum(x[:k][::-1])
                S[c], M[c] = part[-1], np.max(np.abs(part))
        else:
            part = np.cumsum(x)
            run = np.maximum.accumulate(np.abs(part))
            S[:], M[:] = part[cp - 1], run[cp - 1]
        return S, M

    res = ordered_map(one, range(replicas), threads)
    return np.array([s for s, _ in res]), np.array([m for _, m in res])


@dataclass
class TimeReversalReport:
    orbit_sample: np.ndarray = field(repr=False)
    chain_sample: np.ndarray = field(repr=False)
    statistic: float
    p_value: float

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value,
                "replicas": len(self.orbit_sample)}


def time_reversal_test(tmap, density, f, n, replicas, seed, burn_in=DEFAULT_BURN_IN,
                       threads=None):
    """Compare ``max_{k<=n} |Σ_{i<k} (f∘T^i - νf)|`` along orbits with
    ``max_{k<=n} |Σ_{i=k}^n X_i|`` along the chain (two-sample KS)."""
    mean = f.nu_mean(density)
    _, m_orbit = orbit_sums(tmap, density, f, n, replicas, seed, mean=mean, threads=threads)
    _, m_chain = chain_sums(tmap, density, f, n, replicas, seed + 1, mean=mean,
                            burn_in=burn_in, suffix=True, threads=threads)
    a, b = m_orbit[:, 0], m_chain[:, 0]
    if np.ptp(a) == 0 and np.ptp(b) == 0 and a[0] == b[0]:
        stat, p = 0.0, 1.0
    else:
        res = stats.ks_2samp(a, b, method="asymp")
        stat, p = float(res.statistic), float(res.pvalue)
    return TimeReversalReport(a, b, stat, p)
