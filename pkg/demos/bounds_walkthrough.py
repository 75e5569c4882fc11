"""Explicit inequalities next to Monte-Carlo estimates.

Evaluates the maximal inequality for a Markov chain built from the
time-reversed kernel, the Pinelis bound for a coin-flip martingale and the
covariance bound at several lags.
"""
import math

import numpy as np

from gpmlab.bounds import (best_fn_bound, domination_test_fn, min_sn2, pinelis_test,
                           rio_test, slln_series_bound)
from gpmlab.density import anchor_grid, invariant_density, model_grid
from gpmlab.kernel import alpha_estimate, kernel_matrix
from gpmlab.limits import ChainSource, sigma2_spectral
from gpmlab.maps import make_lsv
from gpmlab.observables import ObservableSpec, TailSpec

m = make_lsv(0.25)
grid = anchor_grid(model_grid(m, 800), [0.5])
d = invariant_density(m, grid)
K = kernel_matrix(d, m, grid)
tail = TailSpec.indicator(1.0)
a1 = alpha_estimate(K, 1, 128)
a2 = alpha_estimate(K, 2, 16)        # pairs are the slow part; keep n_max short

n = 1024
print(f"smallest admissible s_n^2 at n={n}: {min_sn2(tail, a1, n):.1f}")
for x in (20.0, 60.0, 200.0):
    b, r = best_fn_bound(tail, a1, a2, n, x)
    print(f"  P(max|S_k| >= {5 * x:g}) <= {b:.3g}   (best r = {r:g})")

s2, _ = sigma2_spectral(K, K.indicator(0.5))
xs = np.geomspace(math.sqrt(s2 * n), n / 5, 4)
rep = domination_test_fn(ChainSource(m, d), ObservableSpec.indicator(0.0, 0.5), tail, a1,
                         a2, n, xs, 2000, seed=7)
for x, lhs, rhs in zip(xs, rep.mc_lhs, rep.rhs):
    print(f"  x={x:7.2f}  Monte Carlo {lhs:.4f}  bound {rhs:.3g}")
print("dominated:", rep.passed)

pin = pinelis_test(2500, [100.0, 200.0], 20_000, seed=8)
print("Pinelis:", [f"{l:.4f} <= {r:.4f}" for l, r in zip(pin.mc_lhs, pin.rhs)])

cov = rio_test(K, K.indicator(0.5), tail, a1, [1, 2, 4, 8, 16, 32])
print("covariance / bound:", np.round(np.array(cov.mc_lhs) / np.array(cov.rhs), 4))

print("SLLN series for a power tail:",
      slln_series_bound(TailSpec.power(4.0), a1, 1.5, gamma=0.25))
