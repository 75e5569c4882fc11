"""Limit theorems along orbits of the LSV map.

CLT scale from the spectral variance, a bounded LIL scan, an SLLN rate
scan and the one-sided stable behaviour past the square-integrable regime.
Sizes are kept small so the script runs in about a minute.
"""
import math

import numpy as np

from gpmlab.bounds import lil_constant
from gpmlab.density import anchor_grid, invariant_density, model_grid
from gpmlab.kernel import alpha_estimate, kernel_matrix
from gpmlab.limits import (OrbitSource, gaussian_ks_scaled, lil_ratio_scan, sigma2_spectral,
                           slln_rate_scan, stable_law_diagnostics)
from gpmlab.maps import make_lsv
from gpmlab.observables import ObservableSpec, TailSpec, extrapolated_nu_mean


def model(gamma, cells=1000):
    m = make_lsv(gamma)
    g = anchor_grid(model_grid(m, cells), [0.5])
    d = invariant_density(m, g)
    return m, d, kernel_matrix(d, m, g)


m, d, K = model(0.25)
half = ObservableSpec.indicator(0.0, 0.5)

# CLT: the orbit sums over sqrt(n) against N(0, sigma^2)
s2, _ = sigma2_spectral(K, K.indicator(0.5))
src = OrbitSource(m, d)
n = 2 ** 12
S, _ = src.sums(half, n, 2000, seed=1)
ks, scale = gaussian_ks_scaled(S[:, 0] / math.sqrt(n))
print(f"sigma^2 spectral {s2:.4f}, empirical {scale ** 2:.4f}, KS {ks['statistic']:.4f}")

# bounded LIL: the whole scan should stay under the explicit constant
A = lil_constant(alpha_estimate(K, 1, 128), TailSpec.indicator(1.0))
rep = lil_ratio_scan(src, half, A["map"], 16, 50, seed=2)
print(f"LIL constant {A['map']:.1f}; largest ratio seen {rep.summary['max_ratio']:.3f}")

# SLLN rate with an unbounded observable x^-a, a chosen so f sits in L^p.
# b=0 is the borderline case; the log factor with b>0 is what restores decay,
# but the effect is slow and hard to see at these lengths.
gamma, p = 0.4, 1.5
m4, d4, _ = model(gamma)
f = ObservableSpec.power_at_zero((1 - p * gamma) / p)
mean = extrapolated_nu_mean(f, m4, n_cells=(500, 1000, 2000))[0]
for b in (0.0, 0.8):
    r = slln_rate_scan(OrbitSource(m4, d4, mean=mean), f, p, b, 16, 40, seed=3, window=6)
    print(f"p={p}, b={b}: {r.summary['fraction_decreasing']:.0%} of replicas decreasing")

# past the L^2 regime: heavy one-sided tail of the normalized sums
# x^-a has nu-tail t^-((1-gamma)/a); pick a so that index equals p
m5, d5, _ = model(0.4)
g = ObservableSpec.power_at_zero((1 - 0.4) / 1.5)
mean = extrapolated_nu_mean(g, m5, n_cells=(500, 1000, 2000))[0]
st = stable_law_diagnostics(OrbitSource(m5, d5, mean=mean), g, 1.5, 2 ** 12, 4000, seed=4,
                            bootstrap=50)
print(f"Hill index (target 1.5) {st.hill['index']:.2f} (ci {np.round(st.hill['ci'], 2)}), "
      f"right/left tail mass {st.summary['tail_ratio']:.1f}")
