"""Invariant density and time-reversed kernel of the LSV map.

Builds the Ulam model on a graded grid, checks the x^-gamma profile near the
neutral fixed point, then looks at the kernel P and how fast its dependence
coefficients decay.
"""
import numpy as np

from gpmlab import maps
from gpmlab.density import anchor_grid, invariant_density, model_grid
from gpmlab.kernel import alpha_estimate, en_remainder, kernel_matrix
from gpmlab._util import loglog_fit

gamma = 0.5
tmap = maps.make_lsv(gamma)
print(maps.validate_gpm(tmap).ok, "map passes the structural checks")

# grid graded towards 0, with 1/2 forced onto a cell boundary
grid = anchor_grid(model_grid(tmap, 1500), [0.5])
dens = invariant_density(tmap, grid)
print(f"Ulam fixed point: residual {dens.residual:.2e} after {dens.iterations} iterations")

c = dens.h.centers
sel = (c > 1e-4) & (c < 1e-2)
slope = loglog_fit(c[sel], dens.h.values[sel])[0]
print(f"h(x) ~ x^{slope:.3f} near 0 (expect {-gamma})")
print(f"nu([0, 1/2]) = {dens.nu_mass(0.0, 0.5):.4f}")

# the z-sequence (preimages of 1/2 on the left branch) shrinks like n^(-1/gamma),
# so this product settles to a constant
z = maps.z_sequence(tmap, 200)
n = np.arange(1, len(z.values) + 1)
print("z_n n^(1/gamma):", np.round(z.values[[9, 49, 199]] * n[[9, 49, 199]] ** (1 / gamma), 4))

K = kernel_matrix(dens, tmap, grid)
print(f"P rows sum to 1 within {np.abs(K.P.sum(axis=1) - 1).max():.1e}")

en = en_remainder(K, 128)
print(f"variation of the E_n remainder decays like n^{en.slope:.2f}")

a1 = alpha_estimate(K, 1, 128)
print(f"alpha_1(n) ~ n^{a1.slope:.2f}, expected about {-(1 - gamma) / gamma:.2f}")
for k in (1, 4, 16, 64, 128):
    print(f"  alpha_1({k:3d}) = {a1.values[k]:.3e}")
