"""
Kernels, grids and eigenvalue decay
===================================

Everything lives on a quadrature grid. A function in H1 is a vector of node
values; its RKHS norm comes from the Gram matrix. The decay of the kernel
integral operator's eigenvalues (exponent ``b``) drives every rate below.
"""

import numpy as np

from rkhs_tikhonov import (Grid, H1Space, Kernel, effective_dimension, empirical_covariance,
                           estimate_decay, gram, kappa)

# %%
# A first-order Sobolev kernel on [0, 1], ``K(x, y) = exp(-|x - y|) / 2``.
k = Kernel.sobolev1d(1)
grid = Grid.trapezoid(0.0, 1.0, 128)
print("K(0, 0) =", k(0.0, 0.0), " kappa =", kappa(k, grid.nodes))

# %%
# Spectrum of the discretized integral operator and its power-law fit.
dec = estimate_decay(gram(k, grid.nodes), grid.probability_weights)
print(f"fitted b = {dec.fitted_b:.3f}, beta = {dec.fitted_beta:.3f}")
for n in (1, 2, 4, 8, 16, 32, 64):
    print(f"  t_{n:<3d} = {dec.eigenvalues[n - 1]:.3e}   bound {dec.bound(n):.3e}")

# %%
# Effective dimension N(lam) grows like lam^(-1/b) and stays below kappa^2/lam.
eigs = np.clip(np.linalg.eigvalsh(empirical_covariance(k, grid))[::-1], 0, None)
for lam in (1e-1, 1e-2, 1e-3, 1e-4):
    e = effective_dimension(eigs, lam, (dec.fitted_b, dec.fitted_beta))
    print(f"lam={lam:.0e}  N={e.value:7.2f}  kappa^2/lam={0.5 / lam:9.1f}  "
          f"C lam^-1/b={e.decay_bound:7.2f}")

# %%
# H1 norms: a kernel section K(., x0) has RKHS norm sqrt(K(x0, x0)).
space = H1Space(grid, k)
sec = space.vec(gram(k, grid.nodes)[:, 40])
print("||K(., x0)|| =", sec.norm(), "vs", np.sqrt(0.5))
