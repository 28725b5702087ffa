"""
Tikhonov regularization of a quadratic integral equation
========================================================

The forward map is ``A(f)(x) = int theta(x, s) f(s)^2 ds`` with a narrow
Gaussian mollifier ``theta``. We build a truth satisfying a Hoelder source
condition, simulate noisy point evaluations and solve by damped Gauss-Newton.
"""

import numpy as np

from rkhs_tikhonov import (ForwardOp, GaussianTheta, Grid, H1Space, IndexFunction, Kernel,
                           SourceSpec, build_source_truth, lambda_choice, simulate,
                           taylor_remainder, tikhonov_solve)

k = Kernel.sobolev1d(1)
grid = Grid.trapezoid(0.0, 1.0, 128)
space = H1Space(grid, k)
op = ForwardOp("quadratic_integral", grid, GaussianTheta(0.01, 1.0, True), k)
fbar = space.vec(np.ones(grid.n))

# %%
# The truth solves f = fbar + phi(T_f) g by fixed-point iteration, where T_f is
# the linearized normal operator at f itself.
phi = IndexFunction.holder(0.5, 20.0)
truth = build_source_truth(op, k, fbar, SourceSpec(phi, R=1.0, g_seed=0, g_norm=1.0))
print(f"fixed point: {truth.iterations} iterations, residual {truth.residual:.1e}, "
      f"contraction ~{truth.contraction:.3f}")

# %%
# The remainder of the linearization is exactly quadratic for this operator.
g = space.vec(np.sin(2 * np.pi * grid.nodes))
for t in (1e-1, 1e-2, 1e-3):
    print(f"t={t:.0e}  remainder/t^2 = {taylor_remainder(op, fbar + g * t, fbar) / t**2:.6f}")

# %%
# Solve with the a-priori choice Psi(lam) = m^(-1/2), Psi(t) = t^(1/2 + 1/(2b)) phi(t).
for m in (100, 400, 1600):
    lam = lambda_choice(m, phi, b=1.93).value
    data = simulate(op, truth.f_rho, m, 0.1, seed=m)
    fit = tikhonov_solve(op, k, data, fbar, lam)
    print(f"m={m:5d} lam={lam:.4f} iters={fit.gn_iters} converged={fit.converged} "
          f"||f - f_rho||={(fit.solution - truth.f_rho).norm():.4f}")
