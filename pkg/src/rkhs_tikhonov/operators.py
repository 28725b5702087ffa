"""Forward operators with analytic Frechet derivatives.

Three kinds are provided, all acting on node values of an H1 element:

* ``identity``: ``A(f) = f`` viewed as an H2 function (kernel interpolant).
* ``linear_integral``: ``A(f)(x) = int theta(x, s) f(s) dmu(s)``.
* ``quadratic_integral``: ``A(f)(x) = int theta(x, s) f(s)**2 dmu(s)``, with
  derivative ``A'(f) g = 2 int theta(x, s) f(s) g(s) dmu(s)``.

Integrals use the grid's quadrature weights as ``mu``. ``theta`` is either a
callable ``theta(x, s)`` broadcasting over arrays, or a dense matrix on the
grid (row = evaluation node, column = integration node); in the matrix case
off-node evaluation interpolates linearly between rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .hilbert import Grid, H1Space, H1Vec, interpolation_matrix
from .kernels import Kernel, PSD_RTOL, gram

__all__ = [
    "ForwardOp",
    "LinearizedSystem",
    "default_theta",
    "GaussianTheta",
    "load_theta_csv",
    "forward_apply",
    "forward_deriv",
    "taylor_remainder",
    "linearize",
    "derivative_norm_h2",
    "estimate_gamma",
    "gamma_hs_bound",
]

KINDS = ("identity", "linear_integral", "quadratic_integral")
ThetaLike = Union[Callable, np.ndarray, None]


def default_theta(x, s):
    """Smooth test kernel ``exp(-(x - s)**2)``."""
    return np.exp(-(np.asarray(x) - np.asarray(s)) ** 2)


@dataclass(frozen=True)
class GaussianTheta:
    """Picklable Gaussian integral kernel ``scale * exp(-(x - s)**2 / (2 width**2))``.

    With ``normalized`` the profile is divided by ``width * sqrt(2 pi)`` so it
    integrates to ``scale`` over the real line (a mollifier).
    """

    width: float = 1.0
    scale: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")

    def __call__(self, x, s):
        d = np.asarray(x) - np.asarray(s)
        c = self.scale / (self.width * np.sqrt(2 * np.pi)) if self.normalized else self.scale
        return c * np.exp(-0.5 * (d / self.width) ** 2)


def load_theta_csv(path) -> np.ndarray:
    """Read a dense theta matrix (row = evaluation node, column = grid node)."""
    with Path(path).open(newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


@dataclass(frozen=True, eq=False)
class ForwardOp:
    kind: str
    grid: Grid
    theta: ThetaLike = None
    kernel: Optional[Kernel] = None
    lipschitz_L: Optional[float] = None
    nonlinearity_gamma: Optional[float] = None
    ball_radius_d: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "identity":
            if self.kernel is None:
                raise ValueError("identity operator needs the H2 kernel")
        else:
            theta = default_theta if self.theta is None else self.theta
            if not callable(theta):
                theta = np.asarray(theta, dtype=float)
                if theta.shape != (self.grid.n, self.grid.n):
                    raise ValueError(
                        f"theta matrix must be {self.grid.n}x{self.grid.n}, got {theta.shape}")
            object.__setattr__(self, "theta", theta)

    @property
    def is_linear(self):
        return self.kind != "quadratic_integral"

    def _check(self, values):
        v = np.asarray(values.values if isinstance(values, H1Vec) else values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} node values, got shape {v.shape}")
        return v

    def weighted_theta(self, x) -> np.ndarray:
        """``theta(x_i, s_j) * w_j``, the quadrature form of the integral kernel."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < self.grid.a) or np.any(x > self.grid.b):
            raise ValueError("evaluation points outside the grid interval")
        if callable(self.theta):
            th = np.asarray(self.theta(x[:, None], self.grid.nodes[None, :]), dtype=float)
            th = np.broadcast_to(th, (x.size, self.grid.n))
        else:
            nodes = self.grid.nodes
            j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, self.grid.n - 2) \
                if self.grid.n > 1 else np.zeros(x.size, dtype=int)
            if self.grid.n == 1:
                th = np.repeat(self.theta, x.size, axis=0)
            else:
                t = (x - nodes[j]) / (nodes[j + 1] - nodes[j])
                t = np.clip(t, 0.0, 1.0)[:, None]
                th = (1.0 - t) * self.theta[j] + t * self.theta[j + 1]
        return th * self.grid.weights[None, :]

    def apply(self, f, x) -> np.ndarray:
        f = self._check(f)
        if self.kind == "identity":
            return interpolation_matrix(self.kernel, self.grid, x) @ f
        Wt = self.weighted_theta(x)
        return Wt @ (f if self.kind == "linear_integral" else f * f)

    def deriv(self, f, g, x) -> np.ndarray:
        return self.jacobian(f, x) @ self._check(g)

    def jacobian(self, f, x) -> np.ndarray:
        """Matrix of ``g -> A'(f) g`` evaluated at ``x`` (rows) on node values."""
        f = self._check(f)
        if self.kind == "identity":
            return interpolation_matrix(self.kernel, self.grid, x)
        Wt = self.weighted_theta(x)
        if self.kind == "linear_integral":
            return Wt
        return 2.0 * Wt * f[None, :]


def _values(f, op):
    if isinstance(f, H1Vec):
        if f.grid is not op.grid:
            raise ValueError("H1 vector and operator use different grids")
        return f.values
    return op._check(f)


def forward_apply(op: ForwardOp, f, eval_points) -> np.ndarray:
    return op.apply(_values(f, op), eval_points)


def forward_deriv(op: ForwardOp, f, g, eval_points) -> np.ndarray:
    return op.deriv(_values(f, op), _values(g, op), eval_points)


def taylor_remainder(op: ForwardOp, f: H1Vec, f0: H1Vec, k: Optional[Kernel] = None) -> float:
    """``L2(rho_X)`` norm of ``A(f) - A(f0) - A'(f0)(f - f0)`` by quadrature."""
    fv, f0v = _values(f, op), _values(f0, op)
    if op.is_linear:
        return 0.0
    nodes = op.grid.nodes
    r = op.apply(fv, nodes) - op.apply(f0v, nodes) - op.deriv(f0v, fv - f0v, nodes)
    return float(np.sqrt(np.sum(op.grid.probability_weights * r * r)))


@dataclass(frozen=True, eq=False)
class LinearizedSystem:
    """Linearization of ``I_K A`` at a base point, in whitened H1 coordinates.

    ``B_x`` maps whitened coordinates to values at the design points,
    ``T_x = B_x^T B_x / m``. ``B`` is the population counterpart into
    ``L2(rho_X)`` (rows scaled by the square-root quadrature weights) and
    ``T = B^T B``.
    """

    B_x: np.ndarray
    T_x: np.ndarray
    B: np.ndarray
    T: np.ndarray
    base_point: H1Vec

    @property
    def space(self):
        return self.base_point.space


def _sym(M):
    return 0.5 * (M + M.T)


def linearize(op: ForwardOp, k: Optional[Kernel], f0: H1Vec, x=None) -> LinearizedSystem:
    """Assemble sampled and population linearizations at ``f0``.

    With ``x=None`` only the population operators are meaningful; the
    sampled ones are then built on the grid nodes.
    """
    space = f0.space
    if f0.grid is not op.grid:
        raise ValueError("base point and operator use different grids")
    if x is None:
        x = op.grid.nodes
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 0:
        raise ValueError("linearize needs at least one design point")
    Pi = space.metric_isqrt
    B_x = op.jacobian(f0.values, x) @ Pi
    T_x = _sym(B_x.T @ B_x) / x.size
    sw = np.sqrt(op.grid.probability_weights)
    B = sw[:, None] * (op.jacobian(f0.values, op.grid.nodes) @ Pi)
    T = _sym(B.T @ B)
    return LinearizedSystem(B_x, T_x, B, T, f0)


def derivative_norm_h2(op: ForwardOp, k: Kernel, f: H1Vec) -> float:
    """``||A'(f)||`` from H1 into the discretized RKHS of ``k``."""
    space = f.space
    G = gram(k, op.grid.nodes)
    s, U = linalg.eigh(G)
    s = np.clip(s, PSD_RTOL * s[-1], None)
    Gis = (U / np.sqrt(s)) @ U.T
    J = op.jacobian(f.values, op.grid.nodes)
    return float(np.linalg.norm(Gis @ J @ space.metric_isqrt, 2))


def estimate_gamma(op: ForwardOp, f0: H1Vec, n_probes=20, scales=(1e-2, 1e-1, 1.0),
                   seed=0, inflate=1.2) -> float:
    """Empirical constant in ``||remainder|| <= gamma/2 ||f - f0||^2``.

    Maximum over random probe directions of ``2 * remainder / ||f - f0||^2``,
    inflated by ``inflate``.
    """
    if op.is_linear:
        return 0.0
    rng = np.random.default_rng(seed)
    space = f0.space
    best = 0.0
    for _ in range(n_probes):
        d = space.unwhiten(rng.standard_normal(space.n))
        d /= space.norm(d)
        for t in scales:
            f = space.vec(f0.values + t * d)
            rem = taylor_remainder(op, f, f0)
            best = max(best, 2.0 * rem / t ** 2)
    return inflate * best


def gamma_hs_bound(op: ForwardOp, space: H1Space) -> float:
    """Exact Lipschitz constant of ``f -> I_K A'(f)`` in Hilbert-Schmidt norm.

    For the quadratic operator ``A'(f) - A'(g)`` depends linearly on
    ``h = f - g`` and its squared HS norm is a quadratic form in ``h``; the
    constant is the square root of its largest eigenvalue relative to the
    H1 metric. Zero for the linear kinds.
    """
    if op.is_linear:
        return 0.0
    nodes = op.grid.nodes
    C = 2.0 * op.weighted_theta(nodes) * np.sqrt(op.grid.probability_weights)[:, None]
    Pinv = space.metric_isqrt @ space.metric_isqrt
    Q = (C.T @ C) * Pinv
    Ps = space.metric_isqrt
    M = _sym(Ps @ Q @ Ps)
    return float(np.sqrt(max(np.linalg.eigvalsh(M)[-1], 0.0)))
