"""Discretized Hilbert spaces, sampling operators and effective dimension.

Functions on ``[a, b]`` are stored by their values on the nodes of a
:class:`Grid`. The solution space H1 is either the weighted ``l2``
discretization of ``L2`` (the default) or the RKHS of a kernel, in which
case the norm of a node-value vector ``v`` is ``sqrt(v^T G^-1 v)``, the norm
of its minimal kernel interpolant. H2 functions are always kernel
interpolants of their node values.

Operators that are self-adjoint in H1 are handled in *whitened*
coordinates ``u = P^{1/2} v`` where ``P`` is the H1 metric matrix; there the
H1 inner product is the Euclidean one and self-adjoint operators are
symmetric matrices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg

from .kernels import Kernel, cross_gram, gram

__all__ = [
    "Grid",
    "H1Space",
    "H1Vec",
    "SampleSet",
    "EffDim",
    "interpolation_matrix",
    "sampling_apply",
    "sampling_adjoint",
    "empirical_covariance",
    "effective_dimension",
    "effdim_decay_constant",
    "fit_effdim_constant",
]


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes and positive weights on ``[a, b]``."""

    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float
    normalize: bool = False
    rule: str = "custom"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if nodes.size == 0 or nodes.size != weights.size:
            raise ValueError("grid needs equally many nodes and weights")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("grid weights must be positive")
        if nodes[0] < self.a or nodes[-1] > self.b:
            raise ValueError("grid nodes must lie in [a, b]")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def trapezoid(cls, a=0.0, b=1.0, n=128, normalize=True):
        """Composite trapezoid rule on ``n`` uniform nodes.

        With ``normalize`` the weights sum to one (uniform probability
        measure); otherwise to ``b - a``.
        """
        if n < 2:
            raise ValueError("trapezoid rule needs n >= 2")
        nodes = np.linspace(a, b, n)
        w = np.full(n, (b - a) / (n - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        if normalize:
            w = w / (b - a)
        return cls(nodes, w, float(a), float(b), bool(normalize), "trapezoid")

    @property
    def n(self):
        return self.nodes.size

    @property
    def probability_weights(self):
        """Weights rescaled to a probability measure (uniform rho_X)."""
        return self.weights / self.weights.sum()

    def to_dict(self):
        if self.rule != "trapezoid":
            raise ValueError("only trapezoid grids are serializable")
        return {"a": self.a, "b": self.b, "n": self.n, "rule": "trapezoid",
                "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"a", "b", "n", "rule", "normalize"}
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        if d.get("rule", "trapezoid") != "trapezoid":
            raise ValueError("only the trapezoid rule is supported")
        return cls.trapezoid(d.get("a", 0.0), d.get("b", 1.0), int(d.get("n", 128)),
                             bool(d.get("normalize", True)))


def interpolation_matrix(k: Kernel, grid: Grid, x) -> np.ndarray:
    """Matrix ``E`` with ``E @ values`` = kernel interpolant evaluated at ``x``.

    Rows for points that coincide with grid nodes are exact unit vectors.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k.check_domain(x)
    G = gram(k, grid.nodes)
    Kxs = cross_gram(k, x, grid.nodes)
    E = linalg.solve(G, Kxs.T, assume_a="pos").T
    idx = np.searchsorted(grid.nodes, x)
    idx = np.clip(idx, 0, grid.n - 1)
    hit = np.isclose(grid.nodes[idx], x, rtol=0.0, atol=1e-14)
    if np.any(hit):
        E[hit] = 0.0
        E[np.flatnonzero(hit), idx[hit]] = 1.0
    return E


class H1Space:
    """Discretized solution space on a grid.

    Parameters
    ----------
    grid : Grid
    kernel : Kernel, optional
        If given, the space carries the RKHS norm of this kernel
        (``norm_mode == "rkhs"``); otherwise the weighted ``l2`` norm.
    """

    def __init__(self, grid: Grid, kernel: Optional[Kernel] = None):
        self.grid = grid
        self.kernel = kernel

    @property
    def norm_mode(self):
        return "weighted_l2" if self.kernel is None else "rkhs"

    @property
    def n(self):
        return self.grid.n

    @cached_property
    def _gram_eig(self):
        G = gram(self.kernel, self.grid.nodes)
        s, U = linalg.eigh(G)
        if s[0] <= 1e-13 * s[-1]:
            raise np.linalg.LinAlgError(
                "Gram matrix too ill-conditioned for the rkhs norm mode")
        return s, U

    @cached_property
    def metric(self) -> np.ndarray:
        """Matrix ``P`` with ``<u, v> = u^T P v``."""
        if self.kernel is None:
            return np.diag(self.grid.weights)
        s, U = self._gram_eig
        return (U / s) @ U.T

    @cached_property
    def metric_sqrt(self) -> np.ndarray:
        if self.kernel is None:
            return np.diag(np.sqrt(self.grid.weights))
        s, U = self._gram_eig
        return (U / np.sqrt(s)) @ U.T

    @cached_property
    def metric_isqrt(self) -> np.ndarray:
        if self.kernel is None:
            return np.diag(1.0 / np.sqrt(self.grid.weights))
        s, U = self._gram_eig
        return (U * np.sqrt(s)) @ U.T

    def whiten(self, values):
        return self.metric_sqrt @ np.asarray(values, dtype=float)

    def unwhiten(self, coords):
        return self.metric_isqrt @ np.asarray(coords, dtype=float)

    def inner(self, u, v) -> float:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kernel is None:
            return float(np.sum(self.grid.weights * u * v))
        return float(u @ self.metric @ v)

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def vec(self, values) -> "H1Vec":
        return H1Vec(np.asarray(values, dtype=float), self)

    def function(self, fn) -> "H1Vec":
        """Sample a callable on the grid nodes."""
        return self.vec(np.asarray(fn(self.grid.nodes), dtype=float) * np.ones(self.n))

    def zeros(self) -> "H1Vec":
        return self.vec(np.zeros(self.n))


@dataclass(frozen=True, eq=False)
class H1Vec:
    """Element of a discretized H1: node values tied to their space."""

    values: np.ndarray
    space: H1Space = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.space.n:
            raise ValueError(f"expected {self.space.n} node values, got {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid(self):
        return self.space.grid

    @property
    def norm_mode(self):
        return self.space.norm_mode

    def _other(self, other):
        if isinstance(other, H1Vec):
            if other.space is not self.space:
                raise ValueError("H1 vectors live on different spaces")
            return other.values
        return other

    def inner(self, other: "H1Vec") -> float:
        return self.space.inner(self.values, self._other(other))

    def norm(self) -> float:
        return self.space.norm(self.values)

    def __add__(self, other):
        return H1Vec(self.values + self._other(other), self.space)

    def __sub__(self, other):
        return H1Vec(self.values - self._other(other), self.space)

    def __mul__(self, c):
        return H1Vec(self.values * float(c), self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return H1Vec(-self.values, self.space)


@dataclass(frozen=True)
class SampleSet:
    """Design points, observations and noise bookkeeping."""

    x: np.ndarray
    y: np.ndarray
    seed: Optional[int] = None
    noise_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size < 1 or x.size != y.size:
            raise ValueError("sample set needs len(x) == len(y) >= 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def m(self):
        return self.x.size

    def to_csv(self, path):
        """Write ``x,y`` rows and a JSON sidecar with seed and noise_meta."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for xi, yi in zip(self.x, self.y):
                w.writerow([repr(float(xi)), repr(float(yi))])
        side = {"seed": self.seed, "noise_meta": self.noise_meta}
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = [float(r["x"]) for r in rows]
        y = [float(r["y"]) for r in rows]
        side_path = path.with_suffix(".json")
        side = json.loads(side_path.read_text()) if side_path.exists() else {}
        return cls(np.array(x), np.array(y), side.get("seed"), side.get("noise_meta", {}))


def sampling_apply(k: Kernel, grid: Grid, f_values, x) -> np.ndarray:
    """``S_x f``: the H2 function with node values ``f_values`` at ``x``."""
    return interpolation_matrix(k, grid, x) @ np.asarray(f_values, dtype=float)


def sampling_adjoint(k: Kernel, grid: Grid, x, c) -> np.ndarray:
    """``S_x^* c = (1/m) sum_i K(., x_i) c_i`` on the grid nodes."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size != x.size:
        raise ValueError("len(c) must equal the number of design points")
    return cross_gram(k, grid.nodes, x) @ c / x.size


def empirical_covariance(k: Kernel, grid: Grid) -> np.ndarray:
    """Symmetric discretization ``W^1/2 G W^1/2`` of ``L_K``.

    ``W`` holds the probability-normalized grid weights, so the spectrum
    approximates that of ``L_K`` on ``L2(rho_X)`` with uniform ``rho_X``.
    """
    G = gram(k, grid.nodes)
    sw = np.sqrt(grid.probability_weights)
    C = sw[:, None] * G * sw[None, :]
    return 0.5 * (C + C.T)


@dataclass(frozen=True)
class EffDim:
    lam: float
    value: float
    trivial_bound: float
    decay_bound: Optional[float] = None


def effective_dimension(eigs, lam: float, decay=None, constant=None) -> EffDim:
    """``N(lam) = sum_n t_n / (t_n + lam)`` with its two upper bounds.

    ``decay`` is an optional ``(b, beta)`` pair; ``constant`` overrides the
    constant of the ``C * lam**(-1/b)`` bound (otherwise it is taken from
    :func:`effdim_decay_constant`).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    value = float(np.sum(t / (t + lam)))
    trivial = float(np.sum(t) / lam)
    decay_bound = None
    if decay is not None:
        b, beta = decay
        C = effdim_decay_constant(b, beta) if constant is None else constant
        decay_bound = float(C * lam ** (-1.0 / b))
    return EffDim(float(lam), value, trivial, decay_bound)


def effdim_decay_constant(b: float, beta: float) -> float:
    """Constant ``C`` with ``N(lam) <= C lam^(-1/b)`` whenever ``t_n <= beta n^-b``.

    ``t/(t + lam)`` is increasing in ``t`` and the worst-case summand is
    decreasing in ``n``, so the sum is dominated by
    ``int_0^inf beta / (beta + lam x^b) dx = (beta/lam)^(1/b) pi / (b sin(pi/b))``.
    """
    if not b > 1:
        raise ValueError("b must exceed 1")
    return float(beta ** (1.0 / b) * np.pi / (b * np.sin(np.pi / b)))


def fit_effdim_constant(eigs, b: float, lam_grid) -> float:
    """Smallest ``C`` with ``N(lam) <= C lam^(-1/b)`` on ``lam_grid``."""
    lam_grid = np.asarray(lam_grid, dtype=float)
    vals = [effective_dimension(eigs, lam).value * lam ** (1.0 / b) for lam in lam_grid]
    return float(max(vals))
