"""Scalar reproducing kernels on a closed interval.

Three families are supported:

``gaussian``
    ``exp(-(x - y)**2 / (2 * lengthscale**2))``.
``sobolev1d``
    Reproducing kernel of ``W^{k,2}(R)`` restricted to the interval,
    ``(2 pi)^-1 int exp(i (x - y) xi) / (1 + xi**2)**k d xi``. For ``k = 1``
    this is ``exp(-|x - y|) / 2``; higher orders use the equivalent scaled
    Matern form with smoothness ``k - 1/2``.
``matern``
    Unit-variance Matern kernel with smoothness ``nu`` and ``lengthscale``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "InsufficientDataError",
    "Kernel",
    "EigenDecay",
    "kernel_eval",
    "gram",
    "cross_gram",
    "kappa",
    "estimate_decay",
    "fit_power_law",
]

PSD_RTOL = 1e-10
EIG_CUTOFF = 1e-12
_DOMAIN_SLACK = 1e-12
_FAMILIES = ("gaussian", "sobolev1d", "matern")


class DomainError(ValueError):
    """A point lies outside the kernel's interval."""


class InsufficientDataError(ValueError):
    """Too few reliable eigenvalues to fit a decay law."""


@dataclass(frozen=True)
class Kernel:
    """Kernel specification.

    Parameters
    ----------
    family : {"gaussian", "sobolev1d", "matern"}
    params : mapping
        ``lengthscale`` for gaussian, ``order`` for sobolev1d,
        ``nu`` and ``lengthscale`` for matern.
    domain : (a, b)
    """

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        a, b = (float(v) for v in self.domain)
        if not a < b:
            raise ValueError("kernel domain must satisfy a < b")
        object.__setattr__(self, "domain", (a, b))
        params = dict(self.params)
        if self.family == "gaussian":
            params.setdefault("lengthscale", 1.0)
            _require_positive(params, "lengthscale")
            allowed = {"lengthscale"}
        elif self.family == "sobolev1d":
            params.setdefault("order", 1)
            k = params["order"]
            if int(k) != k or k < 1:
                raise ValueError("sobolev1d order must be a positive integer")
            params["order"] = int(k)
            allowed = {"order"}
        else:
            params.setdefault("nu", 1.5)
            params.setdefault("lengthscale", 1.0)
            _require_positive(params, "nu")
            _require_positive(params, "lengthscale")
            allowed = {"nu", "lengthscale"}
        extra = set(params) - allowed
        if extra:
            raise ValueError(f"unknown {self.family} parameters: {sorted(extra)}")
        object.__setattr__(self, "params", params)

    # constructors ---------------------------------------------------------
    @classmethod
    def gaussian(cls, lengthscale=1.0, domain=(0.0, 1.0)):
        return cls("gaussian", {"lengthscale": lengthscale}, domain)

    @classmethod
    def sobolev1d(cls, order=1, domain=(0.0, 1.0)):
        return cls("sobolev1d", {"order": order}, domain)

    @classmethod
    def matern(cls, nu=1.5, lengthscale=1.0, domain=(0.0, 1.0)):
        return cls("matern", {"nu": nu, "lengthscale": lengthscale}, domain)

    # serialization --------------------------------------------------------
    def to_dict(self):
        return {"family": self.family, "params": dict(self.params),
                "domain": list(self.domain)}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"family", "params", "domain"}
        if unknown:
            raise ValueError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(d["family"], d.get("params", {}),
                   tuple(d.get("domain", (0.0, 1.0))))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    # evaluation -----------------------------------------------------------
    def check_domain(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.domain
        slack = _DOMAIN_SLACK * max(1.0, b - a)
        bad = (x < a - slack) | (x > b + slack) | ~np.isfinite(x)
        if np.any(bad):
            offending = np.atleast_1d(x)[np.atleast_1d(bad)][0]
            raise DomainError(f"point {offending!r} outside domain [{a}, {b}]")
        return x

    def profile(self, r):
        """Kernel as a function of the distance ``r = |x - y|``."""
        r = np.abs(np.asarray(r, dtype=float))
        p = self.params
        if self.family == "gaussian":
            return np.exp(-0.5 * (r / p["lengthscale"]) ** 2)
        if self.family == "sobolev1d":
            k = p["order"]
            if k == 1:
                return 0.5 * np.exp(-r)
            nu = k - 0.5
            scale = math.gamma(nu) / (2.0 * math.sqrt(math.pi) * math.gamma(k))
            return scale * _matern_unit(r, nu)
        nu, ell = p["nu"], p["lengthscale"]
        return _matern_unit(math.sqrt(2.0 * nu) * r / ell, nu)

    def __call__(self, x, y):
        x = self.check_domain(x)
        y = self.check_domain(y)
        return self.profile(x - y)


def _require_positive(params, key):
    if not float(params[key]) > 0:
        raise ValueError(f"{key} must be positive")
    params[key] = float(params[key])


def _matern_unit(u, nu):
    """Matern correlation in the scaled distance ``u`` (value 1 at 0)."""
    u = np.asarray(u, dtype=float)
    if nu == 0.5:
        return np.exp(-u)
    if nu == 1.5:
        return (1.0 + u) * np.exp(-u)
    if nu == 2.5:
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    out = np.ones_like(u)
    pos = u > 0
    up = u[pos]
    out[pos] = (2.0 ** (1.0 - nu) / math.gamma(nu)) * up ** nu * special.kv(nu, up)
    return out


def kernel_eval(k: Kernel, x: float, y: float) -> float:
    """Evaluate ``K(x, y)``. Raises :class:`DomainError` off the interval."""
    return float(k(x, y))


def cross_gram(k: Kernel, xs, ys) -> np.ndarray:
    """Matrix ``K(xs[i], ys[j])``."""
    xs = k.check_domain(np.atleast_1d(xs))
    ys = k.check_domain(np.atleast_1d(ys))
    return k.profile(xs[:, None] - ys[None, :])


def gram(k: Kernel, nodes) -> np.ndarray:
    """Gram matrix on pairwise distinct nodes, symmetrized exactly."""
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    if np.unique(nodes).size != nodes.size:
        raise ValueError("gram nodes must be pairwise distinct")
    G = cross_gram(k, nodes, nodes)
    return 0.5 * (G + G.T)


def kappa(k: Kernel, probe_grid) -> float:
    """``sqrt(max K(x, x))`` over the probe grid."""
    probe = k.check_domain(np.atleast_1d(probe_grid))
    if probe.size == 0:
        raise ValueError("probe grid must be non-empty")
    return float(np.sqrt(np.max(k.profile(np.zeros_like(probe)))))


@dataclass(frozen=True)
class EigenDecay:
    """Polynomial decay fit ``t_n <= beta * n**(-b)``."""

    eigenvalues: np.ndarray
    fitted_b: float
    fitted_beta: float
    fit_residual: float
    n_reliable: int

    @property
    def decay_ok(self):
        """Whether the fit satisfies the ``b > 1`` requirement."""
        return self.fitted_b > 1.0

    def bound(self, n):
        n = np.asarray(n, dtype=float)
        return self.fitted_beta * n ** (-self.fitted_b)


def fit_power_law(values, cutoff=EIG_CUTOFF):
    """Least-squares fit of ``log t_n = log beta - b log n``.

    Returns ``(b, beta_ls, residual_rms, n_used)`` over entries with
    ``t_n > cutoff * t_1``.
    """
    t = np.asarray(values, dtype=float)
    if t.size == 0 or not t[0] > 0:
        raise InsufficientDataError("no positive eigenvalues")
    keep = t > cutoff * t[0]
    n_used = int(np.argmin(keep)) if not keep.all() else t.size
    if n_used < 4:
        raise InsufficientDataError(
            f"only {n_used} eigenvalues above {cutoff:g} * t_1 (need 4)")
    n = np.arange(1, n_used + 1, dtype=float)
    X = np.column_stack([np.ones(n_used), -np.log(n)])
    coef, *_ = np.linalg.lstsq(X, np.log(t[:n_used]), rcond=None)
    resid = np.log(t[:n_used]) - X @ coef
    return float(coef[1]), float(np.exp(coef[0])), float(np.sqrt(np.mean(resid ** 2))), n_used


def estimate_decay(G, weights) -> EigenDecay:
    """Empirical spectrum of ``W^1/2 G W^1/2`` and its power-law fit.

    The least-squares intercept is inflated so that the returned bound
    dominates every retained eigenvalue.
    """
    G = np.asarray(G, dtype=float)
    w = np.asarray(weights, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] != w.size:
        raise ValueError("G must be square and match the weights")
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    sw = np.sqrt(w)
    C = sw[:, None] * G * sw[None, :]
    t = np.linalg.eigvalsh(0.5 * (C + C.T))[::-1]
    if t[-1] < -PSD_RTOL * max(t[0], 0.0):
        raise ValueError("matrix is not positive semi-definite")
    t = np.clip(t, 0.0, None)
    b, beta, res, n_used = fit_power_law(t)
    n = np.arange(1, n_used + 1, dtype=float)
    beta = max(beta, float(np.max(t[:n_used] * n ** b)))
    return EigenDecay(t, b, beta, res, n_used)
