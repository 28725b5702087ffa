"""Regularized least squares by damped Gauss-Newton, and parameter choice.

The estimator minimizes

    (1/m) sum_i (A(f)(x_i) - y_i)**2 + lam * ||f - fbar||_H1**2

starting from ``fbar``. Steps are computed in whitened H1 coordinates, where
the penalty is the Euclidean norm and the normal equations read
``(J^T J / m + (lam + mu) I) delta = -(J^T r / m + lam (u - ubar))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from .hilbert import H1Vec, SampleSet
from .kernels import Kernel
from .operators import ForwardOp

__all__ = [
    "IndexFunction",
    "TikhonovFit",
    "SolverOptions",
    "RateExponents",
    "LambdaChoice",
    "tikhonov_objective",
    "tikhonov_solve",
    "population_linearized_solution",
    "lambda_choice",
    "rate_exponents",
    "smallness_check",
    "FIT_CSV_HEADER",
    "fit_csv_row",
]


@dataclass(frozen=True)
class IndexFunction:
    """Index function ``phi`` for the source condition.

    ``holder``: ``phi(t) = t**r``.
    ``log_type``: ``phi(t) = t**p * log(1/t)**(-nu)``, defined for ``t < 1``,
    so its ``domain_cap`` must stay below one.
    """

    family: str
    r: float = 0.5
    p: int = 1
    nu: float = 0.0
    domain_cap: float = 1.0

    def __post_init__(self):
        if self.family == "holder":
            if not self.r >= 0:
                raise ValueError("holder exponent r must be >= 0")
        elif self.family == "log_type":
            if int(self.p) != self.p or self.p < 1:
                raise ValueError("log_type p must be a positive integer")
            if not 0.0 <= self.nu <= 1.0:
                raise ValueError("log_type nu must lie in [0, 1]")
            if not self.domain_cap < 1.0:
                raise ValueError("log_type index functions need domain_cap < 1")
        else:
            raise ValueError(f"unknown index function family {self.family!r}")
        if not self.domain_cap > 0:
            raise ValueError("domain_cap must be positive")

    @classmethod
    def holder(cls, r, domain_cap=1.0):
        return cls("holder", r=float(r), domain_cap=float(domain_cap))

    @classmethod
    def log_type(cls, p, nu, domain_cap=0.5):
        return cls("log_type", p=int(p), nu=float(nu), domain_cap=float(domain_cap))

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, None)
        if self.family == "holder":
            return t ** self.r
        out = np.zeros_like(t)
        pos = t > 0
        if np.any(t >= 1.0):
            raise ValueError("log_type index function is undefined for t >= 1")
        out[pos] = t[pos] ** self.p * np.log(1.0 / t[pos]) ** (-self.nu)
        return out

    def inverse(self, s, rtol=1e-12):
        """``phi^-1(s)`` on ``[0, domain_cap]`` by bisection (closed form for holder)."""
        if self.family == "holder" and self.r > 0:
            return float(s) ** (1.0 / self.r)
        return _bisect(lambda t: float(self(t)), float(s), self.domain_cap, rtol)[0]

    def check(self, t_min=None, n=400, upper_rate=False):
        """Grid checks of the index-function invariants.

        Returns a dict of booleans: ``zero_at_zero``, ``nondecreasing``
        and, with ``upper_rate``, ``psi_nondecreasing`` and
        ``sqrt_over_psi_nondecreasing`` for ``psi = phi / sqrt(t)``.
        """
        lo = t_min if t_min is not None else self.domain_cap * 1e-8
        t = np.geomspace(lo, self.domain_cap * (1 - 1e-12), n)
        v = self(t)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        out = {"zero_at_zero": float(self(np.array([0.0]))[0]) == 0.0,
               "nondecreasing": bool(np.all(np.diff(v) >= -tol))}
        if upper_rate:
            psi = v / np.sqrt(t)
            q = np.sqrt(t) / np.where(psi > 0, psi, np.inf)
            out["psi_nondecreasing"] = bool(np.all(np.diff(psi) >= -tol * np.max(psi)))
            out["sqrt_over_psi_nondecreasing"] = bool(np.all(np.diff(q) >= -tol * np.max(q)))
        return out

    def to_dict(self):
        if self.family == "holder":
            return {"family": "holder", "r": self.r, "domain_cap": self.domain_cap}
        return {"family": "log_type", "p": self.p, "nu": self.nu,
                "domain_cap": self.domain_cap}

    @classmethod
    def from_dict(cls, d):
        allowed = {"family", "r", "p", "nu", "domain_cap"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown index-function keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 100
    step_tol: float = 1e-9
    damping: bool = True
    multistart: int = 0
    multistart_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")


@dataclass(frozen=True, eq=False)
class TikhonovFit:
    solution: H1Vec
    lam: float
    objective_trace: np.ndarray
    gn_iters: int
    converged: bool
    residual_norm: float
    h1_penalty: float
    last_step: float = float("nan")
    message: str = ""
    multistart_objectives: tuple = field(default_factory=tuple)


def _check_lambda(lam, diagnostics=False):
    lam = float(lam)
    if lam < 0 or (lam == 0 and not diagnostics) or not math.isfinite(lam):
        raise ValueError("lambda must be positive (zero only in diagnostics mode)")
    return lam


def tikhonov_objective(op: ForwardOp, data: SampleSet, f: H1Vec, fbar: H1Vec,
                       lam: float, diagnostics=False) -> float:
    """Empirical misfit plus ``lam * ||f - fbar||^2``."""
    lam = _check_lambda(lam, diagnostics)
    r = op.apply(f.values, data.x) - data.y
    pen = (f - fbar).norm() ** 2
    return float(np.mean(r * r) + lam * pen)


def tikhonov_solve(op: ForwardOp, k: Optional[Kernel], data: SampleSet, fbar: H1Vec,
                   lam: float, opts: Optional[SolverOptions] = None) -> TikhonovFit:
    """Damped Gauss-Newton (Levenberg-Marquardt) for the Tikhonov functional.

    Linear operators take a single undamped step. For non-linear operators
    the damping starts at ``1e-3 * tr(J^T J / m) / n`` and is multiplied by
    10 on rejected steps and divided by 3 on accepted ones. Iteration stops
    when the H1 step falls below ``step_tol`` relative to the iterate.

    With ``opts.multistart > 0`` additional runs start from random
    perturbations of ``fbar`` and the fit with the smallest objective is
    returned; all final objectives are kept for diagnostics.
    """
    lam = _check_lambda(lam)
    opts = opts or SolverOptions()
    if fbar.grid is not op.grid:
        raise ValueError("fbar and operator use different grids")
    fit = _gauss_newton(op, data, fbar, fbar, lam, opts)
    if opts.multistart <= 0:
        return fit
    space = fbar.space
    rng = np.random.default_rng(opts.seed)
    fits = [fit]
    scale = opts.multistart_scale * max(fbar.norm(), 1.0)
    for _ in range(opts.multistart):
        d = space.unwhiten(rng.standard_normal(space.n))
        start = fbar + d * (scale / space.norm(d))
        fits.append(_gauss_newton(op, data, fbar, start, lam, opts))
    objs = tuple(float(f.objective_trace[-1]) for f in fits)
    best = fits[int(np.argmin(objs))]
    return TikhonovFit(best.solution, best.lam, best.objective_trace, best.gn_iters,
                       best.converged, best.residual_norm, best.h1_penalty,
                       best.last_step, best.message, objs)


def _gauss_newton(op, data, fbar, start, lam, opts):
    space = fbar.space
    Ps, Pi = space.metric_sqrt, space.metric_isqrt
    m = data.m
    ubar = Ps @ fbar.values
    u = Ps @ start.values
    eye = np.eye(space.n)

    def state(u):
        v = Pi @ u
        r = op.apply(v, data.x) - data.y
        return v, r, float(np.mean(r * r) + lam * np.sum((u - ubar) ** 2))

    v, r, obj = state(u)
    trace = [obj]
    mu = None
    converged = False
    accepted = 0
    last_step = float("nan")
    message = "max_iters reached"
    for _ in range(opts.max_iters):
        Jw = op.jacobian(v, data.x) @ Pi
        H = Jw.T @ Jw / m
        grad = Jw.T @ r / m + lam * (u - ubar)
        if op.is_linear or not opts.damping:
            mu = 0.0
        elif mu is None:
            mu = 1e-3 * np.trace(H) / space.n
        step_ok = False
        for _esc in range(30):
            A = H + (lam + mu) * eye
            delta = -linalg.solve(0.5 * (A + A.T), grad, assume_a="pos")
            last_step = float(np.linalg.norm(delta) / max(np.linalg.norm(u), 1e-300))
            if last_step < opts.step_tol:
                converged = True
                break
            v_new, r_new, obj_new = state(u + delta)
            if obj_new < obj or (op.is_linear and obj_new <= obj):
                u, v, r, obj = u + delta, v_new, r_new, obj_new
                trace.append(obj)
                accepted += 1
                mu = mu / 3.0
                step_ok = True
                break
            if mu == 0.0:
                mu = 1e-3 * max(np.trace(H) / space.n, lam)
            else:
                mu *= 10.0
        if converged:
            message = "relative step below tolerance"
            break
        if not step_ok:
            message = "objective did not decrease after damping escalation"
            break
    sol = space.vec(v)
    return TikhonovFit(
        solution=sol,
        lam=lam,
        objective_trace=np.array(trace),
        gn_iters=accepted,
        converged=converged,
        residual_norm=float(np.sqrt(np.mean(r * r))),
        h1_penalty=float(np.sum((u - ubar) ** 2)),
        last_step=last_step,
        message=message,
    )


def population_linearized_solution(T: np.ndarray, f_rho: H1Vec, fbar: H1Vec,
                                   lam: float) -> H1Vec:
    """``(T + lam)^-1 (T f_rho + lam fbar)`` with ``T`` in whitened coordinates."""
    lam = _check_lambda(lam)
    space = f_rho.space
    if fbar.space is not space:
        raise ValueError("f_rho and fbar live on different spaces")
    T = np.asarray(T, dtype=float)
    if T.shape != (space.n, space.n):
        raise ValueError("T has the wrong shape")
    a, abar = space.whiten(f_rho.values), space.whiten(fbar.values)
    A = 0.5 * (T + T.T) + lam * np.eye(space.n)
    u = linalg.solve(A, T @ a + lam * abar, assume_a="pos")
    return space.vec(space.unwhiten(u))


class LambdaChoice(NamedTuple):
    value: float
    saturated: bool


def _bisect(fn, target, cap, rtol):
    """Invert an increasing ``fn`` on ``(0, cap]`` in log scale."""
    if fn(cap) <= target:
        return cap, fn(cap) < target
    lo, hi = cap, cap
    while fn(lo) > target:
        lo *= 0.5
        if lo < 1e-300:
            return lo, False
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if fn(mid) > target:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < rtol:
            break
    return math.sqrt(lo * hi), False


def lambda_choice(m: int, phi: IndexFunction, b: Optional[float] = None,
                  rtol=1e-12) -> LambdaChoice:
    """Solve ``Theta(lam) = m^-1/2`` or, with ``b``, ``Psi(lam) = m^-1/2``.

    ``Theta(t) = t phi(t)``, ``Psi(t) = t^(1/2 + 1/(2b)) phi(t)``. If the
    target exceeds the value at ``phi.domain_cap`` the cap is returned with
    ``saturated=True``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if b is not None and not b > 1:
        raise ValueError("b must exceed 1")
    e = 1.0 if b is None else 0.5 + 0.5 / b

    def fn(t):
        return t ** e * float(phi(np.array([t]))[0])

    value, saturated = _bisect(fn, m ** -0.5, phi.domain_cap, rtol)
    return LambdaChoice(float(value), bool(saturated))


@dataclass(frozen=True)
class RateExponents:
    r: float
    b: float
    h1_exponent: float
    prediction_exponent: float
    pphi_exponent: float
    lambda_exponent: float
    outside_theory: bool
    saturated: bool


def rate_exponents(r: float, b: float) -> RateExponents:
    """Rate exponents for Hoelder smoothness ``r`` and decay ``b``.

    ``h1_exponent = br/(2br+b+1)``, ``prediction_exponent = b/(2b+1)``
    (the ``r = 1/2`` case), ``pphi_exponent = r/(2r+2)``.
    Inputs outside ``1/2 <= r <= 1, b > 1`` are flagged, not refused; ``r > 1``
    additionally sets ``saturated``.
    """
    r, b = float(r), float(b)
    return RateExponents(
        r=r,
        b=b,
        h1_exponent=b * r / (2 * b * r + b + 1),
        prediction_exponent=b / (2 * b + 1),
        pphi_exponent=r / (2 * r + 2),
        lambda_exponent=b / (2 * b * r + b + 1),
        outside_theory=not (0.5 <= r <= 1.0 and b > 1.0),
        saturated=r > 1.0,
    )


def smallness_check(gamma: float, w_norm: float) -> bool:
    """``2 gamma ||w|| < 1``."""
    if gamma < 0 or w_norm < 0:
        raise ValueError("gamma and w_norm must be nonnegative")
    return 2.0 * gamma * w_norm < 1.0


FIT_CSV_HEADER = ["m", "lambda", "gn_iters", "converged", "residual_norm",
                  "h1_penalty", "err_h1", "err_pred"]


def fit_csv_row(fit: TikhonovFit, m: int, err_h1=None, err_pred=None):
    def fmt(v):
        return "" if v is None else repr(float(v))
    return [str(int(m)), repr(fit.lam), str(fit.gn_iters), str(bool(fit.converged)).lower(),
            repr(fit.residual_norm), repr(fit.h1_penalty), fmt(err_h1), fmt(err_pred)]
