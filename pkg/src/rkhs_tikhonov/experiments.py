"""Simulation, source-condition truths, rate studies and concentration checks."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .hilbert import Grid, H1Vec, SampleSet, effective_dimension
from .kernels import Kernel, cross_gram, estimate_decay, gram, kappa
from .operators import ForwardOp, derivative_norm_h2, linearize
from .tikhonov import (IndexFunction, SolverOptions, lambda_choice, rate_exponents,
                       tikhonov_solve)

__all__ = [
    "SourceSpec",
    "SourceTruth",
    "SourceConstructionError",
    "RateStudyError",
    "matrix_function",
    "build_source_truth",
    "bernstein_constants",
    "bernstein_expectation",
    "simulate",
    "RateStudyConfig",
    "RateStudyResult",
    "RATE_CSV_HEADER",
    "run_rate_study",
    "fit_loglog_slope",
    "ConcentrationReport",
    "certify_moments",
    "pinelis_tail_check",
    "sampling_concentration_check",
    "neighborhood_condition_check",
]


class SourceConstructionError(RuntimeError):
    """The fixed-point iteration for the truth did not contract."""


class RateStudyError(RuntimeError):
    """Too many replicates failed to converge."""


def matrix_function(T, fn) -> np.ndarray:
    """``fn(T)`` for a symmetric PSD matrix via its eigendecomposition.

    Eigenvalues are clipped at zero before ``fn`` is applied.
    """
    T = np.asarray(T, dtype=float)
    s, U = np.linalg.eigh(0.5 * (T + T.T))
    s = np.clip(s, 0.0, None)
    return (U * np.asarray(fn(s), dtype=float)) @ U.T


# ---------------------------------------------------------------------------
# source-condition truths

@dataclass(frozen=True)
class SourceSpec:
    """How to build ``f_rho = fbar + phi(T_f) g``.

    ``profile="spectral"`` puts random-sign coefficients ``n^-1/2`` on the
    eigenvectors of ``T`` at ``fbar`` (so that the approximation error
    scales like ``phi(lam)`` over the whole spectrum); ``"random"`` draws
    a white Gaussian ``g``. Either way ``g`` is rescaled to ``g_norm``.
    """

    phi: IndexFunction
    R: float = 1.0
    g_seed: int = 0
    g_norm: float = 1.0
    fixedpoint_tol: float = 1e-10
    fixedpoint_iters: int = 50
    profile: str = "spectral"
    max_halvings: int = 10

    def __post_init__(self):
        if not self.R > 0 or not self.g_norm >= 0:
            raise ValueError("R must be positive and g_norm nonnegative")
        if self.g_norm > self.R * (1 + 1e-12):
            raise ValueError("g_norm must not exceed R")
        if self.profile not in ("spectral", "random"):
            raise ValueError(f"unknown source profile {self.profile!r}")


@dataclass(frozen=True, eq=False)
class SourceTruth:
    f_rho: H1Vec
    g: H1Vec
    g_norm: float
    iterations: int
    residual: float
    halvings: int
    contraction: float


def _direction(space, T, spec: SourceSpec):
    """Unit direction for ``g`` in whitened coordinates."""
    rng = np.random.default_rng(spec.g_seed)
    if spec.profile == "random":
        w = rng.standard_normal(space.n)
    else:
        s, U = np.linalg.eigh(T)
        U = U[:, ::-1]
        n = np.arange(1, space.n + 1)
        w = U @ (rng.choice([-1.0, 1.0], size=space.n) / np.sqrt(n))
    return w / np.linalg.norm(w)


def build_source_truth(op: ForwardOp, k: Optional[Kernel], fbar: H1Vec,
                       spec: SourceSpec, direction=None) -> SourceTruth:
    """Fixed point of ``f = fbar + phi(T_f) g``.

    ``T_f`` is the population ``T`` linearized at ``f``. If the iteration
    does not reach ``fixedpoint_tol`` the norm of ``g`` is halved and the
    iteration restarted, at most ``max_halvings`` times. ``direction``
    (whitened, unit norm) overrides the profile-based choice of ``g``.
    """
    space = fbar.space
    ubar = space.whiten(fbar.values)
    Tbar = linearize(op, k, fbar).T
    w = _direction(space, Tbar, spec) if direction is None else np.asarray(direction, float)
    g_norm = spec.g_norm
    for halving in range(spec.max_halvings + 1):
        gw = g_norm * w
        if g_norm == 0.0:
            return SourceTruth(fbar, space.zeros(), 0.0, 0, 0.0, halving, 0.0)
        u = ubar + matrix_function(Tbar, spec.phi) @ gw
        if op.is_linear:
            f = space.vec(space.unwhiten(u))
            return SourceTruth(f, space.vec(space.unwhiten(gw)), g_norm, 1, 0.0, halving, 0.0)
        res_prev, ratios, ok = None, [], False
        it = 0
        for it in range(1, spec.fixedpoint_iters + 1):
            if not np.all(np.isfinite(u)):
                break
            f = space.vec(space.unwhiten(u))
            if op.kind == "quadratic_integral" and np.any(f.values <= 0):
                break
            T = linearize(op, k, f).T
            u_new = ubar + matrix_function(T, spec.phi) @ gw
            res = float(np.linalg.norm(u_new - u))
            u = u_new
            if res_prev is not None and res_prev > 0:
                ratios.append(res / res_prev)
            if res < spec.fixedpoint_tol:
                ok = True
                break
            if res_prev is not None and res > res_prev and it > 3:
                break
            res_prev = res
        if ok:
            f = space.vec(space.unwhiten(u))
            if op.kind == "quadratic_integral" and np.any(f.values <= 0):
                ok = False
            else:
                rate = float(np.median(ratios)) if ratios else 0.0
                return SourceTruth(f, space.vec(space.unwhiten(gw)), g_norm, it, res,
                                   halving, rate)
        g_norm *= 0.5
    raise SourceConstructionError(
        f"fixed-point iteration did not contract after {spec.max_halvings} halvings of g")


# ---------------------------------------------------------------------------
# noise and simulation

def bernstein_constants(sigma: float):
    """Certificate ``(M, Sigma) = (3 sigma, 2 sigma)`` for centred Gaussian noise."""
    return 3.0 * sigma, 2.0 * sigma


def bernstein_expectation(sigma: float, M: float) -> float:
    """``E[exp(|e|/M) - |e|/M - 1]`` for ``e ~ N(0, sigma^2)`` by quadrature."""
    if sigma == 0:
        return 0.0

    def integrand(u):
        # u = t / sigma; the large-u branch avoids overflowing exp(a)
        a = sigma * u / M
        q = 0.5 * u * u
        if a < 1.0:
            return (math.expm1(a) - a) * math.exp(-q)
        return math.exp(a - q) - (1.0 + a) * math.exp(-q)

    val, _ = integrate.quad(integrand, 0.0, np.inf)
    return 2.0 * val / math.sqrt(2 * math.pi)


NOISE_MODELS = ("gaussian", "truncated_gaussian")


def simulate(op: ForwardOp, f_rho: H1Vec, m: int, noise_sigma: float, seed,
             noise_model="gaussian") -> SampleSet:
    """Draw ``x_i ~ U[a, b]`` and ``y_i = A(f_rho)(x_i) + e_i``.

    ``truncated_gaussian`` rejects draws with ``|e| > 3 sigma``; it keeps the
    Gaussian certificate since truncation only shrinks absolute moments.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    if noise_model not in NOISE_MODELS:
        raise ValueError(f"unknown noise model {noise_model!r}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(op.grid.a, op.grid.b, size=m)
    eps = noise_sigma * rng.standard_normal(m)
    if noise_model == "truncated_gaussian" and noise_sigma > 0:
        bad = np.abs(eps) > 3 * noise_sigma
        while np.any(bad):
            eps[bad] = noise_sigma * rng.standard_normal(int(bad.sum()))
            bad = np.abs(eps) > 3 * noise_sigma
    y = op.apply(f_rho.values, x) + eps
    M, S = bernstein_constants(noise_sigma)
    meta = {"model": noise_model, "sigma": float(noise_sigma), "M": M, "Sigma_bernstein": S}
    return SampleSet(x, y, seed if isinstance(seed, (int, np.integer)) else None, meta)


# ---------------------------------------------------------------------------
# rate studies

LAMBDA_RULES = ("theta_rule", "psi_rule", "fixed_grid")


@dataclass(frozen=True)
class RateStudyConfig:
    ms: Sequence[int]
    replicates: int
    noise_sigma: float
    phi: IndexFunction
    R: float = 1.0
    b: Optional[float] = None
    seed: int = 0
    lambda_rule: str = "psi_rule"
    lambda_grid: Optional[Sequence[float]] = None
    g_norm: Optional[float] = None
    g_seed: int = 0
    source_profile: str = "spectral"
    noise_model: str = "gaussian"
    solver: SolverOptions = field(default_factory=SolverOptions)
    eta: float = 0.1

    def __post_init__(self):
        ms = tuple(int(m) for m in self.ms)
        if len(ms) < 2 or any(b <= a for a, b in zip(ms, ms[1:])) or ms[0] < 1:
            raise ValueError("ms must hold at least two increasing positive sizes")
        object.__setattr__(self, "ms", ms)
        if self.replicates < 3:
            raise ValueError("replicates must be >= 3")
        if self.lambda_rule not in LAMBDA_RULES:
            raise ValueError(f"unknown lambda_rule {self.lambda_rule!r}")
        if self.lambda_rule == "fixed_grid":
            if self.lambda_grid is None or len(self.lambda_grid) != len(ms):
                raise ValueError("fixed_grid needs one lambda per m")
            if any(not v > 0 for v in self.lambda_grid):
                raise ValueError("lambda_grid entries must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")

    def lam(self, m, b):
        if self.lambda_rule == "fixed_grid":
            return float(self.lambda_grid[self.ms.index(m)]), False
        choice = lambda_choice(m, self.phi, b if self.lambda_rule == "psi_rule" else None)
        return choice.value, choice.saturated


RATE_CSV_HEADER = ["m", "replicate", "lambda", "err_h1", "err_pred", "gn_iters",
                   "converged", "condition_ok"]


@dataclass(frozen=True)
class RateRow:
    m: int
    replicate: int
    lam: float
    err_h1: float
    err_pred: float
    gn_iters: int
    converged: bool
    condition_ok: bool
    seconds: float


@dataclass(frozen=True, eq=False)
class RateStudyResult:
    rows: tuple
    fitted_slope_h1: float
    fitted_slope_pred: float
    theoretical_h1: float
    theoretical_pred: float
    slope_stderr: float
    slope_stderr_pred: float
    b: float
    truth: SourceTruth
    exponents: object
    n_failed: int
    condition_ms: tuple

    def medians(self):
        """``{m: (median err_h1, median err_pred)}`` over converged replicates."""
        out = {}
        for m in sorted({r.m for r in self.rows}):
            ok = [r for r in self.rows if r.m == m and r.converged]
            if ok:
                out[m] = (float(np.median([r.err_h1 for r in ok])),
                          float(np.median([r.err_pred for r in ok])))
        return out

    def to_csv(self) -> str:
        """Rows as CSV text; wall-clock seconds are left out so output is deterministic."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RATE_CSV_HEADER)
        for r in self.rows:
            w.writerow([r.m, r.replicate, repr(r.lam), repr(r.err_h1), repr(r.err_pred),
                        r.gn_iters, str(r.converged).lower(), str(r.condition_ok).lower()])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "replicate", "seconds"])
        for r in self.rows:
            w.writerow([r.m, r.replicate, f"{r.seconds:.6f}"])
        return buf.getvalue()

    def summary(self):
        e = self.exponents
        return {
            "b": self.b,
            "r": e.r,
            "fitted_slope_h1": self.fitted_slope_h1,
            "fitted_slope_pred": self.fitted_slope_pred,
            "slope_stderr": self.slope_stderr,
            "slope_stderr_pred": self.slope_stderr_pred,
            "theoretical_h1": self.theoretical_h1,
            "theoretical_pred": self.theoretical_pred,
            "outside_theory": e.outside_theory,
            "saturated": e.saturated,
            "n_rows": len(self.rows),
            "n_failed": self.n_failed,
            "condition_ms": list(self.condition_ms),
            "g_norm": self.truth.g_norm,
        }


def fit_loglog_slope(ms, errs):
    """Least-squares slope of ``log err`` against ``log m`` and its standard error."""
    lx = np.log(np.asarray(ms, dtype=float))
    ly = np.log(np.asarray(errs, dtype=float))
    if lx.size < 2:
        raise ValueError("need at least two points for a slope")
    X = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    if lx.size > 2:
        resid = ly - X @ coef
        s2 = float(resid @ resid) / (lx.size - 2)
        se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2)))
    else:
        se = float("nan")
    return float(coef[1]), se


@dataclass(frozen=True, eq=False)
class _StudyContext:
    cfg: RateStudyConfig
    op: ForwardOp
    k: Kernel
    fbar: H1Vec
    f_rho: H1Vec
    b: float
    kappa: float
    L: float
    d: float


def _replicate_seed(seed, m, rep):
    ss = np.random.SeedSequence([int(seed), int(m), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _run_cell(job):
    ctx, m, rep = job
    cfg = ctx.cfg
    t0 = time.perf_counter()
    lam, _ = cfg.lam(m, ctx.b)
    data = simulate(ctx.op, ctx.f_rho, m, cfg.noise_sigma, _replicate_seed(cfg.seed, m, rep),
                    cfg.noise_model)
    fit = tikhonov_solve(ctx.op, ctx.k, data, ctx.fbar, lam, cfg.solver)
    f = fit.solution
    err_h1 = (f - ctx.f_rho).norm()
    nodes = ctx.op.grid.nodes
    dpred = ctx.op.apply(f.values, nodes) - ctx.op.apply(ctx.f_rho.values, nodes)
    err_pred = float(np.sqrt(np.sum(ctx.op.grid.probability_weights * dpred ** 2)))
    M, S = bernstein_constants(cfg.noise_sigma)
    cond = neighborhood_condition_check(m, lam, ctx.kappa, ctx.L, max(M, 1e-300),
                                        max(S, 1e-300), ctx.d, cfg.eta)
    return RateRow(m, rep, lam, err_h1, err_pred, fit.gn_iters, fit.converged, cond,
                   time.perf_counter() - t0)


def run_rate_study(cfg: RateStudyConfig, op: ForwardOp, k: Kernel, fbar: H1Vec,
                   truth: Optional[SourceTruth] = None, map_fn: Callable = map,
                   max_fail_frac=0.2) -> RateStudyResult:
    """Monte Carlo study of error against sample size.

    For each ``(m, replicate)``: simulate with a seed derived from
    ``(cfg.seed, m, replicate)``, choose ``lam``, solve, and record the H1
    error and the ``L2(rho_X)`` prediction error. Slopes are least-squares
    fits of log median error (converged replicates only) against ``log m``.

    ``map_fn`` runs the independent cells; pass an executor's ``map`` for
    parallel runs. Results are ordered by ``(m, replicate)``.
    """
    grid = op.grid
    if cfg.b is None:
        b = estimate_decay(gram(k, grid.nodes), grid.probability_weights).fitted_b
    else:
        b = float(cfg.b)
    if truth is None:
        spec = SourceSpec(cfg.phi, cfg.R, cfg.g_seed,
                          cfg.R if cfg.g_norm is None else cfg.g_norm,
                          profile=cfg.source_profile)
        truth = build_source_truth(op, k, fbar, spec)
    kap = kappa(k, grid.nodes)
    L = op.lipschitz_L if op.lipschitz_L is not None else derivative_norm_h2(op, k, truth.f_rho)
    d = op.ball_radius_d if op.ball_radius_d is not None else 1.0
    ctx = _StudyContext(cfg, op, k, fbar, truth.f_rho, b, kap, L, d)
    jobs = [(ctx, m, rep) for m in cfg.ms for rep in range(cfg.replicates)]
    rows = sorted(map_fn(_run_cell, jobs), key=lambda r: (r.m, r.replicate))
    n_failed = sum(not r.converged for r in rows)
    if n_failed > max_fail_frac * len(rows):
        raise RateStudyError(f"{n_failed} of {len(rows)} replicates did not converge")
    res = RateStudyResult(tuple(rows), 0, 0, 0, 0, 0, 0, b, truth, None, n_failed, ())
    med = res.medians()
    ms = sorted(med)
    s_h1, se_h1 = fit_loglog_slope(ms, [med[m][0] for m in ms])
    s_pr, se_pr = fit_loglog_slope(ms, [med[m][1] for m in ms])
    ex = rate_exponents(cfg.phi.r if cfg.phi.family == "holder" else float("nan"), b)
    cond_ms = tuple(m for m in cfg.ms if all(r.condition_ok for r in rows if r.m == m))
    return replace(res, fitted_slope_h1=s_h1, fitted_slope_pred=s_pr,
                   theoretical_h1=-ex.h1_exponent, theoretical_pred=-ex.prediction_exponent,
                   slope_stderr=se_h1, slope_stderr_pred=se_pr, exponents=ex,
                   condition_ms=cond_ms)


# ---------------------------------------------------------------------------
# concentration

@dataclass(frozen=True)
class ConcentrationReport:
    eta_grid: np.ndarray
    empirical_tail_freq: np.ndarray
    bound_values: np.ndarray
    trials: int
    label: str = ""

    @property
    def slack(self):
        e = self.eta_grid
        return e + 2.0 * np.sqrt(e * (1 - e) / self.trials)

    @property
    def ok(self):
        return bool(np.all(self.empirical_tail_freq <= self.slack))


def certify_moments(abs_moment: Callable[[int], float], Q: float, S: float,
                    n_max=80) -> bool:
    """Check ``E|xi - E xi|^n <= n!/2 S^2 Q^(n-2)`` for ``2 <= n <= n_max`` in log scale."""
    for n in range(2, n_max + 1):
        lhs = abs_moment(n)
        if lhs == 0:
            continue
        if S == 0 or (Q == 0 and n > 2):
            return False
        log_rhs = special.gammaln(n + 1) - math.log(2) + 2 * math.log(S) + (n - 2) * math.log(Q) \
            if Q > 0 else special.gammaln(n + 1) - math.log(2) + 2 * math.log(S)
        if math.log(lhs) > log_rhs + 1e-12:
            return False
    return True


def _model_moments(model: str, sigma: float):
    if model == "gaussian":
        return lambda n: sigma ** n * 2 ** (n / 2) * math.exp(special.gammaln((n + 1) / 2)) / math.sqrt(math.pi)
    if model == "rademacher":
        return lambda n: sigma ** n
    if model == "constant":
        return lambda n: 0.0
    raise ValueError(f"unknown summand model {model!r}")


def pinelis_tail_check(trials: int, m: int, noise_model="gaussian", eta_grid=(0.3, 0.1, 0.03),
                       sigma=1.0, seed=0, Q=None, S=None) -> ConcentrationReport:
    """Empirical tails of a scalar sample mean against the Pinelis-Sakhanenko bound.

    The summand is ``sigma * N(0, 1)`` (``gaussian``), ``+-sigma``
    (``rademacher``) or the constant ``sigma`` (``constant``). ``(Q, S)``
    default to ``(sigma, sigma)`` and are certified numerically against the
    absolute central moments before use.
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    eta = np.asarray(eta_grid, dtype=float)
    Q = sigma if Q is None else Q
    S = sigma if S is None else S
    if noise_model == "constant":
        Q = S = 0.0
    if not certify_moments(_model_moments(noise_model, sigma), Q, S):
        raise ValueError("moment certificate (Q, S) fails for this model")
    rng = np.random.default_rng(seed)
    if noise_model == "gaussian":
        dev = np.abs(sigma * rng.standard_normal((trials, m)).mean(axis=1))
    elif noise_model == "rademacher":
        dev = np.abs(sigma * rng.choice([-1.0, 1.0], size=(trials, m)).mean(axis=1))
    else:
        dev = np.abs(np.full((trials, m), sigma).mean(axis=1) - sigma)
    bounds = 2.0 * (Q / m + S / math.sqrt(m)) * np.log(2.0 / eta)
    freq = np.array([np.mean(dev > bd) for bd in bounds])
    return ConcentrationReport(eta, freq, bounds, trials, f"pinelis/{noise_model}/m={m}")


def sampling_concentration_check(k: Kernel, m: int, trials: int, eta_grid=(0.3, 0.1, 0.03),
                                 sigma=1.0, lam=None, seed=0, n_fine=401):
    """Monte Carlo check of the three sampling bounds and the ``lam/2`` surrogate.

    Draws ``x ~ U[a, b]`` and Gaussian noise with Bernstein certificate
    ``(3 sigma, 2 sigma)`` and returns a dict of :class:`ConcentrationReport`:

    ``noise``: ``||(1/m) sum K_{x_i} e_i||_H``,
    ``noise_lam``: the same after ``(L_K + lam)^-1/2`` (Mercer expansion
    from a fine-grid Nystrom approximation),
    ``cov``: ``||S_x^* S_x - L_K||_HS``,
    ``cov_half``: frequency of ``||S_x^* S_x - L_K||_HS > lam_I/2`` with
    ``lam_I = 8 kappa^2 log(4/eta)/sqrt(m)``, compared against ``eta/2``.
    """
    a, b = k.domain
    eta = np.asarray(eta_grid, dtype=float)
    kap = kappa(k, np.linspace(a, b, 3))
    M, Sig = bernstein_constants(sigma)
    grid = Grid.trapezoid(a, b, n_fine, normalize=True)
    w = grid.probability_weights
    G = gram(k, grid.nodes)
    sw = np.sqrt(w)
    mu, U = np.linalg.eigh(sw[:, None] * G * sw[None, :])
    keep = mu > 1e-12 * mu[-1]
    mu, U = mu[keep], U[:, keep]
    if lam is None:
        lam = 0.1
    N_lam = effective_dimension(mu, lam).value
    # int K(x, t)^2 drho(t) on the fine grid, and int int K^2
    K2_row = (G ** 2) @ w
    K2_tot = float(w @ K2_row)
    rng = np.random.default_rng(seed)
    noise, noise_lam, cov = (np.empty(trials) for _ in range(3))
    coef = (sw[:, None] * U) / mu  # Nystrom: phi_j(x) = K(x, nodes) @ coef[:, j]
    shrink = mu / (mu + lam)
    for t in range(trials):
        x = rng.uniform(a, b, m)
        e = sigma * rng.standard_normal(m)
        Kxx = k.profile(x[:, None] - x[None, :])
        noise[t] = math.sqrt(max(e @ Kxx @ e, 0.0)) / m
        Phi = cross_gram(k, x, grid.nodes) @ coef
        proj = Phi.T @ e / m
        noise_lam[t] = math.sqrt(float(np.sum(shrink * proj ** 2)))
        hs2 = np.sum(Kxx ** 2) / m ** 2 - 2.0 / m * np.sum(np.interp(x, grid.nodes, K2_row)) + K2_tot
        cov[t] = math.sqrt(max(hs2, 0.0))
    log2 = np.log(2.0 / eta)
    b_noise = 2 * (kap * M / m + kap * Sig / math.sqrt(m)) * log2
    b_noise_lam = 2 * (kap * M / (m * math.sqrt(lam)) + math.sqrt(Sig ** 2 * N_lam / m)) * log2
    b_cov = 2 * (kap ** 2 / m + kap ** 2 / math.sqrt(m)) * log2
    lam_I = 8 * kap ** 2 * np.log(4.0 / eta) / math.sqrt(m)
    out = {}
    for name, vals, bounds in (("noise", noise, b_noise), ("noise_lam", noise_lam, b_noise_lam),
                               ("cov", cov, b_cov)):
        freq = np.array([np.mean(vals > bd) for bd in bounds])
        out[name] = ConcentrationReport(eta, freq, bounds, trials, f"{name}/m={m}")
    freq = np.array([np.mean(cov > li / 2) for li in lam_I])
    out["cov_half"] = ConcentrationReport(eta / 2, freq, lam_I / 2, trials, f"cov_half/m={m}")
    return out


def neighborhood_condition_check(m, lam, kappa, L, M, Sigma, d, eta, rtol=1e-12) -> bool:
    """``8 kappa^2 max(1, L (M + Sigma)/(kappa d)) log(4/eta) <= sqrt(m) lam``."""
    for name, v in (("m", m), ("kappa", kappa), ("L", L), ("M", M), ("Sigma", Sigma), ("d", d)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not lam > 0:
        return False
    lhs = 8.0 * kappa ** 2 * max(1.0, L * (M + Sigma) / (kappa * d)) * math.log(4.0 / eta)
    rhs = math.sqrt(m) * lam
    return lhs <= rhs * (1.0 + rtol)
