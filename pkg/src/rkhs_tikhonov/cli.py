"""Command-line entry point.

Commands read a JSON config (unknown keys are rejected) and write CSV/JSON
files into ``--out``. Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 property-check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .experiments import (RateStudyConfig, RateStudyError, SourceConstructionError, SourceSpec,
                          build_source_truth, pinelis_tail_check, run_rate_study,
                          sampling_concentration_check, simulate)
from .hilbert import (Grid, H1Space, SampleSet, effective_dimension, effdim_decay_constant,
                      empirical_covariance, fit_effdim_constant)
from .kernels import Kernel, InsufficientDataError, estimate_decay, fit_power_law, gram, kappa
from .lowerbound import (build_hard_family, hs_operator_lipschitz_check, hs_sqrt_perturbation_check,
                         hs_sqrt_ratio, pack_signs)
from .operators import ForwardOp, GaussianTheta, derivative_norm_h2, linearize, load_theta_csv
from .tikhonov import (FIT_CSV_HEADER, IndexFunction, SolverOptions, fit_csv_row, tikhonov_solve)

log = logging.getLogger("rkhs_tikhonov")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PROPERTY = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing

def _section(cfg, key, allowed, required=(), where=""):
    d = cfg.get(key, {}) if isinstance(cfg, dict) else None
    path = f"{where}{key}"
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for r in required:
        if r not in d:
            raise ConfigError(f"{path}.{r}: required")
    return d


def _check_keys(cfg, allowed, where="config"):
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _num(d, key, path, default=None, positive=False, nonneg=False, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{path}.{key}: required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}: must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(f"{path}.{key}: must be nonnegative, got {v!r}")
    return int(v) if integer else float(v)


def _wrap(path, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


class Problem:
    """Objects assembled from the shared config blocks."""

    def __init__(self, cfg, base_dir=Path(".")):
        self.kernel = _wrap("kernel", Kernel.from_dict, _section(cfg, "kernel",
                            ("family", "params", "domain"), ("family",)))
        gd = _section(cfg, "grid", ("a", "b", "n", "rule", "normalize"))
        self.grid = _wrap("grid", Grid.from_dict, gd)
        h1 = _section(cfg, "h1", ("norm_mode",))
        mode = h1.get("norm_mode", "rkhs")
        if mode not in ("rkhs", "weighted_l2"):
            raise ConfigError(f"h1.norm_mode: unknown mode {mode!r}")
        self.space = H1Space(self.grid, self.kernel if mode == "rkhs" else None)
        od = _section(cfg, "operator", ("kind", "theta", "lipschitz_L", "nonlinearity_gamma",
                                        "ball_radius_d"), ("kind",))
        theta = None
        if od.get("theta") is not None:
            td = od["theta"]
            if not isinstance(td, dict):
                raise ConfigError("operator.theta: expected an object")
            if "csv" in td:
                _check_keys(td, ("csv",), "operator.theta")
                theta = _wrap("operator.theta.csv", load_theta_csv, base_dir / td["csv"])
            else:
                _check_keys(td, ("family", "width", "scale", "normalized"), "operator.theta")
                if td.get("family", "gaussian") != "gaussian":
                    raise ConfigError("operator.theta.family: only 'gaussian' is supported")
                theta = _wrap("operator.theta", GaussianTheta,
                              _num(td, "width", "operator.theta", 1.0, positive=True),
                              _num(td, "scale", "operator.theta", 1.0),
                              bool(td.get("normalized", False)))
        extra = {k: _num(od, k, "operator", positive=True) for k in
                 ("lipschitz_L", "ball_radius_d") if k in od}
        if "nonlinearity_gamma" in od:
            extra["nonlinearity_gamma"] = _num(od, "nonlinearity_gamma", "operator", nonneg=True)
        self.op = _wrap("operator", ForwardOp, od["kind"], self.grid, theta,
                        self.kernel, *[extra.get(k) for k in
                                       ("lipschitz_L", "nonlinearity_gamma", "ball_radius_d")])
        fd = _section(cfg, "fbar", ("constant", "values"))
        if "values" in fd:
            vals = np.asarray(fd["values"], dtype=float)
            if vals.shape != (self.grid.n,):
                raise ConfigError(f"fbar.values: expected {self.grid.n} values")
        else:
            vals = np.full(self.grid.n, _num(fd, "constant", "fbar", 0.0))
        self.fbar = self.space.vec(vals)
        if self.op.kind == "quadratic_integral" and np.any(vals <= 0):
            log.warning("fbar leaves the positive cone; the quadratic operator is not injective there")

    def domain_cap(self):
        """``kappa^2 L^2`` at ``fbar`` (floored at 1)."""
        L = self.op.lipschitz_L or derivative_norm_h2(self.op, self.kernel, self.fbar)
        return max(kappa(self.kernel, self.grid.nodes) ** 2 * L ** 2, 1.0)


def _phi(cfg, problem, key="phi"):
    d = _section(cfg, key, ("family", "r", "p", "nu", "domain_cap"), ("family",))
    d = dict(d)
    if "domain_cap" not in d:
        cap = problem.domain_cap()
        d["domain_cap"] = cap if d["family"] == "holder" else min(cap, 0.5)
    return _wrap(key, IndexFunction.from_dict, d)


def _solver(cfg):
    d = _section(cfg, "solver", ("max_iters", "step_tol", "damping", "multistart", "seed"))
    return SolverOptions(
        max_iters=_num(d, "max_iters", "solver", 100, positive=True, integer=True),
        step_tol=_num(d, "step_tol", "solver", 1e-9, positive=True),
        damping=bool(d.get("damping", True)),
        multistart=_num(d, "multistart", "solver", 0, nonneg=True, integer=True),
        seed=_num(d, "seed", "solver", 0, nonneg=True, integer=True))


def _source(cfg, problem, seed):
    d = _section(cfg, "source", ("phi", "R", "g_norm", "g_seed", "profile"))
    phi = _phi(d, problem) if "phi" in d else IndexFunction.holder(0.5, problem.domain_cap())
    R = _num(d, "R", "source", 1.0, positive=True)
    return _wrap("source", SourceSpec, phi, R, _num(d, "g_seed", "source", seed, nonneg=True,
                 integer=True), _num(d, "g_norm", "source", R, nonneg=True), 1e-10, 50,
                 d.get("profile", "spectral"))


SHARED = ("kernel", "grid", "h1", "operator", "fbar", "seed")


# ---------------------------------------------------------------------------
# commands

def _pool_map(workers):
    @contextmanager
    def ctx():
        if workers <= 1:
            yield map
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                yield ex.map
    return ctx()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_solve(cfg, args, out: Path, base_dir: Path) -> int:
    _check_keys(cfg, SHARED + ("lambda", "data", "simulate", "source", "solver"))
    pb = Problem(cfg, base_dir)
    lam = _num(cfg, "lambda", "config", positive=True)
    seed = int(cfg.get("seed", 0)) if args.seed is None else args.seed
    opts = _solver(cfg)
    truth = None
    if "data" in cfg:
        dd = _section(cfg, "data", ("csv",), ("csv",))
        data = _wrap("data.csv", SampleSet.from_csv, base_dir / dd["csv"])
    elif "simulate" in cfg:
        sd = _section(cfg, "simulate", ("m", "noise_sigma", "noise_model"), ("m",))
        spec = _source(cfg, pb, seed)
        truth = build_source_truth(pb.op, pb.kernel, pb.fbar, spec).f_rho
        data = _wrap("simulate", simulate, pb.op, truth,
                     _num(sd, "m", "simulate", positive=True, integer=True),
                     _num(sd, "noise_sigma", "simulate", 0.0, nonneg=True), seed,
                     sd.get("noise_model", "gaussian"))
    else:
        raise ConfigError("config: one of 'data' or 'simulate' is required")
    fit = tikhonov_solve(pb.op, pb.kernel, data, pb.fbar, lam, opts)
    err_h1 = err_pred = None
    if truth is not None:
        err_h1 = (fit.solution - truth).norm()
        d = pb.op.apply(fit.solution.values, pb.grid.nodes) - pb.op.apply(truth.values, pb.grid.nodes)
        err_pred = float(np.sqrt(pb.grid.probability_weights @ d ** 2))
    _write_csv(out / "fit.csv", FIT_CSV_HEADER, [fit_csv_row(fit, data.m, err_h1, err_pred)])
    _write_csv(out / "solution.csv", ["x", "f"],
               [[repr(float(x)), repr(float(v))] for x, v in zip(pb.grid.nodes, fit.solution.values)])
    log.info("solve: iters=%d converged=%s (%s)", fit.gn_iters, fit.converged, fit.message)
    if not fit.converged:
        print(f"solver did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def rate_study_from_config(cfg, seed=None, base_dir=Path(".")):
    """Build ``(RateStudyConfig, Problem, tolerances)`` from a rate-study config."""
    _check_keys(cfg, SHARED + ("phi", "study", "solver", "tolerances"))
    pb = Problem(cfg, base_dir)
    phi = _phi(cfg, pb)
    sd = _section(cfg, "study", ("ms", "replicates", "noise_sigma", "R", "b", "lambda_rule",
                                 "lambda_grid", "g_norm", "g_seed", "source_profile",
                                 "noise_model", "eta"), ("ms", "replicates", "noise_sigma"))
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    kw = {}
    for key in ("R", "b", "g_norm", "eta"):
        if key in sd:
            kw[key] = _num(sd, key, "study", positive=key != "g_norm", nonneg=True)
    for key in ("lambda_rule", "source_profile", "noise_model", "lambda_grid"):
        if key in sd:
            kw[key] = sd[key]
    if not isinstance(sd["ms"], list) or not all(isinstance(m, int) for m in sd["ms"]):
        raise ConfigError("study.ms: expected a list of integers")
    rc = _wrap("study", RateStudyConfig, sd["ms"],
               _num(sd, "replicates", "study", integer=True, positive=True),
               _num(sd, "noise_sigma", "study", nonneg=True), phi, seed=seed,
               g_seed=_num(sd, "g_seed", "study", 0, nonneg=True, integer=True),
               solver=_solver(cfg), **kw)
    td = _section(cfg, "tolerances", ("h1", "pred"))
    tol = {"h1": _num(td, "h1", "tolerances", 0.15, positive=True),
           "pred": _num(td, "pred", "tolerances", 0.15, positive=True)}
    return rc, pb, tol


def cmd_rate_study(cfg, args, out: Path, base_dir: Path) -> int:
    rc, pb, tol = rate_study_from_config(cfg, args.seed, base_dir)
    with _pool_map(args.workers) as map_fn:
        res = run_rate_study(rc, pb.op, pb.kernel, pb.fbar, map_fn=map_fn)
    (out / "results.csv").write_text(res.to_csv())
    (out / "timings.csv").write_text(res.timings_csv())
    summary = res.summary()
    summary["pass_h1_slope"] = abs(res.fitted_slope_h1 - res.theoretical_h1) <= tol["h1"]
    summary["pass_pred_slope"] = abs(res.fitted_slope_pred - res.theoretical_pred) <= tol["pred"]
    summary["tolerances"] = tol
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"h1 slope {res.fitted_slope_h1:.4f} (theory {res.theoretical_h1:.4f}), "
          f"prediction slope {res.fitted_slope_pred:.4f} (theory {res.theoretical_pred:.4f})")
    return EXIT_OK


def cmd_effdim(cfg, args, out: Path, base_dir: Path) -> int:
    _check_keys(cfg, ("kernel", "grid", "lambdas", "decay", "seed"))
    k = _wrap("kernel", Kernel.from_dict, _section(cfg, "kernel", ("family", "params", "domain"),
                                                   ("family",)))
    grid = _wrap("grid", Grid.from_dict, _section(cfg, "grid", ("a", "b", "n", "rule", "normalize")))
    ld = _section(cfg, "lambdas", ("min", "max", "num"))
    lams = np.geomspace(_num(ld, "min", "lambdas", 1e-4, positive=True),
                        _num(ld, "max", "lambdas", 1.0, positive=True),
                        _num(ld, "num", "lambdas", 30, positive=True, integer=True))
    eigs = np.clip(np.linalg.eigvalsh(empirical_covariance(k, grid))[::-1], 0.0, None)
    decay = estimate_decay(gram(k, grid.nodes), grid.probability_weights)
    if "decay" in cfg:
        dd = _section(cfg, "decay", ("b", "beta"), ("b", "beta"))
        b, beta = _num(dd, "b", "decay", positive=True), _num(dd, "beta", "decay", positive=True)
    else:
        b, beta = decay.fitted_b, decay.fitted_beta
    C_fit = fit_effdim_constant(eigs, b, lams)
    rows = []
    for lam in lams:
        e = effective_dimension(eigs, lam, (b, beta))
        rows.append([repr(e.lam), repr(e.value), repr(e.trivial_bound), repr(e.decay_bound),
                     repr(float(C_fit * lam ** (-1 / b)))])
    _write_csv(out / "effdim.csv", ["lambda", "value", "trivial_bound", "decay_bound",
                                    "fitted_bound"], rows)
    meta = {"fitted_b": decay.fitted_b, "fitted_beta": decay.fitted_beta,
            "fit_residual": decay.fit_residual, "n_reliable": decay.n_reliable,
            "b": b, "beta": beta, "C_analytic": effdim_decay_constant(b, beta), "C_fitted": C_fit,
            "kappa": kappa(k, grid.nodes)}
    (out / "decay.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def lower_bound_from_config(cfg, seed=None, base_dir=Path(".")):
    _check_keys(cfg, SHARED + ("phi", "R", "epsilons", "decay_fit_n"))
    pb = Problem(cfg, base_dir)
    phi = _phi(cfg, pb)
    R = _num(cfg, "R", "config", positive=True)
    eps = cfg.get("epsilons")
    if not isinstance(eps, list) or not eps or not all(isinstance(e, (int, float)) and e > 0 for e in eps):
        raise ConfigError("epsilons: expected a non-empty list of positive numbers")
    nfit = _num(cfg, "decay_fit_n", "config", 80, positive=True, integer=True)
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    return pb, phi, R, [float(e) for e in eps], nfit, seed


def lower_decay_constants(op, k, fbar, nfit):
    """Fit ``b`` on the first ``nfit`` eigenvalues of ``T`` at ``fbar``; ``alpha`` is
    the largest constant with ``alpha n^-b <= t_n`` over the whole grid."""
    t = np.clip(np.linalg.eigvalsh(linearize(op, k, fbar).T)[::-1], 0.0, None)
    b = fit_power_law(t[:nfit])[0]
    n = np.arange(1, t.size + 1)
    return float(np.min(t * n ** b)), float(b)


def cmd_lower_bound(cfg, args, out: Path, base_dir: Path) -> int:
    pb, phi, R, eps, nfit, seed = lower_bound_from_config(cfg, args.seed, base_dir)
    alpha, b = lower_decay_constants(pb.op, pb.kernel, pb.fbar, nfit)
    status = EXIT_OK
    for e in eps:
        fam = build_hard_family(pb.op, pb.kernel, pb.fbar, phi, R, e, (alpha, b), seed=seed)
        tag = f"{e:g}"
        (out / f"family_{tag}.json").write_text(fam.manifest_json() + "\n")
        (out / f"pairs_{tag}.csv").write_text(fam.pairs_csv())
        failed = [k for k, v in fam.checks().items() if not v]
        print(f"epsilon={tag}: ell={fam.ell} N={fam.N} upsilon={fam.upsilon:.4f} "
              f"{'ok' if not failed else 'FAILED ' + ', '.join(failed)}")
        if failed:
            status = EXIT_PROPERTY
    return status


# ---------------------------------------------------------------------------
# property suites

def _suite_effdim(seed):
    k = Kernel.sobolev1d(1)
    grid = Grid.trapezoid(0, 1, 128)
    eigs = np.clip(np.linalg.eigvalsh(empirical_covariance(k, grid))[::-1], 0.0, None)
    lams = np.geomspace(1e-4, 1.0, 30)
    vals = [effective_dimension(eigs, lam) for lam in lams]
    kap2 = kappa(k, grid.nodes) ** 2
    yield "effdim.trivial_bound", all(v.value <= v.trivial_bound * (1 + 1e-12) for v in vals)
    yield "effdim.kappa_bound", all(v.value <= kap2 / v.lam * (1 + 1e-12) for v in vals)
    yield "effdim.monotone", all(a.value >= b.value for a, b in zip(vals, vals[1:]))
    t = np.arange(1, 2001, dtype=float) ** -2.0
    C = fit_effdim_constant(t, 2.0, lams)
    yield "effdim.decay_bound_fitted", all(
        effective_dimension(t, lam).value <= C * lam ** -0.5 * (1 + 1e-12) for lam in lams)
    Ca = effdim_decay_constant(2.0, 1.0)
    yield "effdim.decay_bound_analytic", all(
        effective_dimension(t, lam).value <= Ca * lam ** -0.5 for lam in lams)


def _suite_hs(seed):
    rng = np.random.default_rng(seed)
    ok_lip = ok_sq = True
    worst = 0.0
    for _ in range(100):
        A = rng.standard_normal((8, 8))
        Bm = rng.standard_normal((8, 8))
        F, Ft = A + A.T, Bm + Bm.T
        ok_lip &= hs_operator_lipschitz_check(1.0, F, Ft, np.abs)
        ok_lip &= hs_operator_lipschitz_check(1.0, F, Ft, lambda s: np.clip(s, -1.0, 1.0))
        B, Bt = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
        ok_sq &= hs_sqrt_perturbation_check(B, Bt)
        worst = max(worst, hs_sqrt_ratio(B, Bt))
    yield "hs.operator_lipschitz", bool(ok_lip)
    yield "hs.sqrt_perturbation", bool(ok_sq)
    yield f"hs.max_sqrt_ratio={worst:.6f}<=sqrt2", worst <= math.sqrt(2) + 1e-9


def _suite_concentration(seed, trials=10_000):
    for m in (50, 200):
        rep = pinelis_tail_check(trials, m, "gaussian", seed=seed)
        yield f"concentration.pinelis.m{m}", rep.ok
        for name, r in sampling_concentration_check(Kernel.sobolev1d(1), m, trials,
                                                    seed=seed).items():
            yield f"concentration.{name}.m{m}", r.ok


def _suite_lowerbound(seed):
    for ell in (24, 48):
        yield f"lowerbound.packing.ell{ell}", pack_signs(ell, seed).certify()
    k = Kernel.sobolev1d(1)
    grid = Grid.trapezoid(0, 1, 128)
    space = H1Space(grid, k)
    op = ForwardOp("quadratic_integral", grid, GaussianTheta(0.003, 1.0, True), k)
    fbar = space.vec(np.ones(grid.n))
    alpha, b = lower_decay_constants(op, k, fbar, 80)
    phi = IndexFunction.holder(0.5, 2.0)
    for eps in (0.1, 0.05):
        fam = build_hard_family(op, k, fbar, phi, 10.0, eps, (alpha, b), seed=seed)
        for name, ok in fam.checks().items():
            yield f"lowerbound.eps{eps:g}.{name}", ok


SUITES = {"effdim": _suite_effdim, "hs": _suite_hs, "concentration": _suite_concentration,
          "lowerbound": _suite_lowerbound}


def cmd_check(suite, seed) -> int:
    if suite not in SUITES and suite != "all":
        print(f"unknown suite {suite!r}; choose from {sorted(SUITES) + ['all']}", file=sys.stderr)
        return EXIT_CONFIG
    names = sorted(SUITES) if suite == "all" else [suite]
    failed = []
    for name in names:
        for label, ok in SUITES[name](seed):
            print(f"{'PASS' if ok else 'FAIL'} {label}")
            if not ok:
                failed.append(label)
    if failed:
        print(f"failing invariants: {', '.join(failed)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


# ---------------------------------------------------------------------------

COMMANDS = {"solve": cmd_solve, "rate-study": cmd_rate_study, "effdim": cmd_effdim,
            "lower-bound": cmd_lower_bound}


def build_parser():
    p = argparse.ArgumentParser(prog="rkhs-tikhonov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="JSON config file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
        sp.add_argument("--verbose", "-v", action="store_true")

    for name in COMMANDS:
        common(sub.add_parser(name))
    ck = sub.add_parser("check", help="run a property suite")
    ck.add_argument("suite", help="effdim, hs, concentration, lowerbound or all")
    common(ck, need_config=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "check":
        return cmd_check(args.suite, 0 if args.seed is None else args.seed)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out, Path(args.config).parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RateStudyError, SourceConstructionError, InsufficientDataError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
