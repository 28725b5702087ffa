"""Hard-instance families for the minimax lower bound.

For a candidate solution ``f`` the hard measure puts, at every ``x``, two
atoms ``y = +J`` and ``y = -J`` with probabilities ``(J + u(x)) / (2J)`` and
``(J - u(x)) / (2J)``, where ``u = A(f)`` and ``J >= 4 kappa ||A(f)||_H2``.
Its regression function is therefore ``A(f)``. Families of such measures
indexed by well-separated sign vectors give the two premises of Fano's
argument: pairwise separation in H1 and small pairwise Kullback-Leibler
divergence.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .experiments import SourceSpec, build_source_truth, matrix_function
from .hilbert import Grid, H1Vec
from .kernels import Kernel, gram, kappa
from .operators import ForwardOp, derivative_norm_h2, gamma_hs_bound, linearize
from .tikhonov import IndexFunction

__all__ = [
    "HardInstance",
    "SignPacking",
    "HardFamily",
    "PackingError",
    "h2_norm",
    "build_hard_instance",
    "sample_hard_instance",
    "pack_signs",
    "ell_epsilon",
    "build_hard_family",
    "discrete_kl",
    "kl_atoms",
    "hs_operator_lipschitz_check",
    "hs_sqrt_perturbation_check",
    "hs_sqrt_ratio",
]


class PackingError(RuntimeError):
    """Random search did not find enough separated sign vectors."""


def h2_norm(k: Kernel, grid: Grid, values) -> float:
    """RKHS norm of the kernel interpolant of node values."""
    G = gram(k, grid.nodes)
    v = np.asarray(values, dtype=float)
    return float(math.sqrt(max(v @ linalg.solve(G, v, assume_a="pos"), 0.0)))


@dataclass(frozen=True, eq=False)
class HardInstance:
    f: H1Vec
    J: float
    d: int
    mean: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    M_cert: float
    Sigma_cert: float

    @property
    def atoms(self):
        return np.array([self.d * self.J, -self.d * self.J])


def build_hard_instance(op: ForwardOp, k: Kernel, f: H1Vec, d: int = 1,
                        J: Optional[float] = None) -> HardInstance:
    """Two-atom measure whose conditional mean is ``A(f)`` on the grid nodes.

    ``J`` defaults to ``4 kappa ||A(f)||_H2``; a larger shared value may be
    passed when building families.
    """
    if d != 1:
        raise ValueError("only scalar outputs (d = 1) are supported")
    grid = op.grid
    u = op.apply(f.values, grid.nodes)
    J0 = 4.0 * kappa(k, grid.nodes) * h2_norm(k, grid, u)
    if J is None:
        J = J0
    if not J > 0:
        raise ValueError("A(f) vanishes: the hard measure needs J > 0")
    if J < J0 * (1 - 1e-12):
        raise ValueError(f"J = {J} is below 4 kappa ||A(f)|| = {J0}")
    a = J - u
    b = J + u
    if np.any(a < 0) or np.any(b < 0):
        bad = grid.nodes[np.flatnonzero((a < 0) | (b < 0))[0]]
        raise ValueError(f"negative atom weight at x = {bad!r}")
    return HardInstance(f, float(J), d, u, b / (2 * J), a / (2 * J),
                        M_cert=d * J + J / 4, Sigma_cert=2 * d * J)


def sample_hard_instance(inst: HardInstance, node: int, size: int, seed=0) -> np.ndarray:
    """Draw ``size`` responses at grid node ``node``."""
    rng = np.random.default_rng(seed)
    plus = rng.random(size) < inst.p_plus[node]
    return np.where(plus, inst.d * inst.J, -inst.d * inst.J)


def kl_atoms(p, q) -> float:
    """KL divergence of two discrete distributions on the same atoms."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((q == 0) & (p > 0)):
        return math.inf
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def discrete_kl(p: HardInstance, q: HardInstance, grid: Grid) -> float:
    """``sum_x nu(x) KL(p(.|x), q(.|x))`` with ``nu`` the grid's probability weights."""
    if p.d != q.d or not math.isclose(p.J, q.J, rel_tol=1e-12):
        raise ValueError("instances must share d and J")
    w = grid.probability_weights
    P = np.column_stack([p.p_plus, p.p_minus])
    Q = np.column_stack([q.p_plus, q.p_minus])
    if np.any((Q == 0) & (P > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P / Q), 0.0)
    return float(max(w @ terms.sum(axis=1), 0.0))


# ---------------------------------------------------------------------------
# packings

@dataclass(frozen=True)
class SignPacking:
    ell: int
    vectors: np.ndarray
    draws: int

    @property
    def N(self):
        return self.vectors.shape[0]

    def distance_matrix(self):
        V = self.vectors
        return np.sum((V[:, None, :] - V[None, :, :]) ** 2, axis=-1)

    def certify(self):
        """Exhaustive check of separation and cardinality."""
        D = self.distance_matrix()
        off = D[~np.eye(self.N, dtype=bool)]
        return bool((off >= self.ell).all() and self.N >= math.ceil(math.exp(self.ell / 24)))


def pack_signs(ell: int, seed=0, max_draws=10 ** 6) -> SignPacking:
    """Random Gilbert-Varshamov packing of ``{-1, +1}^ell``.

    Draws sign vectors and keeps those at squared distance ``>= ell`` from
    all kept ones until ``ceil(exp(ell/24))`` are found.
    """
    if ell <= 16:
        raise ValueError("ell must exceed 16")
    target = math.ceil(math.exp(ell / 24))
    rng = np.random.default_rng(seed)
    kept = []
    draws = 0
    while len(kept) < target:
        if draws >= max_draws:
            raise PackingError(f"found {len(kept)} of {target} vectors in {max_draws} draws")
        batch = rng.choice([-1, 1], size=(min(4096, max_draws - draws), ell))
        for v in batch:
            draws += 1
            if all(np.sum((v - w) ** 2) >= ell for w in kept):
                kept.append(v)
                if len(kept) >= target:
                    break
    pk = SignPacking(ell, np.array(kept, dtype=int), draws)
    if not pk.certify():
        raise PackingError("packing failed certification")
    return pk


# ---------------------------------------------------------------------------
# families

def ell_epsilon(epsilon: float, R: float, phi: IndexFunction, alpha: float, b: float) -> int:
    """``floor(0.5 * (alpha / phi^-1(epsilon / R))^(1/b))``."""
    return int(math.floor(0.5 * (alpha / phi.inverse(epsilon / R)) ** (1.0 / b)))


@dataclass(frozen=True, eq=False)
class HardFamily:
    epsilon: float
    ell: int
    packing: SignPacking
    instances: tuple
    g_norms: np.ndarray
    pairwise_h1_gaps: np.ndarray
    kl_matrix: np.ndarray
    kl_bound_matrix: np.ndarray
    pred_sq_matrix: np.ndarray
    upsilon: float
    upsilon_matrix: np.ndarray
    deltas: np.ndarray
    zeta: float
    J: float
    C_tilde: float
    chain_bound: float
    alpha: float
    beta: float
    b: float
    gamma: float
    R: float

    @property
    def N(self):
        return len(self.instances)

    def checks(self):
        """Boolean results of the family invariants."""
        off = ~np.eye(self.N, dtype=bool)
        tol = 1e-12
        return {
            "g_norm_le_R": bool(np.all(self.g_norms <= self.R * (1 + tol))),
            "separation": bool(np.all(self.pairwise_h1_gaps[off]
                                      >= self.epsilon * self.upsilon_matrix[off] * (1 - tol))),
            "upsilon_positive": self.upsilon > 0,
            "packing": self.packing.certify(),
            "kl_le_pred_bound": bool(np.all(self.kl_matrix <= self.kl_bound_matrix * (1 + tol) + 1e-300)),
            "pred_bound_le_chain": bool(np.all(self.kl_bound_matrix[off] <= self.chain_bound * (1 + tol))),
        }

    def manifest(self):
        return {"epsilon": self.epsilon, "ell": self.ell, "N": self.N,
                "upsilon": self.upsilon, "zeta": self.zeta, "J": self.J,
                "C_tilde": self.C_tilde, "chain_bound": self.chain_bound,
                "alpha": self.alpha, "beta": self.beta, "b": self.b, "gamma": self.gamma,
                "R": self.R, "checks": self.checks()}

    def manifest_json(self):
        return json.dumps(self.manifest(), indent=2, sort_keys=True)

    def pairs_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "h1_gap", "upsilon_ij", "kl", "kl_bound", "pred_sq"])
        for i in range(self.N):
            for j in range(self.N):
                if i != j:
                    w.writerow([i, j, repr(float(self.pairwise_h1_gaps[i, j])),
                                repr(float(self.upsilon_matrix[i, j])),
                                repr(float(self.kl_matrix[i, j])),
                                repr(float(self.kl_bound_matrix[i, j])),
                                repr(float(self.pred_sq_matrix[i, j]))])
        return buf.getvalue()


def build_hard_family(op: ForwardOp, k: Kernel, fbar: H1Vec, phi: IndexFunction, R: float,
                      epsilon: float, b_lower, seed=0, beta=None,
                      map_fn: Callable = map) -> HardFamily:
    """Source-condition family ``f_i = fbar + phi(T_i) g_i`` from a sign packing.

    ``g_i = sum_{n=l+1}^{2l} eps pi_i^(n-l) e_n / (sqrt(l) phi(t_n))`` in the
    eigenbasis ``(t_n, e_n)`` of ``T`` at ``fbar``; ``b_lower = (alpha, b)``
    must satisfy ``alpha n^-b <= t_n`` for ``n <= 2l`` (checked). ``beta``
    (upper constant for the same ``b``) defaults to the smallest value with
    ``t_n <= beta n^-b`` on ``l < n <= 2l``.

    The distortion of each ``f_i`` relative to the linear picture is
    measured by ``delta_i = ||(phi(T_i) - phi(T)) g_i|| / eps``; then
    ``upsilon_ij = 1 - delta_i - delta_j`` and ``zeta = max delta_i / ||f_i - fbar||``.
    """
    if phi.family != "holder":
        raise ValueError("hard families use Hoelder index functions")
    alpha, b = (float(v) for v in b_lower)
    if not b > 1 or not alpha > 0:
        raise ValueError("b_lower needs alpha > 0 and b > 1")
    space = fbar.space
    grid = op.grid
    ell = ell_epsilon(epsilon, R, phi, alpha, b)
    if ell <= 16:
        raise ValueError(f"epsilon = {epsilon} gives ell = {ell}; need ell > 16 (decrease epsilon)")
    Tbar = linearize(op, k, fbar).T
    t, E = np.linalg.eigh(Tbar)
    t, E = t[::-1], E[:, ::-1]
    n_idx = np.arange(ell + 1, 2 * ell + 1)
    if 2 * ell > space.n:
        raise ValueError(f"ell = {ell} needs 2*ell eigenvalues but the grid has {space.n}")
    tn = t[n_idx - 1]
    nn = np.arange(1, 2 * ell + 1)
    if np.any(alpha * nn ** (-b) > t[:2 * ell] * (1 + 1e-12)):
        raise ValueError("lower decay bound alpha n^-b <= t_n fails on the first 2*ell eigenvalues")
    if beta is None:
        beta = float(np.max(tn * n_idx ** b))
    pk = pack_signs(ell, seed)
    phi_t = phi(tn)
    coeff = epsilon / (math.sqrt(ell) * phi_t)
    g_white = [E[:, n_idx - 1] @ (coeff * pi) for pi in pk.vectors]
    g_norms = np.array([np.linalg.norm(gw) for gw in g_white])
    if np.any(g_norms > R * (1 + 1e-12)):
        raise ValueError(f"||g_i|| up to {g_norms.max():.4g} exceeds R = {R}; "
                         f"largest feasible epsilon is {epsilon * R / g_norms.max():.4g}")
    phiTbar = matrix_function(Tbar, phi)

    def build(gw):
        nrm = float(np.linalg.norm(gw))
        spec = SourceSpec(phi, R, 0, nrm, max_halvings=0)
        return build_source_truth(op, k, fbar, spec, direction=gw / nrm).f_rho

    fs = list(map_fn(build, g_white))
    deltas = np.empty(len(fs))
    dist = np.empty(len(fs))
    for i, (f, gw) in enumerate(zip(fs, g_white)):
        Ti = linearize(op, k, f).T
        deltas[i] = np.linalg.norm((matrix_function(Ti, phi) - phiTbar) @ gw) / \
            np.linalg.norm(phiTbar @ gw)
        dist[i] = (f - fbar).norm()
    if op.is_linear:
        deltas[:] = 0.0
    zeta = float(np.max(deltas / dist)) if np.any(deltas > 0) else 0.0
    ups = 1.0 - deltas[:, None] - deltas[None, :]
    N = len(fs)
    off = ~np.eye(N, dtype=bool)
    gaps = np.array([[(fs[i] - fs[j]).norm() for j in range(N)] for i in range(N)])

    kap = kappa(k, grid.nodes)
    J = max(4 * kap * h2_norm(k, grid, op.apply(f.values, grid.nodes)) for f in fs)
    insts = [build_hard_instance(op, k, f, 1, J) for f in fs]
    w = grid.probability_weights
    kl = np.array([[discrete_kl(insts[i], insts[j], grid) for j in range(N)] for i in range(N)])
    pred_sq = np.array([[float(w @ (insts[i].mean - insts[j].mean) ** 2) for j in range(N)]
                        for i in range(N)])
    kl_bound = 16.0 / (15.0 * J ** 2) * pred_sq

    # constants of the second inequality of the chain
    gamma = gamma_hs_bound(op, space)
    KL_ = kap * derivative_norm_h2(op, k, fbar)
    Bnorm = float(np.linalg.norm(linearize(op, k, fbar).B, 2))
    KL_ = max(KL_, Bnorm)
    dmax = float(np.max(deltas))
    c = KL_ * zeta * (2 + 2 * dmax)
    c1 = math.sqrt(4 * beta / (b - 1) * (1 - 2.0 ** (1 - b)))
    c2 = 4 * c ** 2 + 4 * c1 ** 2 + gamma ** 2 * 2 * (1 + dmax) ** 4
    C_tilde = 16 * c2 / (15 * J ** 2)
    chain = C_tilde * (epsilon ** 2 / ell ** b + epsilon ** 4)
    return HardFamily(epsilon, ell, pk, tuple(insts), g_norms, gaps, kl, kl_bound, pred_sq,
                      float(np.min(ups[off])), ups, deltas, zeta, J, C_tilde, chain,
                      alpha, float(beta), b, gamma, float(R))


# ---------------------------------------------------------------------------
# Hilbert-Schmidt perturbation lemmas

def _spectral(F, fn):
    s, U = np.linalg.eigh(0.5 * (F + F.T))
    return (U * fn(s)) @ U.T


def hs_operator_lipschitz_check(theta_lipschitz: float, F, Ftilde, theta: Callable = None,
                                atol=1e-12) -> bool:
    """``||theta(F) - theta(Ft)||_HS <= L_theta ||F - Ft||_HS`` for symmetric ``F, Ft``.

    ``theta`` is applied to the eigenvalues; it defaults to the identity.
    """
    F = np.asarray(F, dtype=float)
    Ft = np.asarray(Ftilde, dtype=float)
    if not (np.allclose(F, F.T) and np.allclose(Ft, Ft.T)):
        raise ValueError("F and Ftilde must be symmetric")
    theta = (lambda s: s) if theta is None else theta
    lhs = np.linalg.norm(_spectral(F, theta) - _spectral(Ft, theta))
    rhs = theta_lipschitz * np.linalg.norm(F - Ft)
    return bool(lhs <= rhs * (1 + 1e-12) + atol)


def hs_sqrt_ratio(B, Btilde) -> float:
    """``||T^1/2 - Tt^1/2||_HS / ||B - Bt||_HS`` with ``T = B^T B`` (0 when ``B == Bt``)."""
    B = np.asarray(B, dtype=float)
    Bt = np.asarray(Btilde, dtype=float)
    if B.shape != Bt.shape:
        raise ValueError("B and Btilde must have equal shape")
    sq = lambda s: np.sqrt(np.clip(s, 0.0, None))  # noqa: E731
    lhs = np.linalg.norm(_spectral(B.T @ B, sq) - _spectral(Bt.T @ Bt, sq))
    den = np.linalg.norm(B - Bt)
    if den == 0:
        return 0.0
    return float(lhs / den)


def hs_sqrt_perturbation_check(B, Btilde, atol=1e-12) -> bool:
    """``||T^1/2 - Tt^1/2||_HS <= sqrt(2) ||B - Bt||_HS``."""
    B = np.asarray(B, dtype=float)
    Bt = np.asarray(Btilde, dtype=float)
    sq = lambda s: np.sqrt(np.clip(s, 0.0, None))  # noqa: E731
    lhs = np.linalg.norm(_spectral(B.T @ B, sq) - _spectral(Bt.T @ Bt, sq))
    return bool(lhs <= math.sqrt(2) * np.linalg.norm(B - Bt) * (1 + 1e-12) + atol)
