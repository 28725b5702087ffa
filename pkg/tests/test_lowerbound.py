import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkhs_tikhonov import (ForwardOp, GaussianTheta, H1Space, IndexFunction, build_hard_family,
                           build_hard_instance, discrete_kl, ell_epsilon, h2_norm,
                           hs_operator_lipschitz_check, hs_sqrt_perturbation_check,
                           hs_sqrt_ratio, kappa, kl_atoms, pack_signs, sample_hard_instance)


def test_zero_image_rejected(quad64, space64, sob):
    with pytest.raises(ValueError, match="vanishes"):
        build_hard_instance(quad64, sob, space64.zeros())


def test_hard_instance_mean_and_bound(quad64, space64, sob):
    f = space64.function(lambda x: 1 + 0.5 * x)
    inst = build_hard_instance(quad64, sob, f)
    u = quad64.apply(f.values, space64.grid.nodes)
    # |A(f)(x)| <= kappa ||A(f)|| = J/4
    assert np.all(np.abs(u) <= inst.J / 4 * (1 + 1e-12))
    assert np.allclose(inst.p_plus + inst.p_minus, 1.0)
    node, n = 20, 100_000
    y = sample_hard_instance(inst, node, n, seed=1)
    assert abs(y.mean() - u[node]) <= 4 * inst.J / math.sqrt(n)
    with pytest.raises(ValueError):
        build_hard_instance(quad64, sob, f, J=inst.J / 2)


def test_kl_atoms_examples():
    assert kl_atoms([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_atoms([0.6, 0.4], [0.5, 0.5]) == pytest.approx(
        0.6 * math.log(1.2) + 0.4 * math.log(0.8), abs=1e-15)
    assert kl_atoms([0.6, 0.4], [0.6, 0.4]) == pytest.approx(0.0)
    assert kl_atoms([0.5, 0.5], [1.0, 0.0]) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_kl_nonnegative(p, q):
    assert kl_atoms([p, 1 - p], [q, 1 - q]) >= -1e-15


def test_discrete_kl_bound(quad64, space64, sob):
    f1 = space64.function(lambda x: 1 + 0.5 * x)
    f2 = space64.function(lambda x: 1 + 0.45 * x)
    J = max(build_hard_instance(quad64, sob, f).J for f in (f1, f2))
    p, q = (build_hard_instance(quad64, sob, f, J=J) for f in (f1, f2))
    grid = space64.grid
    kl = discrete_kl(p, q, grid)
    d = p.mean - q.mean
    assert 0 <= kl <= 16 / (15 * J ** 2) * np.sum(grid.probability_weights * d * d)
    assert discrete_kl(p, p, grid) == 0.0


def test_h2_norm_of_kernel_section(grid64, sob):
    from rkhs_tikhonov import gram
    v = gram(sob, grid64.nodes)[:, 5]
    assert h2_norm(sob, grid64, v) == pytest.approx(math.sqrt(0.5), rel=1e-8)
    assert kappa(sob, grid64.nodes) == pytest.approx(math.sqrt(0.5))


@pytest.mark.parametrize("ell,n_min", [(24, 3), (48, 8)])
def test_packing(ell, n_min):
    pk = pack_signs(ell, seed=0)
    assert pk.N >= n_min and pk.certify()
    D = pk.distance_matrix()
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)
    assert np.all(D[~np.eye(pk.N, dtype=bool)] >= ell)


def test_packing_rejects_small_ell():
    with pytest.raises(ValueError):
        pack_signs(16)


def test_ell_epsilon_formula():
    phi = IndexFunction.holder(0.5)
    # phi^-1(0.1) = 0.01, (1/0.01)^(1/2) = 10
    assert ell_epsilon(0.1, 1.0, phi, 1.0, 2.0) == 5


def test_linear_family_separation(grid128, sob):
    space = H1Space(grid128, sob)
    op = ForwardOp("linear_integral", grid128, GaussianTheta(0.003, 1.0, True))
    fbar = space.zeros()
    from rkhs_tikhonov import fit_power_law, linearize
    t = np.clip(np.linalg.eigvalsh(linearize(op, sob, fbar).T)[::-1], 0, None)
    b = fit_power_law(t[:80])[0]
    alpha = float(np.min(t * np.arange(1, 129) ** b))
    fam = build_hard_family(op, sob, fbar, IndexFunction.holder(0.5, 2.0), 10.0, 0.1, (alpha, b))
    assert fam.upsilon == pytest.approx(1.0)
    off = ~np.eye(fam.N, dtype=bool)
    assert np.all(fam.pairwise_h1_gaps[off] >= 0.1 * (1 - 1e-12))
    assert all(fam.checks().values())


def test_hs_lipschitz_identity_equality():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 6, 6))
    F, Ft = A + A.T, B + B.T
    assert hs_operator_lipschitz_check(1.0, F, F, np.abs)
    assert hs_operator_lipschitz_check(1.0, F, Ft)
    from rkhs_tikhonov.lowerbound import _spectral
    lhs = np.linalg.norm(_spectral(F, lambda s: s) - _spectral(Ft, lambda s: s))
    assert lhs == pytest.approx(np.linalg.norm(F - Ft), abs=1e-12)
    with pytest.raises(ValueError):
        hs_operator_lipschitz_check(1.0, A, Ft)


def test_hs_lipschitz_random_pairs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        A, B = rng.standard_normal((2, 8, 8))
        F, Ft = A + A.T, B + B.T
        assert hs_operator_lipschitz_check(1.0, F, Ft, np.abs)
        assert hs_operator_lipschitz_check(1.0, F, Ft, lambda s: np.clip(s, -1, 1))
        assert hs_operator_lipschitz_check(0.5, F, Ft, lambda s: 0.5 * np.tanh(s))


def test_hs_sqrt_cases():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((6, 4))
    assert hs_sqrt_ratio(B, B) == 0.0 and hs_sqrt_perturbation_check(B, B)
    assert hs_sqrt_ratio(B, -B) == pytest.approx(0.0, abs=1e-7)
    worst = 0.0
    for _ in range(100):
        B, Bt = rng.standard_normal((2, 6, 4))
        assert hs_sqrt_perturbation_check(B, Bt)
        worst = max(worst, hs_sqrt_ratio(B, Bt))
    assert worst <= math.sqrt(2) + 1e-9
