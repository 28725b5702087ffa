import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkhs_tikhonov import (Grid, H1Space, Kernel, SampleSet, cross_gram, effective_dimension,
                           effdim_decay_constant, empirical_covariance, estimate_decay,
                           fit_effdim_constant, gram, interpolation_matrix, kernel_eval,
                           sampling_adjoint, sampling_apply)


def test_trapezoid_weights():
    g = Grid.trapezoid(0, 2, 5, normalize=False)
    assert g.weights.sum() == pytest.approx(2.0)
    assert g.weights[0] == pytest.approx(0.25)
    assert Grid.trapezoid(0, 2, 5).weights.sum() == pytest.approx(1.0)
    assert Grid.from_dict(g.to_dict()).weights.tolist() == g.weights.tolist()


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.0]), np.array([0.5, 0.5]), 0, 1)
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 1.0]), np.array([0.5, -0.5]), 0, 1)
    with pytest.raises(ValueError):
        Grid.from_dict({"n": 8, "spacing": 1})


def test_sampling_constant_function(grid128, sob):
    x = np.array([0.0, 0.13, 0.5, 0.999])
    v = sampling_apply(sob, grid128, np.full(grid128.n, 2.0), x)
    # exact at nodes, interpolation error between them
    assert v[0] == 2.0
    assert np.max(np.abs(v - 2.0)) < 1e-4
    assert interpolation_matrix(sob, grid128, x).shape == (4, 128)


def test_sampling_node_exact(grid128, sob):
    f = np.sin(grid128.nodes)
    assert sampling_apply(sob, grid128, f, grid128.nodes[17:18])[0] == f[17]


def test_sampling_kernel_section(grid128, sob):
    x0 = grid128.nodes[40]
    f = cross_gram(sob, grid128.nodes, [x0])[:, 0]
    x = np.random.default_rng(0).uniform(0, 1, 30)
    exact = np.array([kernel_eval(sob, xi, x0) for xi in x])
    assert np.max(np.abs(sampling_apply(sob, grid128, f, x) - exact)) < 1e-6


def test_adjoint_single_point_and_zero(grid64, sob):
    x1 = 0.3
    sec = sampling_adjoint(sob, grid64, [x1], [1.0])
    assert np.allclose(sec, [kernel_eval(sob, s, x1) for s in grid64.nodes])
    assert np.all(sampling_adjoint(sob, grid64, [0.1, 0.2], [0.0, 0.0]) == 0)
    with pytest.raises(ValueError):
        sampling_adjoint(sob, grid64, [0.1, 0.2], [1.0])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 31))
def test_sampling_duality(m, seed):
    k = Kernel.sobolev1d(1)
    grid = Grid.trapezoid(0, 1, 64)
    space = H1Space(grid, k)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(64)
    x = rng.uniform(0, 1, m)
    c = rng.standard_normal(m)
    lhs = np.mean(sampling_apply(k, grid, f, x) * c)
    rhs = space.inner(f, sampling_adjoint(k, grid, x, c))
    assert lhs == pytest.approx(rhs, abs=1e-8 * max(1, abs(lhs)))


def test_h1_norm_modes(grid64, sob):
    l2 = H1Space(grid64)
    one = l2.vec(np.ones(64))
    assert one.norm() == pytest.approx(1.0)
    rk = H1Space(grid64, sob)
    # node values of a kernel section have RKHS norm sqrt(K(x, x))
    f = rk.vec(gram(sob, grid64.nodes)[:, 10])
    assert f.norm() == pytest.approx(np.sqrt(0.5), rel=1e-8)
    u = rk.whiten(f.values)
    assert np.allclose(rk.unwhiten(u), f.values)
    assert np.linalg.norm(u) == pytest.approx(f.norm())


def test_h1vec_space_mismatch(grid64, sob):
    a = H1Space(grid64, sob).zeros()
    b = H1Space(grid64, sob).zeros()
    with pytest.raises(ValueError):
        a + b


def test_sample_set_csv_roundtrip(tmp_path):
    s = SampleSet(np.array([0.1, 0.2]), np.array([1.0, -1.0 / 3]), 5, {"sigma": 0.1})
    p = s.to_csv(tmp_path / "d.csv")
    t = SampleSet.from_csv(p)
    assert t.x.tolist() == s.x.tolist() and t.y.tolist() == s.y.tolist()
    assert t.seed == 5 and t.noise_meta == {"sigma": 0.1}


def test_empirical_covariance_single_node():
    g = Grid(np.array([0.5]), np.array([1.0]), 0, 1)
    k = Kernel.gaussian()
    assert empirical_covariance(k, g)[0, 0] == kernel_eval(k, 0.5, 0.5)


def test_empirical_covariance_trace(grid128, sob):
    C = empirical_covariance(sob, grid128)
    w = grid128.probability_weights
    assert np.trace(C) == pytest.approx(np.sum(w * 0.5), rel=1e-14)


def test_empirical_covariance_decay(grid128, sob):
    t = np.linalg.eigvalsh(empirical_covariance(sob, grid128))[::-1]
    dec = estimate_decay(gram(sob, grid128.nodes), grid128.probability_weights)
    assert np.allclose(t, dec.eigenvalues, atol=1e-14)
    assert dec.fitted_b == pytest.approx(2.0, abs=0.3)


def test_effective_dimension_examples():
    assert effective_dimension([1, 1, 1, 1], 1.0).value == pytest.approx(2.0)
    assert effective_dimension([1.0, 0.25], 0.25).value == pytest.approx(1.3)
    with pytest.raises(ValueError):
        effective_dimension([1.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(1e-6, 1e3))
def test_effective_dimension_below_trivial_bound(eigs, lam):
    e = effective_dimension(eigs, lam)
    assert e.value <= e.trivial_bound * (1 + 1e-12) + 1e-300


def test_effdim_decay_constant_dominates():
    t = np.arange(1, 5001, dtype=float) ** -2.0
    C = effdim_decay_constant(2.0, 1.0)
    assert C == pytest.approx(np.pi / 2)
    for lam in np.geomspace(1e-5, 1, 20):
        e = effective_dimension(t, lam, (2.0, 1.0))
        assert e.value <= e.decay_bound
    assert fit_effdim_constant(t, 2.0, np.geomspace(1e-4, 1, 10)) <= C
