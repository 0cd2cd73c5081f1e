import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gram_of
from oracles import krylov_oracle, random_psd, weighted_objective
from kernelcg import (
    CGConfig,
    Dataset,
    LinearKernel,
    SpectralMercerKernel,
    assemble_gram,
    cg_run,
    expand,
    poly_apply,
    predict,
    residual_vector,
)
from kernelcg.cg import STOP_BREAKDOWN, STOP_DISCREPANCY, STOP_MAX_ITERS
from kernelcg.exceptions import ContractViolation, NumericalError


def test_scalar_system():
    fit = cg_run(gram_of([[2.0]], [3.0]))
    np.testing.assert_allclose(fit.alpha(1), [1.5])
    assert fit.residual_norms[1] == pytest.approx(0.0, abs=1e-15)
    assert fit.q_at_zero[1] == pytest.approx(0.5)
    assert fit.stop_reason == STOP_BREAKDOWN


@pytest.mark.parametrize("l", [0, 1, 2])
def test_multiple_of_identity_converges_in_one_step(rng, l):
    c = 0.4
    y = rng.normal(size=6)
    fit = cg_run(gram_of(c * np.eye(6), y), CGConfig(l=l))
    assert fit.stop_index == 1
    assert fit.m_final_reached
    np.testing.assert_allclose(fit.alpha(1), y / c, rtol=1e-13)
    assert fit.q_at_zero[1] == pytest.approx(1 / c)
    np.testing.assert_allclose(residual_vector(gram_of(c * np.eye(6), y), fit, 1), 0, atol=1e-13)


def test_zero_response():
    fit = cg_run(gram_of(np.eye(3), np.zeros(3)))
    assert fit.stop_index == 0
    assert fit.stop_reason == STOP_BREAKDOWN
    np.testing.assert_array_equal(fit.alpha(0), 0)


@pytest.mark.parametrize("l", [0, 1, 2])
def test_five_by_five_against_krylov_oracle(rng, l):
    K = random_psd(rng, 5, cond=100)
    y = rng.normal(size=5)
    G = gram_of(K, y)
    fit = cg_run(G, CGConfig(l=l, max_iters=4))
    for m in range(1, 5):
        _, obj = krylov_oracle(K, y, m, l)
        got = weighted_objective(K, y, fit.alpha(m), l)
        assert abs(got - obj) <= 1e-8 * obj
        assert fit.residual_norms[m] ** 2 == pytest.approx(got, rel=1e-8)


def test_residual_vector_is_residual_polynomial(rng):
    K = random_psd(rng, 12, cond=50)
    y = rng.normal(size=12)
    G = gram_of(K, y)
    fit = cg_run(G, CGConfig(max_iters=6))
    np.testing.assert_array_equal(residual_vector(G, fit, 0), y)
    for m in range(fit.stop_index + 1):
        p = fit.residual_poly(m)
        # Horner evaluation of p_m(K) y with dense matrix products
        direct = np.zeros(12)
        for c in p[::-1]:
            direct = K @ direct + c * y
        np.testing.assert_allclose(residual_vector(G, fit, m), direct, rtol=0, atol=1e-8 * np.linalg.norm(y))
        assert p[0] == 1.0


def test_polynomial_reconstruction(rng):
    K = random_psd(rng, 20, cond=1e3)
    y = rng.normal(size=20)
    G = gram_of(K, y)
    fit = cg_run(G, CGConfig(max_iters=8))
    for m in range(1, fit.stop_index + 1):
        alpha_poly = poly_apply(G, fit.poly_coeffs[m], y)
        err = np.linalg.norm(alpha_poly - fit.alpha(m)) / np.linalg.norm(fit.alpha(m))
        assert err <= 1e-8
        assert fit.q_at_zero[m] == pytest.approx(fit.poly_coeffs[m][0], rel=1e-12)


def test_residuals_k_squared_orthogonal(rng):
    K = random_psd(rng, 30, cond=1e3)
    y = rng.normal(size=30)
    G = gram_of(K, y)
    fit = cg_run(G, CGConfig(l=1, max_iters=10))
    R = np.array([residual_vector(G, fit, m) for m in range(fit.stop_index + 1)])
    K2 = K @ K
    gram = R @ K2 @ R.T
    d = np.sqrt(np.diag(gram))
    normalized = gram / np.outer(d, d)
    off = normalized - np.diag(np.diag(normalized))
    assert np.abs(off).max() <= 1e-8


def test_max_iters_and_range_checks(rng):
    K = random_psd(rng, 10, cond=10)
    fit = cg_run(gram_of(K, rng.normal(size=10)), CGConfig(max_iters=3))
    assert fit.stop_index == 3
    assert fit.stop_reason == STOP_MAX_ITERS
    assert len(fit.alphas) == len(fit.residual_norms) == len(fit.q_at_zero)
    with pytest.raises(ContractViolation):
        fit.alpha(4)
    with pytest.raises(ContractViolation):
        CGConfig(l=5)
    with pytest.raises(ContractViolation):
        CGConfig(max_iters=0)


def test_monitor_stops_run(rng):
    K = random_psd(rng, 10, cond=10)
    fit = cg_run(gram_of(K, rng.normal(size=10)), monitor=lambda m, alpha, r: m >= 2)
    assert fit.stop_index == 2
    assert fit.stop_reason == STOP_DISCREPANCY


def test_non_finite_system_reports_iteration():
    K = np.eye(3)
    K[0, 0] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(NumericalError, match="iteration"):
        cg_run(gram_of(K, np.ones(3), kappa=1.0))


def test_factored_and_dense_agree(rng):
    kernel = SpectralMercerKernel(1.0 / np.arange(1, 9) ** 2)
    X = rng.uniform(size=50)
    data = Dataset(X=X, Y=rng.normal(size=50))
    Gf = assemble_gram(kernel, data)
    Gd = gram_of(Gf.K, data.Y, kappa=kernel.kappa)
    ff = cg_run(Gf, CGConfig(max_iters=5))
    fd = cg_run(Gd, CGConfig(max_iters=5))
    for m in range(6):
        np.testing.assert_allclose(Gf.K @ ff.alpha(m), Gd.K @ fd.alpha(m), atol=1e-9)


def test_predict_examples():
    fit = cg_run(gram_of([[1.0]], [1.0]))
    np.testing.assert_array_equal(predict(fit, 0, LinearKernel(radius=5.0), [3.0], [4.0, 1.0]), 0)
    assert expand(np.array([2.0]), LinearKernel(radius=5.0), [3.0], [4.0])[0] == pytest.approx(24.0)
    with pytest.raises(ContractViolation):
        predict(fit, 5, LinearKernel(radius=5.0), [3.0], [4.0])


def test_predictions_at_training_points_are_fitted_values(rng):
    kernel = SpectralMercerKernel(1.0 / np.arange(1, 30))
    X = rng.uniform(size=25)
    G = assemble_gram(kernel, Dataset(X=X, Y=rng.normal(size=25)))
    fit = cg_run(G, CGConfig(max_iters=4))
    np.testing.assert_allclose(predict(fit, 4, kernel, X, X), G.matvec(fit.alpha(4)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(3, 30),
    log_cond=st.floats(0.5, 4.0),
    l=st.sampled_from([0, 1, 2]),
    seed=st.integers(0, 2**32 - 1),
)
def test_residual_norms_and_q_at_zero_monotone(n, log_cond, l, seed):
    rng = np.random.default_rng(seed)
    K = random_psd(rng, n, cond=10**log_cond)
    fit = cg_run(gram_of(K, rng.normal(size=n)), CGConfig(l=l, max_iters=min(n, 8)))
    res = fit.residual_norms
    assert np.all(np.diff(res) <= 1e-10 * res[0])
    q = fit.q_at_zero
    assert np.all(np.diff(q) >= -1e-9 * np.abs(q).max())
    assert q[0] == 0.0


def test_low_rank_breakdown(rng):
    K = random_psd(rng, 15, cond=10, rank=3)
    y = rng.normal(size=15)
    fit = cg_run(gram_of(K, y), CGConfig(l=1))
    assert fit.m_final_reached
    assert fit.stop_index <= 4
    # y outside the range of K: the K-norm residual still vanishes
    _, obj = krylov_oracle(K, y, 3, 1)
    assert weighted_objective(K, y, fit.alpha(3), 1) == pytest.approx(obj, abs=1e-12)
