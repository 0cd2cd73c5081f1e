import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import gram_of
from kernelcg import (
    Dataset,
    GaussianKernel,
    LinearKernel,
    SpectralMercerKernel,
    assemble_gram,
    rescaled_dot,
    weighted_norm,
)
from kernelcg.evaluation import function_coefficients
from kernelcg.exceptions import ContractViolation, KernelEvaluationError, NumericalError
from kernelcg.kernels import KernelModel


def test_linear_gram_by_formula():
    G = assemble_gram(LinearKernel(radius=2.0), Dataset(X=[1.0, 2.0], Y=[0.0, 0.0]))
    np.testing.assert_allclose(G.K, 0.5 * np.array([[1.0, 2.0], [2.0, 4.0]]), rtol=0, atol=1e-15)


def test_gaussian_diagonal(rng):
    X = rng.normal(size=(7, 3))
    G = assemble_gram(GaussianKernel(bandwidth=0.7), Dataset(X=X, Y=np.ones(7)))
    np.testing.assert_allclose(np.diag(G.K), np.full(7, 1 / 7), rtol=1e-14)
    assert np.array_equal(G.K, G.K.T)


def test_mercer_two_point_gram_by_hand():
    # phi_1 = 1, phi_2(x) = sqrt(2) cos(pi x): phi_2(0) = sqrt(2), phi_2(1/2) = 0
    # k(0,0) = 1 + 1/4 * 2 = 1.5, k(0,1/2) = 1, k(1/2,1/2) = 1
    kernel = SpectralMercerKernel([1.0, 0.25])
    G = assemble_gram(kernel, Dataset(X=[0.0, 0.5], Y=[1.0, 1.0]))
    expected = np.array([[1.5, 1.0], [1.0, 1.0]]) / 2
    np.testing.assert_allclose(G.K, expected, atol=1e-15)
    assert kernel.kappa == 2.5


def test_mercer_factored_matches_dense(rng):
    kernel = SpectralMercerKernel(1.0 / np.arange(1, 6) ** 2)
    X = rng.uniform(size=40)
    G = assemble_gram(kernel, Dataset(X=X, Y=rng.normal(size=40)))
    assert G.factor is not None
    np.testing.assert_allclose(G.K, kernel(X, X) / 40, atol=1e-14)
    v = rng.normal(size=40)
    np.testing.assert_allclose(G.matvec(v), G.K @ v, atol=1e-13)


def test_semi_supervised_response_default():
    G = assemble_gram(LinearKernel(radius=3.0), Dataset(X=[1.0, 2.0, 3.0, 0.5], Y=[1.0, 2.0]))
    np.testing.assert_allclose(G.y, [2.0, 4.0, 0.0, 0.0])
    assert G.n_labeled == 2


class _BrokenKernel(KernelModel):
    kappa = 1.0

    def __call__(self, A, B):
        K = np.ones((len(A), len(B)))
        K[1, 2] = K[2, 1] = np.nan
        return K


def test_non_finite_kernel_names_pair():
    with pytest.raises(KernelEvaluationError, match=r"X_1, X_2"):
        assemble_gram(_BrokenKernel(), Dataset(X=np.zeros((3, 1)), Y=np.zeros(3)))


def test_domain_checks():
    with pytest.raises(ContractViolation):
        assemble_gram(LinearKernel(radius=1.0), Dataset(X=[2.0], Y=[1.0]))
    with pytest.raises(ContractViolation):
        assemble_gram(SpectralMercerKernel([1.0]), Dataset(X=[1.5], Y=[1.0]))
    with pytest.raises(ContractViolation):
        SpectralMercerKernel([0.5, 1.0])
    with pytest.raises(ContractViolation):
        Dataset(X=[0.1], Y=[1.0, 2.0])


@pytest.mark.parametrize(
    "u, v, expected",
    [
        ((1, 1, 1, 1), (1, 1, 1, 1), 1.0),
        ((2, 0), (0, 3), 0.0),
        ((1, 2, 3), (3, 2, 1), 10 / 3),
    ],
)
def test_rescaled_dot_examples(u, v, expected):
    assert rescaled_dot(u, v) == pytest.approx(expected, rel=1e-15)


def test_rescaled_dot_length_mismatch():
    with pytest.raises(ContractViolation):
        rescaled_dot([1, 2], [1, 2, 3])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(
    st.integers(1, 12).flatmap(
        lambda n: st.tuples(*(arrays(float, n, elements=finite) for _ in range(3)))
    ),
    finite,
    finite,
)
def test_rescaled_dot_bilinear_symmetric(vecs, a, b):
    u, v, w = vecs
    assert rescaled_dot(u, v) == rescaled_dot(v, u)
    lhs = rescaled_dot(a * u + b * w, v)
    rhs = a * rescaled_dot(u, v) + b * rescaled_dot(w, v)
    scale = (abs(a) * np.abs(u) + abs(b) * np.abs(w)) @ np.abs(v) / u.size
    assert abs(lhs - rhs) <= 1e-12 * (scale + 1)


def test_weighted_norm_examples():
    G = gram_of(np.eye(2), [1.0, 1.0])
    u = np.array([1.0, 1.0])
    assert weighted_norm(u, G, 1) == pytest.approx(weighted_norm(u, G, 0))
    assert weighted_norm(u, G, 0) == pytest.approx(1.0)
    G2 = gram_of(np.diag([2.0, 1.0]) / 2, [1.0, 1.0])
    assert weighted_norm(u, G2, 1) == pytest.approx(math.sqrt(0.75), rel=1e-15)


def test_weighted_norm_l0_definition(rng):
    u = rng.normal(size=9)
    G = gram_of(np.eye(9) * 0.3, np.ones(9))
    assert weighted_norm(u, G, 0) == pytest.approx(math.sqrt(np.mean(u**2)), rel=1e-14)


def test_weighted_norm_matches_dense_powers(rng):
    A = rng.normal(size=(6, 6))
    K = A @ A.T / 6
    G = gram_of(K, np.ones(6))
    u = rng.normal(size=6)
    for l in range(5):
        direct = math.sqrt(u @ np.linalg.matrix_power(K, l) @ u / 6)
        assert weighted_norm(u, G, l) == pytest.approx(direct, rel=1e-12)


def test_weighted_norm_rejects_indefinite():
    G = gram_of(np.diag([1.0, -1.0]), [1.0, 1.0], kappa=1.0)
    with pytest.raises(NumericalError):
        weighted_norm(np.array([0.0, 1.0]), G, 1)
    with pytest.raises(ContractViolation):
        weighted_norm(np.ones(2), G, 5)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 30),
    p=st.integers(1, 12),
    decay=st.floats(0.5, 3.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_mercer_gram_spectrum_in_bounds(n, p, decay, seed):
    rng = np.random.default_rng(seed)
    kernel = SpectralMercerKernel(np.arange(1, p + 1, dtype=float) ** -decay)
    G = assemble_gram(kernel, Dataset(X=rng.uniform(size=n), Y=np.zeros(n)))
    w = np.linalg.eigvalsh(G.K)
    assert w.min() >= -1e-10 * kernel.kappa
    assert w.max() <= kernel.kappa * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 25),
    bandwidth=st.floats(0.05, 5.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_gaussian_gram_spectrum_in_bounds(n, bandwidth, seed):
    rng = np.random.default_rng(seed)
    G = assemble_gram(GaussianKernel(bandwidth), Dataset(X=rng.normal(size=(n, 2)), Y=np.zeros(n)))
    w = np.linalg.eigvalsh(G.K)
    assert w.min() >= -1e-10
    assert w.max() <= 1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), p=st.integers(1, 16), seed=st.integers(0, 2**32 - 1))
def test_k_norm_equals_rkhs_norm(n, p, seed):
    # |f_alpha|_H^2 = sum_i b_i^2 / xi_i in the cosine coordinates
    rng = np.random.default_rng(seed)
    kernel = SpectralMercerKernel(np.sort(rng.uniform(0.01, 1.0, size=p))[::-1])
    X = rng.uniform(size=n)
    alpha = rng.normal(size=n)
    G = assemble_gram(kernel, Dataset(X=X, Y=np.zeros(n)))
    b = function_coefficients(kernel, X, alpha)
    rkhs = math.sqrt(np.sum(b**2 / kernel.eigenvalues))
    assert weighted_norm(alpha, G, 1) == pytest.approx(rkhs, rel=1e-8, abs=1e-12)
