"""Kernels, datasets and the normalized Gram system.

Two normalization conventions are used together throughout the package:
the stored Gram matrix already carries the ``1/n`` factor
(``K[i, j] = k(X_i, X_j) / n``), and vector inner products are rescaled
by ``1/n`` as well (:func:`rescaled_dot`). With both conventions the
``K``-norm of a coefficient vector equals the RKHS norm of the function
it expands to, and stopping thresholds are stated in that norm.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ContractViolation, KernelEvaluationError, NumericalError

__all__ = [
    "KernelModel",
    "GaussianKernel",
    "LinearKernel",
    "SpectralMercerKernel",
    "cosine_basis",
    "Dataset",
    "GramSystem",
    "assemble_gram",
    "rescaled_dot",
    "weighted_norm",
    "as_points",
]


def as_points(X):
    """Return ``X`` as a float array of shape ``(n_points, n_features)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, np.newaxis]
    elif X.ndim != 2:
        raise ContractViolation(f"points must be 1-D or 2-D, got shape {X.shape}")
    return X


def cosine_basis(x, n_functions):
    """Evaluate the cosine orthonormal system on ``[0, 1]``.

    ``phi_1 = 1`` and ``phi_i(x) = sqrt(2) cos((i - 1) pi x)`` for ``i >= 2``;
    the family is orthonormal in ``L2`` of the uniform distribution.

    Parameters
    ----------
    x : array-like of shape (n_points,)
        Evaluation points.
    n_functions : int
        Number of basis functions.

    Returns
    -------
    ndarray of shape (n_points, n_functions)
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    freqs = np.pi * np.arange(n_functions)
    Phi = np.sqrt(2.0) * np.cos(np.outer(x, freqs))
    Phi[:, 0] = 1.0
    return Phi


class KernelModel:
    """Base class for positive-definite kernels with a declared bound.

    Subclasses implement :meth:`__call__`; ``kappa`` is a declared upper
    bound on ``k(x, x)`` over the kernel's domain, never an estimate.
    """

    kappa: float

    def __call__(self, A, B):
        raise NotImplementedError

    def diag(self, A):
        A = as_points(A)
        return np.array([self(a[np.newaxis], a[np.newaxis])[0, 0] for a in A])

    def feature_factor(self, X):
        """Exact finite-dimensional factor ``F`` with ``k(x, y) = F(x) . F(y)``.

        Returns ``None`` when the kernel has no finite factorization.
        """
        return None

    def check_domain(self, X):
        """Raise :class:`ContractViolation` if a point lies outside the domain."""


@dataclass(frozen=True)
class GaussianKernel(KernelModel):
    """Gaussian kernel ``exp(-|x - y|^2 / (2 bandwidth^2))`` with ``kappa = 1``."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ContractViolation(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def kappa(self):
        return 1.0

    def __call__(self, A, B):
        A, B = as_points(A), as_points(B)
        sq = (
            np.sum(A**2, axis=1)[:, np.newaxis]
            + np.sum(B**2, axis=1)[np.newaxis, :]
            - 2.0 * A @ B.T
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.bandwidth**2))

    def diag(self, A):
        return np.ones(len(as_points(A)))


@dataclass(frozen=True)
class LinearKernel(KernelModel):
    """Linear kernel ``x . y`` on the ball of the given radius.

    ``kappa`` is declared as ``radius**2``, the supremum of ``|x|^2`` over
    the configured domain.
    """

    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractViolation(f"radius must be positive, got {self.radius}")

    @property
    def kappa(self):
        return float(self.radius) ** 2

    def __call__(self, A, B):
        return as_points(A) @ as_points(B).T

    def diag(self, A):
        return np.sum(as_points(A) ** 2, axis=1)

    def feature_factor(self, X):
        return as_points(X).copy()

    def check_domain(self, X):
        sq = self.diag(X)
        bad = np.flatnonzero(sq > self.kappa * (1 + 1e-12))
        if bad.size:
            raise ContractViolation(
                f"point {bad[0]} has squared norm {sq[bad[0]]:.6g} > kappa={self.kappa:.6g}"
            )


@dataclass(frozen=True, eq=False)
class SpectralMercerKernel(KernelModel):
    """Finite-rank kernel ``sum_i xi_i phi_i(x) phi_i(y)`` on ``[0, 1]``.

    The basis is the cosine system of :func:`cosine_basis`, orthonormal
    under the uniform distribution, so ``xi`` are exactly the eigenvalues
    of the kernel integral operator.

    Parameters
    ----------
    eigenvalues : array-like
        Strictly positive, non-increasing eigenvalues ``xi_1 >= xi_2 >= ...``.
    basis : str
        Only ``"cosine"`` is supported.
    """

    eigenvalues: np.ndarray
    basis: str = "cosine"

    def __post_init__(self):
        xi = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if xi.size == 0:
            raise ContractViolation("at least one eigenvalue is required")
        if not np.all(np.isfinite(xi)) or np.any(xi <= 0):
            raise ContractViolation("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(xi) > 0):
            raise ContractViolation("eigenvalues must be non-increasing")
        if self.basis != "cosine":
            raise ContractViolation(f"unsupported basis {self.basis!r}")
        xi.setflags(write=False)
        object.__setattr__(self, "eigenvalues", xi)

    @property
    def p(self):
        return self.eigenvalues.size

    @property
    def kappa(self):
        # sup_i |phi_i|_inf^2 = 2 for the cosine system
        return 2.0 * float(np.sum(self.eigenvalues))

    def basis_values(self, X):
        X = as_points(X)
        if X.shape[1] != 1:
            raise ContractViolation("spectral kernel is defined on scalar points in [0, 1]")
        return cosine_basis(X[:, 0], self.p)

    def feature_factor(self, X):
        return self.basis_values(X) * np.sqrt(self.eigenvalues)

    def __call__(self, A, B):
        FA, FB = self.feature_factor(A), self.feature_factor(B)
        return FA @ FB.T

    def diag(self, A):
        return np.sum(self.feature_factor(A) ** 2, axis=1)

    def check_domain(self, X):
        X = as_points(X)
        if X.shape[1] != 1:
            raise ContractViolation("spectral kernel is defined on scalar points in [0, 1]")
        bad = np.flatnonzero((X[:, 0] < 0) | (X[:, 0] > 1))
        if bad.size:
            raise ContractViolation(f"point {bad[0]} = {X[bad[0], 0]!r} lies outside [0, 1]")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates and responses; points beyond ``n_labeled`` are unlabeled.

    Attributes
    ----------
    X : ndarray of shape (n_total, n_features)
    Y : ndarray of shape (n_labeled,)
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = as_points(self.X)
        Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if Y.size < 1:
            raise ContractViolation("a dataset needs at least one labeled point")
        if X.shape[0] < Y.size:
            raise ContractViolation(
                f"{Y.size} responses but only {X.shape[0]} covariate points"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n_labeled(self):
        return self.Y.size

    @property
    def n_total(self):
        return self.X.shape[0]

    @property
    def n_unlabeled(self):
        return self.n_total - self.n_labeled


@dataclass(frozen=True, eq=False)
class GramSystem:
    """Normalized kernel system ``K alpha = y``.

    Exactly one of ``matrix`` (dense ``n x n``) or ``factor`` (``n x p``
    with ``K = factor @ factor.T``) is stored; both already include the
    ``1/n`` normalization. The factored form is exact for finite-rank
    kernels and keeps matrix-vector products at ``O(n p)``.

    Attributes
    ----------
    y : ndarray of shape (n,)
        Response vector the system is solved for.
    kappa : float
        Declared kernel bound; every eigenvalue of ``K`` is at most ``kappa``.
    n_labeled : int
        Number of labeled points (equals ``n`` outside the semi-supervised case).
    inner_scale : float
        Factor applied by :func:`rescaled_dot`, always ``1 / n``.
    """

    y: np.ndarray
    kappa: float
    n_labeled: int
    matrix: np.ndarray = None
    factor: np.ndarray = None
    inner_scale: float = field(init=False)

    def __post_init__(self):
        if (self.matrix is None) == (self.factor is None):
            raise ContractViolation("exactly one of matrix or factor must be given")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = self.matrix.shape[0] if self.matrix is not None else self.factor.shape[0]
        if y.size != n:
            raise ContractViolation(f"response length {y.size} does not match system size {n}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "inner_scale", 1.0 / n)

    @property
    def n(self):
        return self.y.size

    @cached_property
    def K(self):
        """Dense normalized Gram matrix."""
        if self.matrix is not None:
            return self.matrix
        K = self.factor @ self.factor.T
        return 0.5 * (K + K.T)

    def matvec(self, v):
        if self.matrix is not None:
            return self.matrix @ v
        return self.factor @ (self.factor.T @ v)

    def matpow(self, v, power):
        """Return ``K**power @ v`` by repeated products."""
        for _ in range(power):
            v = self.matvec(v)
        return v

    @cached_property
    def spectrum(self):
        """Eigenpairs ``(w, U)`` of ``K`` in ascending order.

        For a factored system only the (at most ``p``) eigenpairs of the
        column space are returned; the orthogonal complement has eigenvalue 0.
        """
        if self.matrix is not None:
            w, U = np.linalg.eigh(self.matrix)
            return w, U
        U, sv, _ = np.linalg.svd(self.factor, full_matrices=False)
        order = np.argsort(sv**2)
        return sv[order] ** 2, U[:, order]


def assemble_gram(kernel, data, y=None):
    """Build the normalized Gram system for ``data``.

    Entry ``(i, j)`` equals ``k(X_i, X_j) / n_total``. When ``data`` has
    unlabeled points and ``y`` is not given, the zero-padded, rescaled
    semi-supervised response is used.

    Parameters
    ----------
    kernel : KernelModel
    data : Dataset
    y : array-like, optional
        Override for the response vector (length ``n_total``).

    Returns
    -------
    GramSystem

    Raises
    ------
    KernelEvaluationError
        If the kernel yields a non-finite value; the message names the pair.
    """
    kernel.check_domain(data.X)
    n = data.n_total
    if y is None:
        if data.n_unlabeled:
            y = np.zeros(n)
            y[: data.n_labeled] = data.Y * (n / data.n_labeled)
        else:
            y = data.Y
    F = kernel.feature_factor(data.X)
    if F is not None and F.shape[1] < n:
        _check_finite(F, "feature factor", pairs=False)
        return GramSystem(y=y, kappa=kernel.kappa, n_labeled=data.n_labeled,
                          factor=F / np.sqrt(n))
    K = kernel(data.X, data.X)
    _check_finite(K, "kernel matrix", pairs=True)
    K = 0.5 * (K + K.T) / n
    return GramSystem(y=y, kappa=kernel.kappa, n_labeled=data.n_labeled, matrix=K)


def _check_finite(A, what, pairs):
    bad = np.argwhere(~np.isfinite(A))
    if bad.size:
        i, j = bad[0]
        if pairs:
            raise KernelEvaluationError(
                f"non-finite {what} value {A[i, j]!r} at pair (X_{i}, X_{j})"
            )
        raise KernelEvaluationError(
            f"non-finite {what} value {A[i, j]!r} at point X_{i}, component {j}"
        )


def rescaled_dot(u, v):
    """Euclidean inner product rescaled by ``1/n``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ContractViolation(f"length mismatch: {u.shape} vs {v.shape}")
    return float(u @ v) / u.size


def weighted_norm(u, G, l):
    """Return ``sqrt(<u, K^l u>)`` under the rescaled inner product.

    ``l = 0`` gives the rescaled Euclidean norm and ``l = 1`` the ``K``-norm.

    Raises
    ------
    NumericalError
        If the computed square is negative beyond roundoff.
    """
    if not 0 <= l <= 4:
        raise ContractViolation(f"norm exponent l must be in [0, 4], got {l}")
    u = np.asarray(u, dtype=float)
    if u.size != G.n:
        raise ContractViolation(f"vector length {u.size} does not match system size {G.n}")
    half, odd = divmod(l, 2)
    w = G.matpow(u, half)
    sq = rescaled_dot(w, G.matvec(w)) if odd else rescaled_dot(w, w)
    if sq < 0:
        scale = max(G.kappa, 1.0) ** l * rescaled_dot(u, u)
        if sq < -1e-10 * scale:
            raise NumericalError(f"negative squared K^{l}-norm {sq:.3e}")
        sq = 0.0
    return float(np.sqrt(sq))
