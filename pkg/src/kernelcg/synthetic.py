"""Synthetic regression problems with known regularity.

Covariates are uniform on ``[0, 1]`` and the kernel is a finite-rank cosine
expansion with eigenvalues ``xi_i = c_s i^(-1/s)`` (``sum xi_i = 1``), so
the effective dimension grows like ``lambda^(-s)``. The target is
``f* = sum_i a_i phi_i`` with ``a_i = xi_i^r u_i`` and ``|u| = kappa^(-r) rho``
exactly; ``r >= 1/2`` puts ``f*`` in the RKHS.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from .evaluation import effective_dimension
from .exceptions import ConfigError, HypothesisViolation
from .kernels import Dataset, SpectralMercerKernel, as_points, cosine_basis

__all__ = [
    "NoiseModel",
    "SyntheticSpec",
    "GroundTruth",
    "SemiSupervised",
    "spectrum",
    "source_profile",
    "effective_dimension",
    "intrinsic_dimension_constant",
    "build_problem",
    "sample",
    "extend_semi_supervised",
    "unlabeled_ratio",
    "required_unlabeled",
]

NOISE_KINDS = ("bounded_uniform", "gaussian_truncated", "gaussian")
SOURCE_DECAY = 0.55
LAMBDA_GRID = np.logspace(-6, 0, 50)
TRUNCATION_TOLERANCE = 0.10


@dataclass(frozen=True)
class NoiseModel:
    """Additive noise ``eps`` with ``E[eps | X] = 0``.

    ``bounded_uniform`` draws ``Uniform[-M, M]``; ``gaussian_truncated``
    draws ``N(0, (M/2)^2)`` conditioned on ``[-M, M]``; ``gaussian`` draws
    ``N(0, M^2)``, which meets the Bernstein moment condition
    ``E|eps|^p <= p! M^p / 2`` with the same ``M``.
    """

    kind: str = "gaussian"
    M: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"noise.kind: unknown noise model {self.kind!r}")
        if not self.M >= 0:
            raise ConfigError(f"noise.M: must be non-negative, got {self.M}")

    @property
    def bound(self):
        """Almost-sure bound on ``|eps|`` (infinite for Gaussian noise)."""
        return math.inf if self.kind == "gaussian" else self.M

    def draw(self, rng, size):
        if self.M == 0:
            return np.zeros(size)
        if self.kind == "bounded_uniform":
            return rng.uniform(-self.M, self.M, size=size)
        if self.kind == "gaussian_truncated":
            return stats.truncnorm.rvs(-2.0, 2.0, scale=self.M / 2.0, size=size, random_state=rng)
        return rng.normal(0.0, self.M, size=size)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic problem.

    Parameters
    ----------
    s : float
        Intrinsic-dimension exponent in ``(0, 1]``.
    r : float
        Source exponent, ``>= 0``.
    rho : float
        Source norm bound.
    p : int
        Spectrum truncation.
    noise : NoiseModel
    seed : int
    n : int
        Labeled sample size.
    n_unlabeled : int
    """

    s: float = 1.0
    r: float = 0.5
    rho: float = 1.0
    p: int = 2048
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    n: int = 256
    n_unlabeled: int = 0

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ConfigError(f"s: must lie in (0, 1], got {self.s}")
        if not self.r >= 0:
            raise ConfigError(f"r: must be >= 0, got {self.r}")
        if not self.rho > 0:
            raise ConfigError(f"rho: must be positive, got {self.rho}")
        if self.p < 1:
            raise ConfigError(f"p: must be positive, got {self.p}")
        if self.n < 1:
            raise ConfigError(f"n: must be positive, got {self.n}")
        if self.n_unlabeled < 0:
            raise ConfigError(f"n_unlabeled: must be non-negative, got {self.n_unlabeled}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Known target ``f* = sum_i target_coeffs[i] phi_i``.

    Attributes
    ----------
    target_coeffs : ndarray
    source : ndarray
        The vector ``u`` with ``target_coeffs = xi**r * u``.
    eigenvalues : ndarray
    spec : SyntheticSpec
    D_effective : float
        ``sqrt(max_lambda N(lambda) (lambda/kappa)^s)`` over the certificate grid.
    truncation_tail : float
        ``sum_{i > p} a_i^2`` of the untruncated construction, the size of the
        bias the truncation hides.
    """

    target_coeffs: np.ndarray
    source: np.ndarray
    eigenvalues: np.ndarray
    spec: SyntheticSpec
    D_effective: float
    truncation_tail: float

    @property
    def kappa(self):
        return 2.0 * float(np.sum(self.eigenvalues))

    @property
    def l2_norm_sq(self):
        return float(np.sum(self.target_coeffs**2))

    @property
    def rkhs_norm_sq(self):
        """``sum a_i^2 / xi_i``; finite for the truncated model, but only bounded in p when ``r >= 1/2``."""
        return float(np.sum(self.target_coeffs**2 / self.eigenvalues))

    @property
    def sup_bound(self):
        """Bound on ``|f*|_inf`` from ``|phi_i|_inf <= sqrt(2)``."""
        return math.sqrt(2.0) * float(np.sum(np.abs(self.target_coeffs)))

    def __call__(self, x):
        x = as_points(x)[:, 0]
        return cosine_basis(x, self.target_coeffs.size) @ self.target_coeffs


def spectrum(s, p):
    """Eigenvalues ``c_s i^(-1/s)``, ``i = 1..p``, normalized to sum to one."""
    xi = np.arange(1, p + 1, dtype=float) ** (-1.0 / s)
    return xi / xi.sum()


def source_profile(p, r, rho, kappa):
    """Deterministic source ``u_i ∝ i^(-0.55)`` with ``|u| = kappa^(-r) rho``."""
    u = np.arange(1, p + 1, dtype=float) ** (-SOURCE_DECAY)
    return u * (kappa ** (-r) * rho / np.linalg.norm(u))


def intrinsic_dimension_constant(eigenvalues, s, kappa, grid=LAMBDA_GRID):
    """Smallest ``D`` with ``N(lambda) <= D^2 (lambda/kappa)^(-s)`` on ``grid * kappa``."""
    xi = np.asarray(eigenvalues, dtype=float)
    lam = np.asarray(grid) * kappa
    N = np.sum(xi[np.newaxis, :] / (xi[np.newaxis, :] + lam[:, np.newaxis]), axis=1)
    return float(np.sqrt(np.max(N * (lam / kappa) ** s)))


def build_problem(spec):
    """Construct the kernel and ground truth for ``spec``.

    Returns
    -------
    kernel : SpectralMercerKernel
    truth : GroundTruth

    Raises
    ------
    ConfigError
        If a four times longer spectrum has an intrinsic-dimension constant
        more than ``TRUNCATION_TOLERANCE`` (10%) above the truncated one's,
        i.e. the truncation rather than ``s`` determines the certificate.
    """
    xi = spectrum(spec.s, spec.p)
    kernel = SpectralMercerKernel(xi)
    kappa = kernel.kappa
    u = source_profile(spec.p, spec.r, spec.rho, kappa)
    a = xi**spec.r * u
    D = intrinsic_dimension_constant(xi, spec.s, kappa)

    # same constants, continued past p, to size what truncation drops
    scale_xi = xi[0]
    scale_u = u[0]
    i = np.arange(spec.p + 1, 4 * spec.p + 1, dtype=float)
    xi_ext = np.concatenate([xi, scale_xi * i ** (-1.0 / spec.s)])
    D_ext = intrinsic_dimension_constant(xi_ext, spec.s, kappa)
    if D_ext > (1.0 + TRUNCATION_TOLERANCE) * D:
        raise ConfigError(
            f"p: truncation at p={spec.p} dominates the intrinsic-dimension certificate "
            f"(D={D:.4g} vs {D_ext:.4g} for a longer spectrum); increase p"
        )
    tail_idx = np.arange(spec.p + 1, 64 * spec.p + 1, dtype=float)
    tail = float(np.sum((scale_xi * tail_idx ** (-1.0 / spec.s)) ** (2 * spec.r)
                        * (scale_u * tail_idx ** (-SOURCE_DECAY)) ** 2))
    truth = GroundTruth(
        target_coeffs=a,
        source=u,
        eigenvalues=xi,
        spec=spec,
        D_effective=D,
        truncation_tail=tail,
    )
    return kernel, truth


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(truth, n=None, n_unlabeled=None, noise=None, seed=None):
    """Draw a dataset from the problem described by ``truth``.

    ``X`` is uniform on ``[0, 1]`` with ``n + n_unlabeled`` points; the first
    ``n`` receive ``Y = f*(X) + eps``. Arguments left as None fall back to
    ``truth.spec``. ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    spec = truth.spec
    n = spec.n if n is None else n
    n_unlabeled = spec.n_unlabeled if n_unlabeled is None else n_unlabeled
    noise = spec.noise if noise is None else noise
    if n < 1:
        raise ConfigError(f"n: must be positive, got {n}")
    rng = _rng(spec.seed if seed is None else seed)
    X = rng.uniform(0.0, 1.0, size=n + n_unlabeled)
    Y = truth(X[:n]) + noise.draw(rng, n)
    return Dataset(X=X, Y=Y)


class SemiSupervised(NamedTuple):
    data: Dataset
    y: np.ndarray
    noop: bool


def extend_semi_supervised(data):
    """Response ``(n_total / n) (Y_1, ..., Y_n, 0, ..., 0)`` over all points.

    Returns
    -------
    SemiSupervised
        ``(data, y, noop)``; ``noop`` is True (and ``y`` is ``data.Y``) when
        there are no unlabeled points.
    """
    if data.n_unlabeled == 0:
        return SemiSupervised(data, data.Y.copy(), True)
    y = np.zeros(data.n_total)
    y[: data.n_labeled] = data.Y * (data.n_total / data.n_labeled)
    return SemiSupervised(data, y, False)


def unlabeled_ratio(n, r, s, D, gamma):
    """``(16 D^2 / n log^2(6/gamma))^(-(1 - 2r)_+ / (2r + s))``."""
    if r + s < 0.5:
        raise HypothesisViolation(f"r + s = {r + s} < 1/2: no unlabeled-data guarantee")
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma: must lie in (0, 1), got {gamma}")
    exponent = -max(1.0 - 2.0 * r, 0.0) / (2.0 * r + s)
    return (16.0 * D**2 / n * math.log(6.0 / gamma) ** 2) ** exponent


def required_unlabeled(n, r, s, D, gamma):
    """Total point count ``n_tilde`` (labeled plus unlabeled) needed for ``n`` labels."""
    ratio = unlabeled_ratio(n, r, s, D, gamma)
    # guard against ceil(n * (1 + 1e-16)) = n + 1
    return max(int(n), math.ceil(n * ratio - 1e-9))


def with_sizes(spec, n, n_unlabeled=0):
    return replace(spec, n=n, n_unlabeled=n_unlabeled)
