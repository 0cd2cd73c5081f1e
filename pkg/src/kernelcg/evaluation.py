"""Estimation error, effective dimension, concentration audits, rate fits.

Everything here works in the coordinates of a :class:`SpectralMercerKernel`:
functions are coefficient vectors in the cosine basis (orthonormal in L2 of
the uniform law, so Parseval gives exact L2 distances), and the covariance
operators ``S`` and ``S_n`` are ``p x p`` matrices in the RKHS-orthonormal
basis ``sqrt(xi_i) phi_i``, where ``S = diag(xi)``.
"""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .cg import expand
from .exceptions import ConfigError, ContractViolation
from .kernels import SpectralMercerKernel, as_points

__all__ = [
    "effective_dimension",
    "l2_error_exact",
    "l2_error_mc",
    "function_coefficients",
    "AuditResult",
    "operator_deviation_hs",
    "warped_deviation_hs",
    "operator_bound",
    "warped_bound",
    "audit_operator_concentration",
    "audit_warped_concentration",
    "RateReport",
    "fit_rate",
]

_MC_CHUNK = 4096


def effective_dimension(eigenvalues, lam):
    """``N(lambda) = sum_i xi_i / (xi_i + lambda)``."""
    if not lam > 0:
        raise ContractViolation(f"lambda must be positive, got {lam}")
    xi = np.asarray(eigenvalues, dtype=float)
    return float(np.sum(xi / (xi + lam)))


def function_coefficients(kernel, train_X, alpha):
    """Cosine-basis coefficients ``b_i = xi_i (1/n) sum_j alpha_j phi_i(X_j)`` of ``f_alpha``."""
    Phi = kernel.basis_values(train_X)
    return kernel.eigenvalues * (Phi.T @ alpha) / Phi.shape[0]


def l2_error_exact(truth, kernel, train_X, alpha):
    """``|f_alpha - f*|_2^2`` by Parseval.

    Falls back to :func:`l2_error_mc` (value only) for kernels without a
    known eigen-expansion.
    """
    if not isinstance(kernel, SpectralMercerKernel):
        return l2_error_mc(truth, kernel, train_X, alpha)[0]
    b = function_coefficients(kernel, train_X, np.asarray(alpha, dtype=float))
    a = truth.target_coeffs
    if a.size != b.size:
        raise ContractViolation("kernel and ground truth use different truncations")
    return float(np.sum((b - a) ** 2))


def l2_error_mc(truth, kernel, train_X, alpha, n_mc=100_000, seed=0):
    """Monte Carlo estimate of ``|f_alpha - f*|_2^2`` over fresh uniform points.

    Returns
    -------
    mean : float
    stderr : float
    """
    if n_mc < 1000:
        raise ContractViolation(f"n_mc must be at least 1000, got {n_mc}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=n_mc)
    sq = np.empty(n_mc)
    for start in range(0, n_mc, _MC_CHUNK):
        chunk = x[start:start + _MC_CHUNK]
        diff = expand(np.asarray(alpha, dtype=float), kernel, train_X, chunk) - truth(chunk)
        sq[start:start + _MC_CHUNK] = diff**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_mc))


@dataclass(frozen=True)
class AuditResult:
    """Outcome of a concentration audit.

    Attributes
    ----------
    violation_fraction : float
    bound : float
        The probabilistic bound being audited.
    deviations : ndarray
        Observed deviation per trial.
    """

    violation_fraction: float
    bound: float
    deviations: np.ndarray

    @property
    def n_trials(self):
        return self.deviations.size


def _deviation_sq(A, xi, w):
    """``|W^(1/2) (S_n - S)|_F^2`` with ``S_n = A^T A / n``, ``S = diag(xi)``, ``W = diag(w)``.

    For ``p <= n`` the ``p x p`` difference is formed directly; otherwise the
    square is expanded so only ``n x n`` products of ``A`` appear.
    """
    n, p = A.shape
    if p <= n:
        diff = A.T @ A / n
        diff[np.diag_indices(p)] -= xi
        return float(np.sum(diff**2 * w[:, np.newaxis]))
    gram = A @ A.T
    return float(
        np.sum(((A * w) @ A.T) * gram) / n**2
        - 2.0 * np.sum(A**2 @ (xi * w)) / n
        + np.sum(xi**2 * w)
    )


def operator_deviation_hs(kernel, X):
    """``|S_n - S|_HS`` for the sample ``X``, in the RKHS-orthonormal coordinates."""
    A = kernel.feature_factor(X)
    xi = kernel.eigenvalues
    return math.sqrt(max(_deviation_sq(A, xi, np.ones_like(xi)), 0.0))


def warped_deviation_hs(kernel, X, lam):
    """``|(S + lambda)^(-1/2) (S_n - S)|_HS`` for the sample ``X``."""
    A = kernel.feature_factor(X)
    xi = kernel.eigenvalues
    return math.sqrt(max(_deviation_sq(A, xi, 1.0 / (xi + lam)), 0.0))


def operator_bound(kappa, n, gamma):
    """``(4 kappa / sqrt(n)) sqrt(log(2/gamma))``."""
    return 4.0 * kappa / math.sqrt(n) * math.sqrt(math.log(2.0 / gamma))


def warped_bound(kappa, n, lam, gamma, eff_dim):
    """``2 sqrt(kappa) (sqrt(N(lambda)/n) + 2 sqrt(kappa)/(sqrt(lambda) n)) log(6/gamma)``."""
    return (
        2.0 * math.sqrt(kappa)
        * (math.sqrt(eff_dim / n) + 2.0 * math.sqrt(kappa) / (math.sqrt(lam) * n))
        * math.log(6.0 / gamma)
    )


def _check_audit_args(kernel, n, gamma, n_trials):
    if not isinstance(kernel, SpectralMercerKernel):
        raise ContractViolation("concentration audits need a SpectralMercerKernel")
    if n < 1 or n_trials < 1:
        raise ContractViolation("n and n_trials must be positive")
    if not 0 < gamma < 1:
        raise ConfigError(f"gamma: must lie in (0, 1), got {gamma}")


def _audit(kernel, n, n_trials, seed, deviation, bound):
    rng = np.random.default_rng(seed)
    devs = np.array([deviation(rng.uniform(0.0, 1.0, size=n)) for _ in range(n_trials)])
    return AuditResult(
        violation_fraction=float(np.mean(devs > bound)), bound=bound, deviations=devs
    )


def audit_operator_concentration(kernel, n, gamma, n_trials, seed=0):
    """Fraction of trials with ``|S_n - S|_HS`` above its ``1 - gamma`` bound."""
    _check_audit_args(kernel, n, gamma, n_trials)
    bound = operator_bound(kernel.kappa, n, gamma)
    return _audit(kernel, n, n_trials, seed,
                  lambda X: operator_deviation_hs(kernel, X), bound)


def audit_warped_concentration(kernel, n, lam, gamma, n_trials, seed=0):
    """Fraction of trials with the warped deviation above its ``1 - gamma`` bound."""
    _check_audit_args(kernel, n, gamma, n_trials)
    if not lam > 0:
        raise ContractViolation(f"lambda must be positive, got {lam}")
    eff = effective_dimension(kernel.eigenvalues, lam)
    bound = warped_bound(kernel.kappa, n, lam, gamma, eff)
    return _audit(kernel, n, n_trials, seed,
                  lambda X: warped_deviation_hs(kernel, X, lam), bound)


@dataclass
class RateReport:
    """Log-log fit of median error against sample size.

    ``slope`` is the OLS slope of ``log(median error)`` on ``log(n)``;
    ``theoretical_slope`` is ``-2r/(2r+s)``.
    """

    n_grid: list
    errors: list
    medians: list
    iqr: list
    slope: float
    slope_se: float
    intercept: float
    theoretical_slope: float
    used_n: list

    def to_dict(self):
        return asdict(self)


def fit_rate(n_grid, errors, r, s, min_points=4):
    """Fit the convergence rate of per-``n`` replicate errors.

    Parameters
    ----------
    n_grid : sequence of int
    errors : sequence of sequences
        Replicate errors for each entry of ``n_grid``.
    r, s : float
        Exponents defining the reference slope ``-2r/(2r+s)``.

    Raises
    ------
    ContractViolation
        If fewer than ``min_points`` sizes have a positive median error.
    """
    if len(n_grid) != len(errors):
        raise ContractViolation("n_grid and errors differ in length")
    medians, iqr, used = [], [], []
    for n, errs in zip(n_grid, errors):
        errs = np.asarray(errs, dtype=float)
        errs = errs[np.isfinite(errs)]
        if errs.size == 0:
            medians.append(math.nan)
            iqr.append(math.nan)
            warnings.warn(f"n={n}: no finite errors; excluded from the fit", RuntimeWarning)
            continue
        med = float(np.median(errs))
        q1, q3 = np.percentile(errs, [25, 75])
        medians.append(med)
        iqr.append(float(q3 - q1))
        if med > 0:
            used.append((n, med))
        else:
            warnings.warn(f"n={n}: non-positive median error; excluded from the fit", RuntimeWarning)
    if len(used) < min_points:
        raise ContractViolation(
            f"rate fit needs at least {min_points} sizes with positive median error, got {len(used)}"
        )
    ns, meds = np.array(used).T
    fit = stats.linregress(np.log(ns), np.log(meds))
    return RateReport(
        n_grid=[int(n) for n in n_grid],
        errors=[[float(e) for e in errs] for errs in errors],
        medians=medians,
        iqr=iqr,
        slope=float(fit.slope),
        slope_se=float(fit.stderr),
        intercept=float(fit.intercept),
        theoretical_slope=-2.0 * r / (2.0 * r + s),
        used_n=[int(n) for n in ns],
    )
