"""Linear spectral-filter regularization and hold-out selection."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ContractViolation, NumericalError

__all__ = [
    "FilterSpec",
    "filter_function",
    "filter_fit",
    "filter_path",
    "holdout_select",
]

FAMILIES = ("tikhonov", "spectral_cutoff", "landweber")


@dataclass(frozen=True)
class FilterSpec:
    """A spectral filter ``F`` applied to the eigenvalues of ``K``.

    Parameters
    ----------
    family : {"tikhonov", "spectral_cutoff", "landweber"}
    param : float
        ``lambda`` for Tikhonov and spectral cut-off, the iteration count
        ``t`` for Landweber.
    step : float, optional
        Landweber step size, at most ``1/kappa``; defaults to ``1/(2 kappa)``.
    """

    family: str
    param: float
    step: float = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractViolation(f"unknown filter family {self.family!r}")
        if not self.param > 0:
            raise ContractViolation(f"filter parameter must be positive, got {self.param}")
        if self.family == "landweber" and float(self.param) != int(self.param):
            raise ContractViolation("landweber parameter is an iteration count")
        if self.step is not None and not self.step > 0:
            raise ContractViolation(f"step must be positive, got {self.step}")

    def resolved_step(self, kappa):
        step = self.step if self.step is not None else 1.0 / (2.0 * kappa)
        if step > 1.0 / kappa * (1 + 1e-12):
            raise ContractViolation(f"landweber step {step} exceeds 1/kappa = {1 / kappa}")
        return step


def filter_function(spec, x, kappa):
    """Evaluate ``F(x)`` elementwise on eigenvalues ``x >= 0``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    if spec.family == "tikhonov":
        return 1.0 / (x + spec.param)
    if spec.family == "spectral_cutoff":
        out = np.zeros_like(x)
        keep = x >= spec.param
        out[keep] = 1.0 / x[keep]
        return out
    step = spec.resolved_step(kappa)
    t = int(spec.param)
    # step * sum_{j<t} (1 - step x)^j, with the geometric sum closed where x > 0
    out = np.full_like(x, step * t)
    pos = x > 0
    out[pos] = (1.0 - (1.0 - step * x[pos]) ** t) / x[pos]
    return out


def _spectral_apply(G, F_of, y):
    """``F(K) y`` from the eigendecomposition, including the null space of a factored ``K``."""
    try:
        w, U = G.spectrum
    except LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    coords = U.T @ y
    out = U @ (F_of(w) * coords)
    if U.shape[1] < G.n:
        out += F_of(np.zeros(1))[0] * (y - U @ coords)
    return out


def filter_fit(G, spec):
    """Coefficients ``alpha = F(K) y`` for one filter.

    A single Tikhonov problem on a dense system is solved by Cholesky
    factorization of ``K + lambda I``; every other case goes through the
    eigendecomposition of ``K``.
    """
    if spec.family == "tikhonov" and G.matrix is not None:
        A = G.matrix + spec.param * np.eye(G.n)
        try:
            return cho_solve(cho_factor(A), G.y)
        except LinAlgError as exc:
            raise NumericalError(f"Cholesky factorization failed: {exc}") from exc
    return _spectral_apply(G, lambda w: filter_function(spec, w, G.kappa), G.y)


def filter_path(G, specs):
    """Coefficients for a grid of filters sharing one eigendecomposition."""
    return [_spectral_apply(G, lambda w, s=s: filter_function(s, w, G.kappa), G.y) for s in specs]


def holdout_select(predictions, y_val):
    """Index of the candidate with the smallest validation squared error.

    Parameters
    ----------
    predictions : sequence of array-like
        Validation-set predictions of each candidate, ordered from strongest
        to weakest regularization.
    y_val : array-like
        Validation responses.

    Returns
    -------
    int
        Ties go to the smallest index.
    """
    if len(predictions) == 0:
        raise ContractViolation("no candidates to select from")
    y_val = np.asarray(y_val, dtype=float)
    errors = [float(np.mean((np.asarray(p, dtype=float) - y_val) ** 2)) for p in predictions]
    return int(np.argmin(errors))
