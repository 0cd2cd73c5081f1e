"""Kernel conjugate gradient in the ``K^l``-weighted residual norm.

The iterate after ``m`` steps is

    alpha_m = argmin_{alpha in span{y, K y, ..., K^(m-1) y}} |y - K alpha|_{K^l}

so ``l = 1`` is kernel CG regression and ``l = 0`` is kernel partial least
squares. Search directions are kept ``K^(l+2)``-conjugate (the Hessian of
the objective), which makes residuals ``K^(l+1)``-orthogonal. Alongside the
vectors, every iterate's polynomial ``q_m`` (``alpha_m = q_m(K) y``) is
tracked in the monomial basis.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation, NumericalError
from .kernels import as_points, rescaled_dot, weighted_norm

__all__ = [
    "CGConfig",
    "CGFit",
    "cg_run",
    "predict",
    "residual_vector",
    "poly_apply",
    "STOP_MAX_ITERS",
    "STOP_BREAKDOWN",
    "STOP_DISCREPANCY",
]

STOP_MAX_ITERS = "max_iters"
STOP_BREAKDOWN = "breakdown"
STOP_DISCREPANCY = "discrepancy"

MAX_TRACKED_DEGREE = 200


@dataclass(frozen=True)
class CGConfig:
    """Settings for :func:`cg_run`.

    Parameters
    ----------
    l : int
        Exponent of the residual norm, ``0 <= l <= 4``.
    max_iters : int, optional
        Iteration cap, clipped to ``n``; defaults to ``min(n, 200)``.
    breakdown_tol : float
        Relative tolerance declaring the Krylov space exhausted.
    reorthogonalize : bool, optional
        Re-conjugate every new direction against all previous ones.
        Defaults to on for dense systems with ``n <= 2000`` and for all
        factored systems (where it costs ``O(n m)`` per step).
    track_polynomials : bool, optional
        Keep monomial coefficients of ``q_m``; defaults to on when
        ``max_iters <= 200``.
    """

    l: int = 1
    max_iters: int = None
    breakdown_tol: float = 1e-12
    reorthogonalize: bool = None
    track_polynomials: bool = None

    def __post_init__(self):
        if not (isinstance(self.l, (int, np.integer)) and 0 <= self.l <= 4):
            raise ContractViolation(f"l must be an integer in [0, 4], got {self.l!r}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ContractViolation(f"max_iters must be positive, got {self.max_iters}")
        if not self.breakdown_tol > 0:
            raise ContractViolation("breakdown_tol must be positive")

    def resolve(self, G):
        # the Krylov dimension never exceeds n
        max_iters = min(self.max_iters or MAX_TRACKED_DEGREE, G.n)
        reorth = self.reorthogonalize
        if reorth is None:
            reorth = G.factor is not None or G.n <= 2000
        track = self.track_polynomials
        if track is None:
            track = max_iters <= MAX_TRACKED_DEGREE
        elif track and max_iters > MAX_TRACKED_DEGREE:
            raise ContractViolation(
                f"polynomial tracking is capped at degree {MAX_TRACKED_DEGREE}"
            )
        return max_iters, reorth, track


@dataclass(frozen=True, eq=False)
class CGFit:
    """Result of :func:`cg_run`; index ``m`` runs over ``0..stop_index``.

    Attributes
    ----------
    alphas : ndarray of shape (stop_index + 1, n)
        Coefficient vectors; ``alphas[0]`` is zero.
    residual_norms : ndarray
        ``|y - K alpha_m|_{K^l}`` (rescaled).
    q_at_zero : ndarray
        ``q_m(0) = -p_m'(0)``; non-decreasing in ``m``.
    poly_coeffs : list of ndarray or None
        Monomial coefficients of ``q_m`` (``poly_coeffs[m]`` has length ``m``).
    m_final_reached : bool
    stop_reason : str
        One of ``"max_iters"``, ``"breakdown"``, ``"discrepancy"``.
    l : int
    """

    alphas: np.ndarray
    residual_norms: np.ndarray
    q_at_zero: np.ndarray
    poly_coeffs: list
    m_final_reached: bool
    stop_reason: str
    l: int

    @property
    def stop_index(self):
        return self.alphas.shape[0] - 1

    def alpha(self, m):
        self._check_index(m)
        return self.alphas[m]

    def residual_poly(self, m):
        """Monomial coefficients of ``p_m(x) = 1 - x q_m(x)``."""
        self._check_index(m)
        if self.poly_coeffs is None:
            raise ContractViolation("polynomials were not tracked for this fit")
        q = self.poly_coeffs[m]
        return np.concatenate([[1.0], -q])

    def _check_index(self, m):
        if not 0 <= m <= self.stop_index:
            raise ContractViolation(f"iteration {m} outside [0, {self.stop_index}]")


def poly_apply(G, coeffs, v):
    """Return ``sum_j coeffs[j] K^j v`` by Horner's rule."""
    out = np.zeros_like(np.asarray(v, dtype=float))
    for c in coeffs[::-1]:
        out = G.matvec(out) + c * v
    return out


def _pad_add(a, b, scale):
    """Coefficient arrays ``a + scale * b`` with zero padding."""
    out = np.zeros(max(a.size, b.size))
    out[: a.size] += a
    out[: b.size] += scale * b
    return out


def cg_run(G, cfg=None, monitor=None):
    """Run kernel CG on the system ``G``.

    Parameters
    ----------
    G : GramSystem
    cfg : CGConfig, optional
    monitor : callable, optional
        ``monitor(m, alpha_m, residual_m) -> bool`` is called after every
        iteration (including ``m = 0``); returning True ends the run with
        ``stop_reason="discrepancy"``.

    Returns
    -------
    CGFit

    Raises
    ------
    NumericalError
        If an intermediate quantity becomes non-finite.
    """
    cfg = cfg or CGConfig()
    l = int(cfg.l)
    max_iters, reorth, track = cfg.resolve(G)
    y = G.y
    n = G.n

    alphas = [np.zeros(n)]
    y_norm = weighted_norm(y, G, l)
    res_norms = [y_norm]
    q0 = [0.0]
    polys = [np.zeros(0)] if track else None

    def finish(reason, final):
        return CGFit(
            alphas=np.array(alphas),
            residual_norms=np.array(res_norms),
            q_at_zero=np.array(q0),
            poly_coeffs=polys,
            m_final_reached=final,
            stop_reason=reason,
            l=l,
        )

    r = y.copy()
    if monitor is not None and monitor(0, alphas[0], r):
        return finish(STOP_DISCREPANCY, False)
    grad0 = weighted_norm(r, G, l + 1)
    if y_norm == 0.0 or grad0 == 0.0:
        return finish(STOP_BREAKDOWN, True)

    tol = cfg.breakdown_tol
    alpha = alphas[0].copy()
    q = np.zeros(0)
    p = np.ones(1)
    d = r.copy()
    s = np.ones(1)  # d = s(K) y
    dirs, zdirs, sdirs = [], [], []
    h1 = (l + 2) // 2
    # without full tracking only constant terms are kept, enough for q_m(0)
    keep = None if track else 1

    for m in range(1, max_iters + 1):
        if reorth:
            for _ in range(2):
                for dj, zj, sj in zip(dirs, zdirs, sdirs):
                    c = rescaled_dot(zj, d)
                    d = d - c * dj
                    s = _pad_add(s, sj, -c)
        powers = [d]
        for _ in range(l + 2):
            powers.append(G.matvec(powers[-1]))
        denom = rescaled_dot(powers[h1], powers[l + 2 - h1])
        if not np.isfinite(denom):
            raise NumericalError("non-finite direction norm", iteration=m)
        if denom <= 0.0:
            return finish(STOP_BREAKDOWN, True)
        scale = 1.0 / np.sqrt(denom)
        powers = [v * scale for v in powers]
        d = powers[0]
        s = s * scale

        gamma = rescaled_dot(r, powers[l + 1])
        alpha = alpha + gamma * d
        r = r - gamma * powers[1]
        if not (np.isfinite(gamma) and np.all(np.isfinite(alpha))):
            raise NumericalError("non-finite iterate", iteration=m)
        q = _pad_add(q, s, gamma)[:keep]
        p = np.concatenate([[1.0], -q])[:keep]

        alphas.append(alpha)
        res = weighted_norm(r, G, l)
        res_norms.append(res)
        q0.append(float(q[0]))
        if track:
            polys.append(q.copy())
        dirs.append(d)
        zdirs.append(powers[l + 2])
        sdirs.append(s)

        if monitor is not None and monitor(m, alpha, r):
            return finish(STOP_DISCREPANCY, False)
        if res <= tol * y_norm or weighted_norm(r, G, l + 1) <= tol * grad0:
            return finish(STOP_BREAKDOWN, True)

        beta = -rescaled_dot(r, powers[l + 2])
        d = r + beta * d
        s = _pad_add(p, s, beta)[:keep]

    return finish(STOP_MAX_ITERS, False)


def residual_vector(G, fit, m):
    """Return ``y - K alpha_m``, which equals ``p_m(K) y``."""
    return G.y - G.matvec(fit.alpha(m))


def predict(fit, m, kernel, train_X, query_X):
    """Evaluate ``f_m(x) = (1/n) sum_j alpha_{m,j} k(X_j, x)`` at query points.

    ``n`` is the number of training points (labeled plus unlabeled).
    """
    alpha = fit.alpha(m)
    return expand(alpha, kernel, train_X, query_X)


def expand(alpha, kernel, train_X, query_X):
    """Evaluate the normalized kernel expansion with coefficients ``alpha``.

    ``alpha`` may be a ``(n, k)`` block, one column per expansion.
    """
    train_X = as_points(train_X)
    query_X = as_points(query_X)
    n = train_X.shape[0]
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[0] != n or alpha.ndim > 2:
        raise ContractViolation(f"{alpha.shape[0]} coefficients for {n} training points")
    F = kernel.feature_factor(train_X)
    if F is not None and F.shape[1] < n:
        return kernel.feature_factor(query_X) @ (F.T @ alpha) / n
    return kernel(query_X, train_X) @ alpha / n

