"""scikit-learn compatible estimators."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .baselines import FilterSpec, filter_fit
from .cg import CGConfig, cg_run, expand
from .kernels import (
    Dataset,
    GaussianKernel,
    KernelModel,
    LinearKernel,
    assemble_gram,
)
from .stopping import RULE_FIXED, StoppingConfig, make_monitor, stop

__all__ = ["KernelCGRegressor", "SpectralFilterRegressor", "resolve_kernel"]


def resolve_kernel(kernel, bandwidth=1.0, radius=None, X=None):
    """Turn a kernel name or instance into a :class:`KernelModel`.

    ``"linear"`` without an explicit ``radius`` declares the smallest ball
    containing ``X``.
    """
    if isinstance(kernel, KernelModel):
        return kernel
    if kernel == "gaussian":
        return GaussianKernel(bandwidth=bandwidth)
    if kernel == "linear":
        if radius is None:
            radius = float(np.sqrt(np.max(np.sum(X**2, axis=1)))) if X is not None else 1.0
            radius = max(radius, np.finfo(float).tiny)
        return LinearKernel(radius=radius)
    raise ValueError(f"unknown kernel {kernel!r}; use 'gaussian', 'linear' or a KernelModel")


class KernelCGRegressor(RegressorMixin, BaseEstimator):
    """Kernel conjugate gradient regression regularized by early stopping.

    The estimator is ``f(x) = (1/n) sum_j alpha_j k(X_j, x)`` with ``alpha``
    the CG iterate chosen by a discrepancy-principle rule.

    Parameters
    ----------
    kernel : {"gaussian", "linear"} or KernelModel, default="gaussian"
    bandwidth : float, default=1.0
        Gaussian kernel bandwidth.
    radius : float, optional
        Domain radius declared for the linear kernel.
    l : int, default=1
        Residual norm exponent; 1 is kernel CG, 0 is kernel PLS.
    max_iter : int, optional
        CG iteration cap (default ``min(n, 200)``).
    stopping : {"A_adaptive", "B_fixed", "fixed_iteration"}, default="A_adaptive"
    n_iter : int, optional
        Iteration used by ``stopping="fixed_iteration"``.
    tau, tau_prime, gamma, M, D, r, s, rho, eta_over_delta_mode
        Stopping-rule constants, see :class:`kernelcg.stopping.StoppingConfig`.
    reorthogonalize : bool, optional
    early_exit : bool, default=True
        End CG as soon as the rule fires instead of running to ``max_iter``.

    Attributes
    ----------
    dual_coef_ : ndarray of shape (n_train,)
    n_iter_ : int
        CG iterations run.
    selected_iter_ : int
        Iteration whose coefficients are used.
    cg_fit_ : CGFit
    stop_decision_ : StopDecision
    kernel_ : KernelModel
    X_fit_ : ndarray
        Training points, labeled first then unlabeled.
    """

    def __init__(
        self,
        kernel="gaussian",
        *,
        bandwidth=1.0,
        radius=None,
        l=1,
        max_iter=None,
        stopping="A_adaptive",
        n_iter=None,
        tau=2.0,
        tau_prime=2.0,
        gamma=0.1,
        M=1.0,
        D=None,
        r=None,
        s=None,
        rho=None,
        eta_over_delta_mode="nemirovskii",
        reorthogonalize=None,
        early_exit=True,
    ):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.radius = radius
        self.l = l
        self.max_iter = max_iter
        self.stopping = stopping
        self.n_iter = n_iter
        self.tau = tau
        self.tau_prime = tau_prime
        self.gamma = gamma
        self.M = M
        self.D = D
        self.r = r
        self.s = s
        self.rho = rho
        self.eta_over_delta_mode = eta_over_delta_mode
        self.reorthogonalize = reorthogonalize
        self.early_exit = early_exit

    def _stopping_config(self, semi_supervised):
        return StoppingConfig(
            rule=self.stopping,
            tau=self.tau,
            tau_prime=self.tau_prime,
            gamma=self.gamma,
            M=self.M,
            D=self.D,
            r=self.r,
            s=self.s,
            rho=self.rho,
            semi_supervised=semi_supervised,
            eta_over_delta_mode=self.eta_over_delta_mode,
            m=self.n_iter if self.stopping == RULE_FIXED else None,
        )

    def fit(self, X, y, X_unlabeled=None):
        """Fit on labeled data, optionally augmented with unlabeled points.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : array-like of shape (n_samples,)
        X_unlabeled : array-like of shape (n_unlabeled, n_features), optional
            Extra covariates; the response becomes the zero-padded,
            ``n_total / n``-rescaled vector.
        """
        X, y = validate_data(self, X, y, y_numeric=True)
        X_all = X
        if X_unlabeled is not None:
            X_unlabeled = validate_data(self, X_unlabeled, reset=False)
            X_all = np.vstack([X, X_unlabeled])
        semi = X_unlabeled is not None and len(X_unlabeled) > 0
        stop_cfg = self._stopping_config(semi)
        if self.stopping == RULE_FIXED and self.n_iter > len(X_all):
            raise ValueError(f"n_iter={self.n_iter} exceeds the number of training points")

        self.kernel_ = resolve_kernel(self.kernel, self.bandwidth, self.radius, X_all)
        G = assemble_gram(self.kernel_, Dataset(X=X_all, Y=y))
        cfg = CGConfig(l=self.l, max_iters=self.max_iter, reorthogonalize=self.reorthogonalize)
        monitor = make_monitor(G, stop_cfg) if self.early_exit else None
        self.cg_fit_ = cg_run(G, cfg, monitor=monitor)
        self.stop_decision_ = stop(G, self.cg_fit_, stop_cfg)
        self.n_iter_ = self.cg_fit_.stop_index
        self.selected_iter_ = self.stop_decision_.m_tilde
        self.dual_coef_ = self.cg_fit_.alpha(self.selected_iter_)
        self.X_fit_ = X_all
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = validate_data(self, X, reset=False)
        return expand(self.dual_coef_, self.kernel_, self.X_fit_, X)

    def staged_predict(self, X):
        """Yield predictions of every computed CG iterate, ``m = 0, 1, ...``."""
        check_is_fitted(self, "dual_coef_")
        X = validate_data(self, X, reset=False)
        for alpha in self.cg_fit_.alphas:
            yield expand(alpha, self.kernel_, self.X_fit_, X)


class SpectralFilterRegressor(RegressorMixin, BaseEstimator):
    """Kernel regression with a linear spectral filter ``alpha = F(K_n) y``.

    Parameters
    ----------
    kernel : {"gaussian", "linear"} or KernelModel, default="gaussian"
    bandwidth : float, default=1.0
    radius : float, optional
    family : {"tikhonov", "spectral_cutoff", "landweber"}, default="tikhonov"
    param : float, default=1e-3
        ``lambda`` or, for Landweber, the iteration count.
    step : float, optional
        Landweber step size.
    """

    def __init__(self, kernel="gaussian", *, bandwidth=1.0, radius=None,
                 family="tikhonov", param=1e-3, step=None):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.radius = radius
        self.family = family
        self.param = param
        self.step = step

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        self.kernel_ = resolve_kernel(self.kernel, self.bandwidth, self.radius, X)
        G = assemble_gram(self.kernel_, Dataset(X=X, Y=y))
        self.dual_coef_ = filter_fit(G, FilterSpec(self.family, self.param, self.step))
        self.X_fit_ = X
        return self

    def predict(self, X):
        check_is_fitted(self, "dual_coef_")
        X = validate_data(self, X, reset=False)
        return expand(self.dual_coef_, self.kernel_, self.X_fit_, X)
