"""Discrepancy-principle early stopping for kernel CG.

The stopping index is the first ``m`` whose training residual, measured
in the ``K``-norm, drops below a threshold ``Lambda_m``:

* rule A (adaptive): ``Lambda_m`` grows with ``|alpha_m|_K`` and needs no
  knowledge of the target's regularity; the chosen index is stepped back by
  one when ``q_m(0)`` is too large;
* rule B (fixed): a constant threshold calibrated with the source exponent
  ``r`` and intrinsic-dimension exponent ``s``;
* fixed iteration: plumbing that always returns a given ``m``.

All logarithms are natural.
"""

import math
import warnings
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .cg import residual_vector
from .kernels import weighted_norm

__all__ = [
    "RULE_A",
    "RULE_B",
    "RULE_FIXED",
    "StoppingConfig",
    "StopDecision",
    "discrepancy",
    "rule_a_threshold",
    "threshold_rule_A",
    "threshold_rule_B",
    "modification_threshold",
    "stop",
    "make_monitor",
]

RULE_A = "A_adaptive"
RULE_B = "B_fixed"
RULE_FIXED = "fixed_iteration"
_MODES = ("nemirovskii", "paper_literal")


@dataclass(frozen=True)
class StoppingConfig:
    """Rule choice and constants.

    Parameters
    ----------
    rule : {"A_adaptive", "B_fixed", "fixed_iteration"}
    tau : float
        Rule A multiplier, ``> 1``.
    tau_prime : float
        Rule B multiplier, ``> 3/2``.
    gamma : float
        Confidence parameter in ``(0, 1)``.
    M : float
        Response / noise scale.
    kappa : float, optional
        Kernel bound; taken from the Gram system when omitted.
    D, r, s : float, optional
        Intrinsic-dimension constant, source exponent and intrinsic-dimension
        exponent; required by rule B.
    rho : float, optional
        Source norm bound; rule B uses ``max(M, rho)`` when ``semi_supervised``.
    semi_supervised : bool
    eta_over_delta_mode : {"nemirovskii", "paper_literal"}
        Rule A step-back threshold on ``q_m(0)``: ``eta / delta`` with
        ``eta = 1/(2 tau)``, or ``delta`` itself, where
        ``delta = 4 kappa sqrt(log(2/gamma) / n)``.
    m : int, optional
        Iteration returned by the ``fixed_iteration`` rule.
    """

    rule: str = RULE_A
    tau: float = 2.0
    tau_prime: float = 2.0
    gamma: float = 0.1
    M: float = 1.0
    kappa: float = None
    D: float = None
    r: float = None
    s: float = None
    rho: float = None
    semi_supervised: bool = False
    eta_over_delta_mode: str = "nemirovskii"
    m: int = None

    def __post_init__(self):
        if self.rule not in (RULE_A, RULE_B, RULE_FIXED):
            raise ConfigError(f"rule: unknown stopping rule {self.rule!r}")
        if self.rule == RULE_FIXED:
            if self.m is None or self.m < 0:
                raise ConfigError("m: fixed_iteration needs a non-negative iteration index")
            return
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma: must lie in (0, 1), got {self.gamma}")
        if not self.M >= 0:
            raise ConfigError(f"M: must be non-negative, got {self.M}")
        if self.kappa is not None and not self.kappa > 0:
            raise ConfigError(f"kappa: must be positive, got {self.kappa}")
        if self.eta_over_delta_mode not in _MODES:
            raise ConfigError(f"eta_over_delta_mode: must be one of {_MODES}")
        if self.rule == RULE_A and not self.tau > 1.0:
            raise ConfigError(f"tau: must exceed 1, got {self.tau}")
        if self.rule == RULE_B:
            if not self.tau_prime > 1.5:
                raise ConfigError(f"tau_prime: must exceed 3/2, got {self.tau_prime}")
            for name in ("D", "r", "s"):
                if getattr(self, name) is None:
                    raise ConfigError(f"{name}: required by rule B")
            if not self.D >= 1:
                raise ConfigError(f"D: must be >= 1, got {self.D}")
            if not self.r >= 0:
                raise ConfigError(f"r: must be >= 0, got {self.r}")
            if not 0 < self.s <= 1:
                raise ConfigError(f"s: must lie in (0, 1], got {self.s}")
            if self.semi_supervised and self.rho is None:
                raise ConfigError("rho: required by semi-supervised rule B")


@dataclass(frozen=True)
class StopDecision:
    """Outcome of :func:`stop`.

    Attributes
    ----------
    m_hat : int
        First iteration whose discrepancy is below its threshold.
    m_tilde : int
        Index actually used (after the rule A step-back).
    threshold_trace : list of (m, threshold, discrepancy)
    triggered : bool
        False when no iterate met the threshold; ``m_hat`` is then the last one.
    """

    m_hat: int
    m_tilde: int
    threshold_trace: list = field(default_factory=list)
    triggered: bool = True

    @property
    def threshold_at_stop(self):
        return _trace_at(self.threshold_trace, self.m_hat, 1)

    @property
    def discrepancy_at_stop(self):
        return _trace_at(self.threshold_trace, self.m_hat, 2)


def _trace_at(trace, m, k):
    for row in trace:
        if row[0] == m:
            return row[k]
    return math.nan


def discrepancy(G, fit, m):
    """``|y - K alpha_m|_K``, the residual of the fitted values in the ``K``-norm."""
    return weighted_norm(residual_vector(G, fit, m), G, 1)


def _kappa(cfg, G):
    return cfg.kappa if cfg.kappa is not None else G.kappa


def rule_a_threshold(alpha_norm, n, cfg, kappa):
    """``4 tau sqrt(kappa log(2/gamma) / n) (sqrt(kappa) |alpha|_K + M sqrt(log(2/gamma)))``."""
    if not 0.0 < cfg.gamma < 1.0:
        raise ConfigError(f"gamma: must lie in (0, 1), got {cfg.gamma}")
    lg = math.log(2.0 / cfg.gamma)
    return (
        4.0 * cfg.tau * math.sqrt(kappa * lg / n)
        * (math.sqrt(kappa) * alpha_norm + cfg.M * math.sqrt(lg))
    )


def threshold_rule_A(m, fit, cfg, G):
    """Rule A threshold at iteration ``m`` of ``fit``."""
    alpha_norm = weighted_norm(fit.alpha(m), G, 1)
    return rule_a_threshold(alpha_norm, G.n_labeled, cfg, _kappa(cfg, G))


def threshold_rule_B(cfg, n, kappa=None):
    """``tau' M sqrt(kappa) ((4 D / sqrt(n)) log(6/gamma))^((2r+1)/(2r+s))``.

    ``M`` becomes ``max(M, rho)`` in semi-supervised mode.
    """
    for name in ("D", "r", "s"):
        if getattr(cfg, name) is None:
            raise ConfigError(f"{name}: required by rule B")
    kappa = cfg.kappa if kappa is None else kappa
    if kappa is None:
        raise ConfigError("kappa: required by rule B")
    M = max(cfg.M, cfg.rho) if cfg.semi_supervised else cfg.M
    exponent = (2 * cfg.r + 1) / (2 * cfg.r + cfg.s)
    base = 4.0 * cfg.D / math.sqrt(n) * math.log(6.0 / cfg.gamma)
    return cfg.tau_prime * M * math.sqrt(kappa) * base**exponent


def modification_threshold(cfg, n, kappa):
    """Value of ``q_m(0)`` at or above which rule A steps back one iteration."""
    delta = 4.0 * kappa * math.sqrt(math.log(2.0 / cfg.gamma) / n)
    if cfg.eta_over_delta_mode == "paper_literal":
        return delta
    eta = 1.0 / (2.0 * cfg.tau)
    return eta / delta


def _threshold_fn(G, cfg):
    kappa = _kappa(cfg, G)
    n = G.n_labeled
    if cfg.rule == RULE_A:
        return lambda alpha: rule_a_threshold(weighted_norm(alpha, G, 1), n, cfg, kappa)
    if cfg.rule == RULE_B:
        value = threshold_rule_B(cfg, n, kappa)
        return lambda alpha: value
    return None


def _met(disc, lam):
    # an exact fit has nothing left to stop for, even against a zero threshold
    return disc < lam or disc == 0.0


def make_monitor(G, cfg):
    """Callback for :func:`kernelcg.cg.cg_run` that ends CG once the rule fires.

    The resulting fit ends exactly at ``m_hat``, which is all :func:`stop`
    needs (the rule A step-back only looks one iteration behind).
    """
    if cfg.rule == RULE_FIXED:
        return lambda m, alpha, r: m >= cfg.m
    threshold = _threshold_fn(G, cfg)

    def monitor(m, alpha, r):
        disc = weighted_norm(G.y - G.matvec(alpha), G, 1)
        return _met(disc, threshold(alpha))

    return monitor


def stop(G, fit, cfg):
    """Apply the stopping rule to a completed CG run.

    Returns
    -------
    StopDecision
        When no iterate meets its threshold the last iterate is used,
        ``triggered`` is False and a ``RuntimeWarning`` is issued.
    """
    last = fit.stop_index
    if cfg.rule == RULE_FIXED:
        if cfg.m > last:
            warnings.warn(
                f"fixed iteration {cfg.m} unavailable, CG stopped at {last}",
                RuntimeWarning,
                stacklevel=2,
            )
            return StopDecision(m_hat=last, m_tilde=last, triggered=False)
        return StopDecision(m_hat=cfg.m, m_tilde=cfg.m)

    threshold = _threshold_fn(G, cfg)
    trace = []
    m_hat = None
    for m in range(last + 1):
        disc = discrepancy(G, fit, m)
        lam = threshold(fit.alphas[m])
        trace.append((m, lam, disc))
        if _met(disc, lam):
            m_hat = m
            break
    triggered = m_hat is not None
    if not triggered:
        m_hat = last
        warnings.warn(
            f"discrepancy threshold never met within {last} iterations; using the last iterate",
            RuntimeWarning,
            stacklevel=2,
        )
    m_tilde = m_hat
    if cfg.rule == RULE_A and triggered and m_hat > 0:
        limit = modification_threshold(cfg, G.n_labeled, _kappa(cfg, G))
        if fit.q_at_zero[m_hat] >= limit:
            m_tilde = m_hat - 1
    return StopDecision(m_hat=m_hat, m_tilde=m_tilde, threshold_trace=trace, triggered=triggered)
