"""Exception hierarchy shared across the package."""


class KernelCGError(Exception):
    """Base class for all errors raised by kernelcg."""


class ContractViolation(KernelCGError, ValueError):
    """An argument violates a documented precondition."""


class KernelEvaluationError(KernelCGError, ArithmeticError):
    """A kernel produced a non-finite value."""


class NumericalError(KernelCGError, ArithmeticError):
    """A numerical routine failed or lost too much precision.

    Parameters
    ----------
    message : str
        Description of the failure.
    iteration : int, optional
        Iteration index at which the failure was detected, if any.
    """

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class ConfigError(KernelCGError, ValueError):
    """A configuration value is missing or out of range."""


class HypothesisViolation(ConfigError):
    """A hypothesis required by the requested construction fails."""
