"""Exception hierarchy shared by every module.

The CLI maps these classes onto its stable exit codes, so new error kinds
should subclass one of them rather than ``Exception`` directly.
"""


class RandRobustError(Exception):
    """Base class for all library errors."""


class DomainError(RandRobustError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(RandRobustError, ValueError):
    """A problem, experiment or run configuration is inconsistent."""


class BudgetExceededError(RandRobustError, RuntimeError):
    """A combinatorial enumeration exceeded its configured term budget."""


class SamplingCapExceeded(RandRobustError, RuntimeError):
    """The indirect sampler hit its raw-draw cap before collecting enough hits."""

    def __init__(self, message, *, draws=None, hits=None):
        super().__init__(message)
        self.draws = draws
        self.hits = hits


class NumericalError(RandRobustError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


class InstabilityError(NumericalError):
    """A quantity that needs a Hurwitz state matrix was asked of an unstable one."""
