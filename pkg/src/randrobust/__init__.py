"""Randomized constrained robustness analysis and synthesis."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceededError,
    ConfigurationError,
    DomainError,
    InstabilityError,
    NumericalError,
    RandRobustError,
    SamplingCapExceeded,
)
from .orderstat import (
    IndexTuple,
    TestDistribution,
    ThresholdVector,
    confidence_v,
    exact_constrained_cdf,
    generalized_inverse_tau,
    joint_uniform_cdf,
    mu,
)
from .planner import (
    ReliabilitySpec,
    VolumeRatio,
    constrained_size_one_sided,
    constrained_size_two_sided,
    expected_trials_indirect,
    global_size_one_sided,
    global_size_two_sided,
)

__all__ = [
    "BudgetExceededError",
    "ConfigurationError",
    "DomainError",
    "InstabilityError",
    "NumericalError",
    "RandRobustError",
    "SamplingCapExceeded",
    "IndexTuple",
    "TestDistribution",
    "ThresholdVector",
    "confidence_v",
    "exact_constrained_cdf",
    "generalized_inverse_tau",
    "joint_uniform_cdf",
    "mu",
    "ReliabilitySpec",
    "VolumeRatio",
    "constrained_size_one_sided",
    "constrained_size_two_sided",
    "expected_trials_indirect",
    "global_size_one_sided",
    "global_size_two_sided",
]
