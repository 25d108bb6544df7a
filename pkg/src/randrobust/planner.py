"""Minimum sample sizes for prescribed accuracy and confidence.

Every size returned here is the smallest integer satisfying its defining
inequality, checked by direct evaluation of that inequality at ``n`` and
``n - 1``; logarithms are only used to find a starting point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .orderstat import mu

__all__ = [
    "ReliabilitySpec",
    "VolumeRatio",
    "one_sided_threshold",
    "constrained_size_one_sided",
    "constrained_size_two_sided",
    "global_size_one_sided",
    "global_size_two_sided",
    "expected_trials_indirect",
    "smallest_mu_size",
]


@dataclass(frozen=True)
class ReliabilitySpec:
    """Accuracy ``1 - epsilon`` and confidence ``1 - delta``."""

    epsilon: float
    delta: float

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            value = float(getattr(self, name))
            if not 0.0 < value < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class VolumeRatio:
    """Probability mass ``rho`` of the constrained subset, ``0 < rho <= 1``."""

    rho: float

    def __post_init__(self):
        value = float(self.rho)
        if not 0.0 < value <= 1.0:
            raise DomainError(f"rho must lie in (0, 1], got {value!r}")
        object.__setattr__(self, "rho", value)

    def __float__(self):
        return self.rho


def _as_spec(spec) -> ReliabilitySpec:
    if isinstance(spec, ReliabilitySpec):
        return spec
    eps, delta = spec
    return ReliabilitySpec(eps, delta)


def _as_rho(rho) -> float:
    return rho.rho if isinstance(rho, VolumeRatio) else VolumeRatio(rho).rho


def _fails(n: int, e: float, delta: float) -> bool:
    return (1.0 - e) ** n > delta


def one_sided_threshold(e: float, delta: float) -> float:
    """Real-valued bound ``ln(1/delta) / ln(1/(1-e))``."""
    return math.log(1.0 / delta) / -math.log1p(-e)


def _smallest_power_size(e: float, delta: float) -> int:
    n = max(1, math.ceil(one_sided_threshold(e, delta)))
    while _fails(n, e, delta):
        n += 1
    while n > 1 and not _fails(n - 1, e, delta):
        n -= 1
    return n


def smallest_mu_size(e: float, delta: float) -> int:
    """``min{n >= 2 : mu(n, e) <= delta}``.

    ``mu`` is strictly decreasing, so exponential bracketing followed by
    bisection is exact; a short linear sweep re-checks the boundary.
    """
    lo, hi = 1, 2
    while mu(hi, e) > delta:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mu(mid, e) <= delta:
            hi = mid
        else:
            lo = mid
    n = hi
    for cand in range(max(2, n - 2), n + 3):
        if mu(cand, e) <= delta:
            n = cand
            break
    return n


def constrained_size_one_sided(spec) -> int:
    """Constrained sample size for estimating a minimum or a maximum alone.

    Smallest ``N_c`` with ``(1 - eps)^N_c <= delta``.

    >>> constrained_size_one_sided(ReliabilitySpec(0.05, 0.05))
    59
    """
    spec = _as_spec(spec)
    return _smallest_power_size(spec.epsilon, spec.delta)


def constrained_size_two_sided(spec) -> int:
    """Constrained sample size for estimating the range ``[min, max]``."""
    spec = _as_spec(spec)
    return smallest_mu_size(spec.epsilon, spec.delta)


def global_size_one_sided(spec, rho) -> int:
    """Global sample size (direct approach) for a minimum or a maximum.

    Smallest ``N`` with ``(1 - rho*eps)^N <= delta``.
    """
    spec = _as_spec(spec)
    return _smallest_power_size(spec.epsilon * _as_rho(rho), spec.delta)


def global_size_two_sided(spec, rho) -> int:
    """Global sample size (direct approach) for the range."""
    spec = _as_spec(spec)
    return smallest_mu_size(spec.epsilon * _as_rho(rho), spec.delta)


def expected_trials_indirect(n_c: int, rho) -> float:
    """Mean number of raw draws, ``n_c / rho``, consumed by the indirect sampler."""
    if isinstance(n_c, bool) or not isinstance(n_c, int) or n_c < 1:
        raise DomainError(f"n_c must be a positive integer, got {n_c!r}")
    return n_c / _as_rho(rho)
