"""Exact distribution theory for (constrained) order statistics.

Everything here is a pure function of its arguments. Probabilities are plain
64-bit floats; binomial coefficients come from :func:`math.comb` (exact
integers) for small sample sizes and from log-gamma above that.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import BudgetExceededError, DomainError, NumericalError

__all__ = [
    "IndexTuple",
    "ThresholdVector",
    "TestDistribution",
    "confidence_v",
    "mu",
    "joint_uniform_cdf",
    "generalized_inverse_tau",
    "exact_constrained_cdf",
    "DEFAULT_TERM_BUDGET",
]

DEFAULT_TERM_BUDGET = 10**7

# Binomial sums are exact and cheap up to here; beyond it the continued
# fraction is used so large coefficients never overflow.
_SMALL_N = 60
_CF_MAX_ITER = 20000
_CF_EPS = 1e-17
_CF_TINY = 1e-300
MASS_TOL = 1e-12


def _as_int(value, name):
    try:
        return operator.index(value)
    except TypeError:
        raise DomainError(f"{name} must be an integer, got {value!r}") from None


def _check_open_unit(value, name):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
    return value


# ---------------------------------------------------------------------------
# Scalar special functions
# ---------------------------------------------------------------------------


def _binomial_tail(n, i, eps):
    """sum_{j < i} C(n, j) eps^j (1-eps)^(n-j), summed over the shorter side."""
    q = 1.0 - eps
    if i <= n + 1 - i:
        return math.fsum(math.comb(n, j) * eps**j * q ** (n - j) for j in range(i))
    upper = math.fsum(math.comb(n, j) * eps**j * q ** (n - j) for j in range(i, n + 1))
    return 1.0 - upper


def _betacf(a, b, x):
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0`` and ``x`` in [0, 1]."""
    if a <= 0 or b <= 0:
        raise DomainError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def confidence_v(n_c: int, i: int, eps: float) -> float:
    """Upper-tail mass beyond ``eps`` of the ``i``-th of ``n_c`` uniform order statistics.

    Equals ``integral_eps^1 n_c!/((i-1)!(n_c-i)!) x^(i-1) (1-x)^(n_c-i) dx``,
    i.e. ``Pr{Beta(i, n_c - i + 1) > eps}``, which is also the binomial sum
    ``sum_{j=0}^{i-1} C(n_c, j) eps^j (1-eps)^(n_c-j)``.

    Parameters
    ----------
    n_c : int
        Number of observations, at least 1.
    i : int
        Rank of the order statistic, ``1 <= i <= n_c``.
    eps : float
        Accuracy level in the open interval (0, 1).

    Returns
    -------
    float
        Probability in [0, 1], absolute accuracy better than 1e-12.

    Raises
    ------
    DomainError
        If ``i`` is out of range or ``eps`` is outside (0, 1).
    """
    n_c = _as_int(n_c, "n_c")
    i = _as_int(i, "i")
    if n_c < 1:
        raise DomainError(f"n_c must be >= 1, got {n_c}")
    if not 1 <= i <= n_c:
        raise DomainError(f"i must satisfy 1 <= i <= n_c={n_c}, got {i}")
    eps = _check_open_unit(eps, "eps")
    if n_c <= _SMALL_N:
        value = _binomial_tail(n_c, i, eps)
    else:
        value = regularized_incomplete_beta(n_c - i + 1, i, 1.0 - eps)
    return min(1.0, max(0.0, value))


def mu(n: int, eps_eff: float) -> float:
    """Two-sided failure probability ``(1-e)^(n-1) * (1 + (n-1) e)``.

    Pass ``eps`` for the constrained sample size and ``eps * rho`` for the
    global one. ``mu(1, e) == 1`` and the sequence is strictly decreasing in
    ``n``.
    """
    n = _as_int(n, "n")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    e = _check_open_unit(eps_eff, "eps_eff")
    if n == 1:
        return 1.0
    log_val = (n - 1) * math.log1p(-e) + math.log1p((n - 1) * e)
    return math.exp(log_val)


# ---------------------------------------------------------------------------
# Index tuples and thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexTuple:
    """Ranks ``1 <= i_1 < ... < i_k <= N`` of the order statistics involved."""

    indices: tuple[int, ...]
    sample_size: int

    def __post_init__(self):
        indices = tuple(_as_int(v, "index") for v in self.indices)
        n = _as_int(self.sample_size, "sample_size")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "sample_size", n)
        if not indices:
            raise DomainError("at least one index is required")
        if n < 1:
            raise DomainError(f"sample_size must be >= 1, got {n}")
        if indices[0] < 1 or indices[-1] > n:
            raise DomainError(f"indices must lie in [1, {n}], got {indices}")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DomainError(f"indices must be strictly increasing, got {indices}")

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ThresholdVector:
    """Nondecreasing thresholds ``0 <= t_1 <= ... <= t_k <= 1``."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise DomainError("at least one threshold is required")
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise DomainError(f"thresholds must lie in [0, 1], got {values}")
        if any(b < a for a, b in zip(values, values[1:])):
            raise DomainError(f"thresholds must be nondecreasing, got {values}")

    def __len__(self):
        return len(self.values)


def _coerce_thresholds(t) -> ThresholdVector:
    if isinstance(t, ThresholdVector):
        return t
    if np.isscalar(t):
        t = (t,)
    return ThresholdVector(tuple(t))


def _drop_redundant(indices: Sequence[int], thresholds: Sequence[float]):
    # With t_s == t_{s+1} the earlier constraint is implied by the later one.
    keep_i, keep_t = [], []
    for s, (i, t) in enumerate(zip(indices, thresholds)):
        if s + 1 < len(thresholds) and thresholds[s + 1] == t:
            continue
        keep_i.append(i)
        keep_t.append(t)
    return keep_i, keep_t


def joint_uniform_cdf(idx: IndexTuple, t, *, term_budget: int = DEFAULT_TERM_BUDGET) -> float:
    """``Pr{U_(i_1) <= t_1, ..., U_(i_k) <= t_k}`` for ``N`` i.i.d. uniforms.

    The probability is the sum over occupancy vectors ``(j_1, ..., j_k)``,
    ``j_s`` being the number of samples in ``(t_{s-1}, t_s]``, restricted to
    ``i_s <= j_1 + ... + j_s``. Vectors are enumerated depth-first; branches
    whose interval is empty or whose partial sum cannot reach the next rank
    are pruned.

    Tied thresholds are allowed: the constraint with the smaller rank is
    redundant and is dropped.

    Raises
    ------
    DomainError
        If the thresholds are not nondecreasing or lengths disagree.
    BudgetExceededError
        If more than ``term_budget`` terms would be visited.
    """
    tv = _coerce_thresholds(t)
    if len(tv) != idx.k:
        raise DomainError(f"got {len(tv)} thresholds for {idx.k} indices")
    n = idx.sample_size
    ranks, ts = _drop_redundant(idx.indices, tv.values)
    k = len(ranks)
    diffs = [ts[0]] + [ts[s] - ts[s - 1] for s in range(1, k)]
    tail = 1.0 - ts[-1]

    visited = 0
    parts: list[float] = []

    def walk(s, cum, weight):
        nonlocal visited
        if s == k:
            parts.append(weight * tail ** (n - cum))
            return
        lo = max(0, ranks[s] - cum)
        hi = n - cum if diffs[s] > 0.0 else 0
        if lo > hi:
            return
        rest = n - cum
        for j in range(lo, hi + 1):
            visited += 1
            if visited > term_budget:
                raise BudgetExceededError(
                    f"joint_uniform_cdf exceeded its budget of {term_budget} terms "
                    f"(N={n}, k={k})"
                )
            walk(s + 1, cum + j, weight * math.comb(rest, j) * diffs[s] ** j)

    walk(0, 0, 1.0)
    return min(1.0, max(0.0, math.fsum(parts)))


# ---------------------------------------------------------------------------
# Test distributions with atoms and plateaus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestDistribution:
    """Finite mixture of uniform pieces and point masses on the real line.

    ``segments`` holds ``(lo, hi, mass)`` triples, each contributing a linear
    CDF ramp of height ``mass`` over ``[lo, hi]``; ``atoms`` holds
    ``(location, mass)`` pairs. Gaps between the pieces are plateaus of the
    CDF. Masses must sum to one within ``MASS_TOL``.
    """

    __test__ = False  # not a pytest class

    segments: tuple[tuple[float, float, float], ...] = ()
    atoms: tuple[tuple[float, float], ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(m)) for a, b, m in self.segments)
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "atoms", atoms)
        if not segs and not atoms:
            raise DomainError("a test distribution needs at least one segment or atom")
        for a, b, m in segs:
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise DomainError(f"segment [{a}, {b}] must be finite with lo < hi")
            if not m > 0.0:
                raise DomainError(f"segment mass must be positive, got {m}")
        for x, m in atoms:
            if not math.isfinite(x):
                raise DomainError(f"atom location must be finite, got {x}")
            if not m > 0.0:
                raise DomainError(f"atom mass must be positive, got {m}")
        total = math.fsum([m for *_, m in segs] + [m for _, m in atoms])
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"total mass must be 1, got {total!r}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "TestDistribution":
        return cls(segments=((lo, hi, 1.0),), name="uniform")

    @classmethod
    def point_mass(cls, x: float = 0.0) -> "TestDistribution":
        return cls(atoms=((x, 1.0),), name="point-mass")

    @classmethod
    def from_dict(cls, data: dict) -> "TestDistribution":
        unknown = set(data) - {"segments", "atoms", "name"}
        if unknown:
            raise DomainError(f"unknown test-distribution keys: {sorted(unknown)}")
        return cls(
            segments=tuple(tuple(s) for s in data.get("segments", ())),
            atoms=tuple(tuple(a) for a in data.get("atoms", ())),
            name=data.get("name", ""),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "segments": [list(s) for s in self.segments],
            "atoms": [list(a) for a in self.atoms],
        }

    def reflected(self) -> "TestDistribution":
        """Distribution of ``-X``."""
        return TestDistribution(
            segments=tuple((-b, -a, m) for a, b, m in self.segments),
            atoms=tuple((-x, m) for x, m in self.atoms),
            name=f"reflected({self.name})" if self.name else "reflected",
        )

    # -- evaluation ---------------------------------------------------------

    @cached_property
    def _arrays(self):
        seg = np.array(self.segments, dtype=float).reshape(-1, 3)
        atm = np.array(self.atoms, dtype=float).reshape(-1, 2)
        return seg[:, 0], seg[:, 1], seg[:, 2], atm[:, 0], atm[:, 1]

    def _eval(self, x, left: bool):
        a, b, sm, loc, am = self._arrays
        xa = np.asarray(x, dtype=float)
        flat = xa.reshape(-1, 1)
        val = np.clip((flat - a) / (b - a), 0.0, 1.0) @ sm
        hit = (flat > loc) if left else (flat >= loc)
        val = val + hit.astype(float) @ am
        val = np.minimum(val, 1.0).reshape(xa.shape)
        return float(val) if val.ndim == 0 else val

    def cdf(self, x):
        """Right-continuous CDF ``Pr{X <= x}``."""
        return self._eval(x, left=False)

    def cdf_left(self, x):
        """Left limit ``Pr{X < x}``."""
        return self._eval(x, left=True)

    @cached_property
    def _knots(self):
        xs = sorted({p for a, b, _ in self.segments for p in (a, b)} | {x for x, _ in self.atoms})
        xs = np.array(xs)
        fr = np.atleast_1d(self.cdf(xs)).astype(float)
        fl = np.atleast_1d(self.cdf_left(xs)).astype(float)
        fr[-1] = 1.0
        slopes = np.zeros(len(xs))
        for a, b, m in self.segments:
            covered = (xs >= a) & (xs < b)
            slopes[covered] += m / (b - a)
        return xs, fr, fl, slopes

    @property
    def is_continuous(self) -> bool:
        return not self.atoms

    @property
    def support(self) -> tuple[float, float]:
        xs = self._knots[0]
        return float(xs[0]), float(xs[-1])

    @property
    def plateaus(self) -> list[tuple[float, float, float]]:
        """Open intervals inside the support where the CDF is flat, with its level."""
        xs, fr, _, slopes = self._knots
        out = []
        for k in range(len(xs) - 1):
            if slopes[k] == 0.0:
                out.append((float(xs[k]), float(xs[k + 1]), float(fr[k])))
        return out

    def quantile(self, p):
        """Generalized inverse ``inf{x : F(x) >= p}`` for ``p`` in [0, 1]."""
        xs, fr, fl, slopes = self._knots
        pa = np.asarray(p, dtype=float)
        flat = pa.reshape(-1)
        kk = np.searchsorted(fr, flat, side="left")
        kk = np.minimum(kk, len(xs) - 1)
        out = xs[kk].copy()
        inner = (kk > 0) & (fl[kk] >= flat)
        if np.any(inner):
            j = kk[inner] - 1
            step = (flat[inner] - fr[j]) / slopes[j]
            out[inner] = np.minimum(xs[j] + step, xs[j + 1])
        out = out.reshape(pa.shape)
        return float(out) if out.ndim == 0 else out

    def level_values(self, t: float) -> float:
        """``sup{F(x) : F(x) < t}``; see :func:`generalized_inverse_tau`."""
        xs, fr, fl, slopes = self._knots
        best = 0.0
        for k in range(len(xs)):
            if fr[k] < t:
                best = max(best, fr[k])
            if fl[k] < t:
                best = max(best, fl[k])
            if k + 1 < len(xs) and slopes[k] > 0.0 and fr[k] < t:
                best = max(best, min(fl[k + 1], t))
        return float(best)

    def attains_left(self, level: float, tol: float = 1e-12) -> bool:
        """Whether some ``x`` has ``Pr{X < x} == level``."""
        return abs(self.level_values(level) - level) <= tol

    def attains(self, level: float, tol: float = 1e-12) -> bool:
        """Whether some ``x`` has ``F(x) == level``."""
        return self.reflected().attains_left(1.0 - level, tol)


def generalized_inverse_tau(dist: TestDistribution, t: float) -> float:
    """Return ``tau = sup{F(x) : F(x) < t}`` for ``t`` in (0, 1).

    ``tau <= t`` always, with equality exactly when the level ``t`` is
    reached continuously, i.e. ``Pr{X < x*} = t`` for some ``x*``. Inside a
    jump of ``F`` the value is the height of the CDF just below the jump.
    """
    t = _check_open_unit(t, "t")
    return dist.level_values(t)


def exact_constrained_cdf(
    idx: IndexTuple, t, dist: TestDistribution, *, term_budget: int = DEFAULT_TERM_BUDGET
) -> float:
    """``Pr{F(u_(i_1)) < t_1, ..., F(u_(i_k)) < t_k}`` when ``u`` follows ``dist``.

    No continuity is assumed: each threshold is replaced by its generalized
    inverse level ``tau_s`` and the uniform joint CDF is evaluated there. The
    result never exceeds ``joint_uniform_cdf(idx, t)`` and equals it when
    every ``t_s`` is attained continuously.

    """
    tv = _coerce_thresholds(t)
    if len(tv) != idx.k:
        raise DomainError(f"got {len(tv)} thresholds for {idx.k} indices")
    taus = [dist.level_values(v) for v in tv.values]
    return joint_uniform_cdf(idx, ThresholdVector(tuple(taus)), term_budget=term_budget)

