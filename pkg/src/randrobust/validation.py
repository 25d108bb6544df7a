"""Empirical coverage harness.

Each check runs many independently seeded sampler runs on a problem whose
index distribution is known in closed form, counts how often the coverage
event holds, and compares that frequency with the exact or bounding
probability from :mod:`randrobust.orderstat`.

Acceptance bands are ``3 * max(se_empirical, se_predicted)``. The second
term keeps the band from collapsing to zero width when the empirical rate
is exactly 0 or 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import stats

from . import planner
from .engine import ConstrainedProblem, Coordinate, ParameterSpace, sample_direct, sample_indirect
from .errors import ConfigurationError
from .orderstat import IndexTuple, TestDistribution, confidence_v, exact_constrained_cdf, mu
from .planner import ReliabilitySpec

__all__ = [
    "CoverageExperiment",
    "CoverageResult",
    "IndependenceResult",
    "attainment_cases",
    "distribution_problem",
    "run_coverage",
    "exact_coverage",
    "verify_tolerance_interval",
    "verify_size_sharpness",
    "check_stopping_independence",
    "check_expected_trials",
    "standard_suite",
    "MIN_TRIALS",
]

MIN_TRIALS = 100
STATISTICS = ("min_side", "max_side", "range", "order_m")
KS_ALPHA = 0.01


def trial_seed(seed: int, trial: int) -> int:
    """Independent 64-bit seed for trial ``trial`` of an experiment."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    return int(ss.generate_state(1, np.uint64)[0])


def _se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def attainment_cases(eps: float = 0.05) -> dict[str, TestDistribution]:
    """Test distributions for the five attainment cases A-E at accuracy ``eps``.

    * A: continuous; both levels attained.
    * B: ``eps`` attained, ``1 - eps`` jumped over by an atom at the top.
    * C: both levels jumped over; atoms at both ends and plateaus between.
    * D: ``1 - eps`` attained, ``eps`` jumped over by an atom at the bottom.
    * E: both attained although the CDF has an interior atom and plateaus.
    """
    if not 0.0 < eps < 0.1:
        raise ConfigurationError(f"the attainment cases are built for eps in (0, 0.1), got {eps}")
    w = 4.0 * eps
    cases = {
        "A": TestDistribution(segments=((0.0, 1.0, 1.0),), name="A"),
        "B": TestDistribution(segments=((0.0, 1.0, 1.0 - w),), atoms=((1.0, w),), name="B"),
        "C": TestDistribution(
            segments=((0.25, 0.75, 1.0 - 2 * w),), atoms=((0.0, w), (1.0, w)), name="C"
        ),
        "D": TestDistribution(segments=((0.0, 1.0, 1.0 - w),), atoms=((0.0, w),), name="D"),
        "E": TestDistribution(
            segments=((0.0, 0.4, 0.4), (0.6, 1.0, 0.4)), atoms=((0.5, 0.2),), name="E"
        ),
    }
    expected = {"A": (True, True), "B": (True, False), "C": (False, False), "D": (False, True), "E": (True, True)}
    for key, dist in cases.items():
        got = (dist.attains(eps), dist.attains_left(1.0 - eps))
        if got != expected[key]:
            raise ConfigurationError(f"case {key} does not realize its attainment pattern at eps={eps}")
    return cases


def distribution_problem(dist: TestDistribution, rho: float = 1.0) -> ConstrainedProblem:
    """Scalar problem on ``[0, 1]`` whose index over the constrained subset follows ``dist``.

    The constraint is ``q >= 1 - rho`` and the index is the quantile of
    ``dist`` at the rescaled position of ``q`` inside the subset.
    """
    rho = planner.VolumeRatio(rho).rho
    cut = 1.0 - rho

    def constraint(q):
        return q[:, 0] >= cut

    def index(q):
        return dist.quantile(np.clip((q[:, 0] - cut) / rho, 0.0, 1.0))

    return ConstrainedProblem(
        space=ParameterSpace((Coordinate(0.0, 1.0),)),
        constraint=constraint,
        index=index,
        vectorized=True,
        name=f"distribution:{dist.name or 'custom'}",
    )


@dataclass(frozen=True)
class CoverageExperiment:
    """Repeated-trial estimate of a coverage probability.

    ``dist`` is the distribution of the index over the constrained subset.
    If ``problem`` is omitted, :func:`distribution_problem` builds one with
    volume ratio ``rho``. ``sample_size`` defaults to the planner's size for
    the statistic, mode and spec.
    """

    dist: TestDistribution
    mode: str
    spec: ReliabilitySpec
    trials: int = 2000
    seed: int = 0
    statistic: str = "min_side"
    m: Optional[int] = None
    sample_size: Optional[int] = None
    rho: float = 1.0
    problem: Optional[ConstrainedProblem] = None
    label: str = ""

    def __post_init__(self):
        if self.trials < MIN_TRIALS:
            raise ConfigurationError(f"trials must be >= {MIN_TRIALS}, got {self.trials}")
        if self.mode not in ("indirect", "direct"):
            raise ConfigurationError(f"mode must be 'indirect' or 'direct', got {self.mode!r}")
        if self.statistic not in STATISTICS:
            raise ConfigurationError(f"statistic must be one of {STATISTICS}, got {self.statistic!r}")
        if self.statistic == "order_m" and (self.m is None or self.mode != "indirect"):
            raise ConfigurationError("order_m needs m and the indirect mode")
        if self.statistic == "range" and not self.dist.is_continuous:
            raise ConfigurationError("range coverage is only known for continuous distributions")
        planner.VolumeRatio(self.rho)

    def resolved_size(self) -> int:
        if self.sample_size is not None:
            return int(self.sample_size)
        two = self.statistic == "range"
        if self.mode == "indirect":
            return (planner.constrained_size_two_sided if two else planner.constrained_size_one_sided)(self.spec)
        fn = planner.global_size_two_sided if two else planner.global_size_one_sided
        return fn(self.spec, self.rho)


@dataclass
class CoverageResult:
    empirical_rate: float
    predicted_rate: float
    standard_error: float
    passed: bool
    trials: int
    band: float
    kind: str
    label: str = ""
    statistic: str = ""
    mode: str = ""
    sample_size: int = 0
    exact_rate: Optional[float] = None
    notice: str = ""

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["pass"] = rec.pop("passed")
        return rec


def _coverage_event(values: np.ndarray, dist: TestDistribution, statistic: str, eps: float, m=None) -> bool:
    n = len(values)
    if statistic in ("min_side", "order_m"):
        rank = 1 if statistic == "min_side" else m
        if n < rank:
            return False
        return bool(dist.cdf_left(values[rank - 1]) <= eps)
    if statistic == "max_side":
        if n < 1:
            return False
        return bool(dist.cdf(values[-1]) >= 1.0 - eps)
    if n < 2:
        return False
    return bool(dist.cdf(values[-1]) - dist.cdf(values[0]) >= 1.0 - eps)


def _exact_indirect(dist: TestDistribution, statistic: str, n: int, eps: float, m=None) -> float:
    if n == 0:
        return 0.0
    if statistic == "max_side":
        return 1.0 - exact_constrained_cdf(IndexTuple((n,), n), (1.0 - eps,), dist)
    rank = 1 if statistic == "min_side" else m
    if n < rank:
        return 0.0
    return 1.0 - exact_constrained_cdf(IndexTuple((n + 1 - rank,), n), (1.0 - eps,), dist.reflected())


def exact_coverage(dist, statistic, n, eps, *, mode="indirect", rho=1.0, m=None) -> float:
    """Exact coverage probability for one-sided statistics, with or without continuity.

    Lower-side events are mapped to upper-side events of the reflected
    distribution; the direct mode mixes indirect results over the binomial
    hit count.
    """
    if statistic == "range":
        raise ConfigurationError("exact range coverage is only implemented through mu for continuous laws")
    if mode == "indirect":
        return _exact_indirect(dist, statistic, n, eps, m)
    pmf = stats.binom.pmf(np.arange(n + 1), n, rho)
    return float(sum(pmf[i] * _exact_indirect(dist, statistic, i, eps, m) for i in range(1, n + 1)))


def _predicted(exp: CoverageExperiment, n: int):
    """Predicted rate and whether it is attained with equality."""
    eps = exp.spec.epsilon
    e = eps if exp.mode == "indirect" else eps * exp.rho
    if exp.statistic == "range":
        return 1.0 - mu(n, e), True
    if exp.statistic == "order_m":
        return 1.0 - confidence_v(n, exp.m, eps), exp.dist.attains(eps)
    pred = 1.0 - (1.0 - e) ** n
    if exp.statistic == "min_side":
        return pred, exp.dist.attains(eps)
    return pred, exp.dist.attains_left(1.0 - eps)


def _run_trials(exp: CoverageExperiment, n: int, event) -> float:
    problem = exp.problem or distribution_problem(exp.dist, exp.rho)
    hits = 0
    for t in range(exp.trials):
        s = trial_seed(exp.seed, t)
        if exp.mode == "indirect":
            batch = sample_indirect(problem, n, s)
        else:
            batch = sample_direct(problem, n, s)
        hits += event(batch.sorted_values)
    return hits / exp.trials


def run_coverage(exp: CoverageExperiment, *, predicted_offset: float = 0.0) -> CoverageResult:
    """Run ``exp.trials`` seeded engine runs and compare the coverage frequency.

    Equality cases pass when the empirical rate is within the band of the
    prediction. Where the attainment condition fails the prediction is only a
    lower bound: the empirical rate must not fall below it by more than the
    band and must agree with the exact rate computed from the generalized
    inverse levels.

    ``predicted_offset`` shifts the prediction; it exists so the harness can
    demonstrate that it detects a wrong prediction.
    """
    n = exp.resolved_size()
    eps = exp.spec.epsilon
    emp = _run_trials(exp, n, lambda v: _coverage_event(v, exp.dist, exp.statistic, eps, exp.m))
    pred, equality = _predicted(exp, n)
    pred = min(1.0, max(0.0, pred + predicted_offset))
    se = _se(emp, exp.trials)
    band = 3.0 * max(se, _se(pred, exp.trials))

    exact = None
    if exp.statistic != "range":
        exact = exact_coverage(exp.dist, exp.statistic, n, eps, mode=exp.mode, rho=exp.rho, m=exp.m)
    if equality:
        kind = "equality"
        passed = abs(emp - pred) <= band
    else:
        kind = "lower_bound"
        exact_band = 3.0 * max(se, _se(exact, exp.trials))
        passed = emp >= pred - band and abs(emp - exact) <= exact_band
    return CoverageResult(
        empirical_rate=emp,
        predicted_rate=pred,
        standard_error=se,
        passed=bool(passed),
        trials=exp.trials,
        band=band,
        kind=kind,
        label=exp.label,
        statistic=exp.statistic,
        mode=exp.mode,
        sample_size=n,
        exact_rate=exact,
    )


def verify_tolerance_interval(
    dist: TestDistribution,
    n_c: int,
    m: int,
    n: int,
    eps: float,
    trials: int = 2000,
    seed: int = 0,
    *,
    predicted_offset: float = 0.0,
) -> CoverageResult:
    """Coverage of the interval ``(u_(m), u_(n)]`` for a continuous distribution.

    The probability that the interval holds at least ``1 - eps`` of the mass
    is exactly ``1 - V(n_c, n_c + 1 - n + m, eps)``.
    """
    if not 1 <= m < n <= n_c:
        raise ConfigurationError(f"need 1 <= m < n <= n_c, got m={m}, n={n}, n_c={n_c}")
    if not dist.is_continuous:
        raise ConfigurationError("tolerance intervals need a distribution without atoms")
    if trials < MIN_TRIALS:
        raise ConfigurationError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    problem = distribution_problem(dist)

    def event(v):
        return bool(dist.cdf(v[n - 1]) - dist.cdf(v[m - 1]) >= 1.0 - eps)

    hits = 0
    for t in range(trials):
        hits += event(sample_indirect(problem, n_c, trial_seed(seed, t)).sorted_values)
    emp = hits / trials
    pred = min(1.0, max(0.0, 1.0 - confidence_v(n_c, n_c + 1 - n + m, eps) + predicted_offset))
    se = _se(emp, trials)
    band = 3.0 * max(se, _se(pred, trials))
    return CoverageResult(
        empirical_rate=emp,
        predicted_rate=pred,
        standard_error=se,
        passed=abs(emp - pred) <= band,
        trials=trials,
        band=band,
        kind="equality",
        label=f"tolerance(m={m}, n={n})",
        statistic="tolerance",
        mode="indirect",
        sample_size=n_c,
    )


def verify_size_sharpness(spec: ReliabilitySpec, trials: int = 2000, seed: int = 0):
    """Min-side coverage at the planned size and one below it, on the uniform law.

    Returns ``(at_size, below_size)``. At the planned size the empirical rate
    must reach ``1 - delta`` within the band; one below it the rate must stay
    under ``1 - delta`` plus the band. When the exact gap below the target is
    narrower than the band the second check cannot discriminate, which is
    reported in ``notice``.
    """
    if trials < MIN_TRIALS:
        raise ConfigurationError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    n = planner.constrained_size_one_sided(spec)
    target = 1.0 - spec.delta
    dist = TestDistribution.uniform()
    problem = distribution_problem(dist)
    results = []
    for size, side in ((n, "at"), (n - 1, "below")):
        label = f"sharpness {side} N_c={size} (eps={spec.epsilon}, delta={spec.delta})"
        if size < 1:
            results.append(
                CoverageResult(
                    empirical_rate=float("nan"),
                    predicted_rate=float("nan"),
                    standard_error=float("nan"),
                    passed=True,
                    trials=0,
                    band=float("nan"),
                    kind="skipped",
                    label=label,
                    statistic="min_side",
                    mode="indirect",
                    sample_size=size,
                    notice="planned size is 1; there is no smaller size to test",
                )
            )
            continue
        exact = 1.0 - (1.0 - spec.epsilon) ** size
        hits = 0
        for t in range(trials):
            v = sample_indirect(problem, size, trial_seed(seed, t)).sorted_values
            hits += _coverage_event(v, dist, "min_side", spec.epsilon)
        emp = hits / trials
        se = _se(emp, trials)
        band = 3.0 * max(se, _se(exact, trials))
        notice = ""
        if side == "at":
            passed = emp >= target - band and exact >= target
            kind = "reaches_target"
        else:
            passed = emp < target + band and exact < target
            kind = "misses_target"
            if target - exact < band:
                notice = (
                    f"exact shortfall {target - exact:.3g} is inside the statistical band "
                    f"{band:.3g}; sharpness is confirmed by the exact rate only"
                )
        results.append(
            CoverageResult(
                empirical_rate=emp,
                predicted_rate=exact,
                standard_error=se,
                passed=bool(passed),
                trials=trials,
                band=band,
                kind=kind,
                label=label,
                statistic="min_side",
                mode="indirect",
                sample_size=size,
                exact_rate=exact,
                notice=notice,
            )
        )
    return results[0], results[1]


@dataclass
class IndependenceResult:
    ks_statistic: float
    pvalue: float
    critical_value: float
    n_low: int
    n_high: int
    passed: bool
    label: str = "stopping-count independence"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["pass"] = rec.pop("passed")
        return rec


def stopping_runs(n_c: int, rho: float, runs: int, seed: int, dist: Optional[TestDistribution] = None):
    """``(F(u_(1)), L)`` pairs from ``runs`` indirect runs."""
    dist = dist or TestDistribution.uniform()
    problem = distribution_problem(dist, rho)
    f_min = np.empty(runs)
    lengths = np.empty(runs, dtype=np.int64)
    for t in range(runs):
        batch = sample_indirect(problem, n_c, trial_seed(seed, t))
        f_min[t] = dist.cdf(batch.sorted_values[0])
        lengths[t] = batch.raw_draws_consumed
    return f_min, lengths


def check_stopping_independence(
    n_c: int = 59, rho: float = 0.5, runs_per_arm: int = 2000, seed: int = 0
) -> IndependenceResult:
    """Two-sample KS test of ``F(u_(1))`` for short versus long stopping counts.

    Runs are ranked by ``L`` (ties by run number, which is independent of the
    observations) and split into equal halves.
    """
    f_min, lengths = stopping_runs(n_c, rho, 2 * runs_per_arm, seed)
    order = np.lexsort((np.arange(len(lengths)), lengths))
    low, high = f_min[order[:runs_per_arm]], f_min[order[runs_per_arm:]]
    res = stats.ks_2samp(low, high)
    crit = 1.628 * math.sqrt((len(low) + len(high)) / (len(low) * len(high)))
    return IndependenceResult(
        ks_statistic=float(res.statistic),
        pvalue=float(res.pvalue),
        critical_value=crit,
        n_low=len(low),
        n_high=len(high),
        passed=bool(res.pvalue > KS_ALPHA),
    )


@dataclass
class MeanResult:
    mean: float
    predicted: float
    standard_error: float
    runs: int
    passed: bool
    label: str = "expected stopping count"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["pass"] = rec.pop("passed")
        return rec


def check_expected_trials(n_c: int = 100, rho: float = 0.25, runs: int = 2000, seed: int = 0) -> MeanResult:
    """Mean realized ``L`` against ``n_c / rho``, within three standard errors."""
    _, lengths = stopping_runs(n_c, rho, runs, seed)
    mean = float(lengths.mean())
    se = float(lengths.std(ddof=1) / math.sqrt(runs))
    pred = planner.expected_trials_indirect(n_c, rho)
    return MeanResult(mean, pred, se, runs, abs(mean - pred) <= 3.0 * se)


def _global_uniform_problem() -> ConstrainedProblem:
    # u(q) = q with constraint q >= 0.5: the index is uniform on [0.5, 1].
    return ConstrainedProblem(
        space=ParameterSpace((Coordinate(0.0, 1.0),)),
        constraint=lambda q: q[:, 0] >= 0.5,
        index=lambda q: q[:, 0],
        vectorized=True,
        name="u=q on q>=0.5",
    )


def standard_suite(
    trials: int = 2000,
    seed: int = 0,
    spec: ReliabilitySpec = ReliabilitySpec(0.05, 0.05),
    *,
    predicted_offset: float = 0.0,
) -> Iterator[dict]:
    """Yield one record per check of the default verification suite."""
    if trials < MIN_TRIALS:
        raise ConfigurationError(f"trials must be >= {MIN_TRIALS}, got {trials}")
    k = 0

    def next_seed():
        nonlocal k
        k += 1
        return trial_seed(seed, 10_000_000 + k)

    def rec(group, result):
        out = {"group": group}
        out.update(result.to_record())
        return out

    for name, dist in attainment_cases(spec.epsilon).items():
        for statistic in ("min_side", "max_side"):
            exp = CoverageExperiment(
                dist=dist, mode="indirect", spec=spec, trials=trials, seed=next_seed(),
                statistic=statistic, label=f"case {name} {statistic}",
            )
            yield rec("order-statistic coverage", run_coverage(exp, predicted_offset=predicted_offset))

    exp = CoverageExperiment(
        dist=TestDistribution.uniform(), mode="indirect", spec=spec, trials=trials,
        seed=next_seed(), statistic="range", label="range, indirect",
    )
    yield rec("range coverage", run_coverage(exp, predicted_offset=predicted_offset))

    for m, n, eps in ((1, 10, 0.3), (5, 6, 0.5)):
        res = verify_tolerance_interval(
            TestDistribution.uniform(), 10, m, n, eps, trials, next_seed(), predicted_offset=predicted_offset
        )
        yield rec("tolerance interval", res)

    for pair in ((0.05, 0.05), (0.5, 0.5), (0.1, 0.01)):
        for res in verify_size_sharpness(ReliabilitySpec(*pair), trials, next_seed()):
            yield rec("size sharpness", res)

    uniform_top = TestDistribution.uniform(0.5, 1.0)
    for statistic in ("min_side", "max_side", "range"):
        exp = CoverageExperiment(
            dist=uniform_top, mode="direct", spec=spec, trials=trials, seed=next_seed(),
            statistic=statistic, rho=0.5, problem=_global_uniform_problem(),
            label=f"global {statistic}, rho=0.5",
        )
        res = run_coverage(exp, predicted_offset=predicted_offset)
        res.passed = res.passed and res.empirical_rate >= 1.0 - spec.delta - res.band
        yield rec("global sample size", res)

    yield rec("stopping count", check_expected_trials(100, 0.25, trials, next_seed()))
    yield rec("stopping count", check_stopping_independence(59, 0.5, trials, next_seed()))


def named_distribution(name: str, eps: float = 0.05) -> TestDistribution:
    """Look up a preset test distribution by name.

    Presets: ``uniform``, ``point-mass``, ``atom-at-zero`` (half the mass at
    0, the rest uniform on [0, 1]), ``skip-half`` (the CDF jumps over 0.5) and
    ``case-A`` ... ``case-E`` from :func:`attainment_cases`.
    """
    presets = {
        "uniform": lambda: TestDistribution.uniform(),
        "point-mass": lambda: TestDistribution.point_mass(0.0),
        "atom-at-zero": lambda: TestDistribution(
            segments=((0.0, 1.0, 0.5),), atoms=((0.0, 0.5),), name="atom-at-zero"
        ),
        "skip-half": lambda: TestDistribution(
            segments=((0.0, 0.4, 0.4), (0.6, 1.0, 0.4)), atoms=((0.5, 0.2),), name="skip-half"
        ),
    }
    if name in presets:
        return presets[name]()
    if name.startswith("case-") and name[5:] in "ABCDE" and len(name) == 6:
        return attainment_cases(eps)[name[5:]]
    raise ConfigurationError(
        f"unknown test distribution {name!r}; presets: {sorted(presets) + [f'case-{c}' for c in 'ABCDE']}"
    )
