"""Monte Carlo realization of the indirect and direct sampling schemes.

Random numbers are organized as fixed-size blocks of draws. Block ``b`` of a
run seeded with ``seed`` is produced by a Philox generator keyed on
``SeedSequence(seed, spawn_key=(b,))``, so draw ``i`` always receives the same
parameter vector no matter how evaluation of the constraint or the index is
scheduled.
"""

from __future__ import annotations

import math
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import planner
from .errors import ConfigurationError, DomainError, SamplingCapExceeded
from .orderstat import mu
from .planner import ReliabilitySpec

__all__ = [
    "Coordinate",
    "ParameterSpace",
    "ConstrainedProblem",
    "OrderStatisticsBatch",
    "EstimateReport",
    "RhoEstimate",
    "sample_indirect",
    "sample_direct",
    "estimate_extrema",
    "estimate_rho",
    "BLOCK_SIZE",
    "DRAW_CAP_FACTOR",
]

BLOCK_SIZE = 1024
DRAW_CAP_FACTOR = 1000
_LAWS = ("uniform", "truncated_normal")


@dataclass(frozen=True)
class Coordinate:
    """One uncertain parameter: closed bounds and a sampling law."""

    lower: float
    upper: float
    law: str = "uniform"
    mean: Optional[float] = None
    std: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ConfigurationError(f"bounds [{lo}, {hi}] must be finite and nonempty")
        if self.law not in _LAWS:
            raise ConfigurationError(f"unknown law {self.law!r}; expected one of {_LAWS}")
        if self.law == "truncated_normal":
            if self.mean is None or self.std is None or not self.std > 0:
                raise ConfigurationError("truncated_normal needs a mean and a positive std")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def transform(self, u: np.ndarray) -> np.ndarray:
        if self.law == "uniform":
            return self.lower + (self.upper - self.lower) * u
        a = (self.lower - self.mean) / self.std
        b = (self.upper - self.mean) / self.std
        x = stats.truncnorm.ppf(u, a, b, loc=self.mean, scale=self.std)
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class ParameterSpace:
    """Compact box of independent coordinates."""

    coordinates: tuple[Coordinate, ...]

    def __post_init__(self):
        coords = tuple(self.coordinates)
        if not coords:
            raise ConfigurationError("a parameter space needs at least one coordinate")
        object.__setattr__(self, "coordinates", coords)

    @classmethod
    def box(cls, bounds: Sequence[tuple[float, float]]) -> "ParameterSpace":
        return cls(tuple(Coordinate(lo, hi) for lo, hi in bounds))

    @property
    def dimension(self) -> int:
        return len(self.coordinates)

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(c.lower, c.upper) for c in self.coordinates]

    def transform(self, u: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for j, coord in enumerate(self.coordinates):
            out[:, j] = coord.transform(u[:, j])
        return out


@dataclass(frozen=True)
class ConstrainedProblem:
    """Parameter space, constraint predicate and performance index.

    With ``vectorized=True`` both callables receive an ``(m, n)`` array and
    return length-``m`` arrays; otherwise they are called once per parameter
    vector and may be dispatched to worker threads.
    """

    space: ParameterSpace
    constraint: Callable
    index: Callable
    vectorized: bool = False
    name: str = ""


def _uniform_block(seed: int, block: int, dim: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss)).random((BLOCK_SIZE, dim))


def resolve_seed(seed) -> int:
    """Return ``seed`` checked as a 64-bit unsigned integer, or a fresh random one if None."""
    if seed is None:
        return secrets.randbits(64)
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _eval_constraint(problem, q, workers):
    if problem.vectorized:
        return np.asarray(problem.constraint(q), dtype=bool).reshape(len(q))
    return np.array(_map(lambda row: bool(problem.constraint(row)), list(q), workers), dtype=bool)


def _eval_index(problem, q, workers):
    if len(q) == 0:
        return np.empty(0)
    if problem.vectorized:
        return np.asarray(problem.index(q), dtype=float).reshape(len(q))
    return np.array(_map(lambda row: float(problem.index(row)), list(q), workers), dtype=float)


@dataclass
class OrderStatisticsBatch:
    """Sorted index values of the constrained hits of one run.

    ``samples`` and ``draw_indices`` are aligned with ``sorted_values``; ties
    keep draw order.
    """

    sorted_values: np.ndarray
    raw_draws_consumed: int
    constrained_hits: int
    mode: str
    samples: np.ndarray
    draw_indices: np.ndarray

    @property
    def inconclusive(self) -> bool:
        return self.constrained_hits == 0

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "raw_draws_consumed": int(self.raw_draws_consumed),
            "constrained_hits": int(self.constrained_hits),
        }


def _make_batch(problem, q_hits, draw_idx, raw, mode, workers):
    values = _eval_index(problem, q_hits, workers)
    order = np.argsort(values, kind="stable")
    return OrderStatisticsBatch(
        sorted_values=values[order],
        raw_draws_consumed=int(raw),
        constrained_hits=len(values),
        mode=mode,
        samples=q_hits[order],
        draw_indices=draw_idx[order],
    )


def sample_indirect(
    problem: ConstrainedProblem,
    n_c: int,
    seed: int,
    draw_cap: Optional[int] = None,
    *,
    workers: int = 1,
) -> OrderStatisticsBatch:
    """Draw until ``n_c`` parameter vectors satisfy the constraint.

    ``raw_draws_consumed`` is the realized stopping count ``L``. Raises
    :class:`SamplingCapExceeded` if ``draw_cap`` (default ``1000 * n_c``)
    raw draws do not produce ``n_c`` hits.
    """
    if isinstance(n_c, bool) or int(n_c) != n_c or n_c < 1:
        raise DomainError(f"n_c must be a positive integer, got {n_c!r}")
    n_c = int(n_c)
    draw_cap = DRAW_CAP_FACTOR * n_c if draw_cap is None else int(draw_cap)
    if draw_cap < n_c:
        raise DomainError(f"draw_cap={draw_cap} is smaller than n_c={n_c}")
    seed = resolve_seed(seed)
    dim = problem.space.dimension
    # Lazy per-row constraints are checked in small chunks to avoid paying
    # for a whole block when only a few hits are missing.
    chunk = BLOCK_SIZE if problem.vectorized else 64

    hits_q, hits_i = [], []
    need = n_c
    block = 0
    last = -1
    while need > 0:
        start = block * BLOCK_SIZE
        if start >= draw_cap:
            break
        q = problem.space.transform(_uniform_block(seed, block, dim))
        usable = min(BLOCK_SIZE, draw_cap - start)
        for c0 in range(0, usable, chunk):
            c1 = min(usable, c0 + chunk)
            mask = _eval_constraint(problem, q[c0:c1], workers)
            pos = np.flatnonzero(mask)[:need]
            if len(pos):
                hits_q.append(q[c0:c1][pos])
                hits_i.append(start + c0 + pos)
                need -= len(pos)
                last = start + c0 + pos[-1]
            if need == 0:
                break
        block += 1
    if need > 0:
        raise SamplingCapExceeded(
            f"only {n_c - need} of {n_c} constrained hits after {draw_cap} draws; "
            "the constrained subset may have (near) zero volume",
            draws=draw_cap,
            hits=n_c - need,
        )
    q_hits = np.concatenate(hits_q)
    draw_idx = np.concatenate(hits_i)
    return _make_batch(problem, q_hits, draw_idx, last + 1, "indirect", workers)


def sample_direct(
    problem: ConstrainedProblem, n: int, seed: int, *, workers: int = 1
) -> OrderStatisticsBatch:
    """Draw exactly ``n`` parameter vectors and keep those in the constrained subset.

    The hit count ``M`` may be zero; the batch is then empty and
    :attr:`OrderStatisticsBatch.inconclusive` is set.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    seed = resolve_seed(seed)
    dim = problem.space.dimension
    nblocks = -(-n // BLOCK_SIZE)
    q = np.concatenate([problem.space.transform(_uniform_block(seed, b, dim)) for b in range(nblocks)])[:n]
    mask = _eval_constraint(problem, q, workers)
    pos = np.flatnonzero(mask)
    return _make_batch(problem, q[pos], pos, n, "direct", workers)


@dataclass(frozen=True)
class RhoEstimate:
    value: float
    standard_error: float
    n_probe: int


def estimate_rho(problem: ConstrainedProblem, n_probe: int, seed: int, *, workers: int = 1) -> RhoEstimate:
    """Hit fraction of ``n_probe`` raw draws, with its binomial standard error."""
    if n_probe < 100:
        raise DomainError(f"n_probe must be >= 100, got {n_probe}")
    batch = sample_direct(problem, n_probe, seed, workers=workers)
    p = batch.constrained_hits / n_probe
    return RhoEstimate(p, math.sqrt(p * (1.0 - p) / n_probe), int(n_probe))


@dataclass
class EstimateReport:
    """Outcome of one end-to-end extremum estimation."""

    u_min_hat: Optional[float]
    u_max_hat: Optional[float]
    argmin_sample: Optional[list]
    argmax_sample: Optional[list]
    spec: ReliabilitySpec
    planned_size: int
    batch: dict
    seed: int
    mode: str
    target: str
    rho: Optional[float] = None
    empirical_rho: Optional[float] = None
    empirical_rho_se: Optional[float] = None
    inconclusive: bool = False
    confidence: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "target": self.target,
            "epsilon": self.spec.epsilon,
            "delta": self.spec.delta,
            "planned_size": self.planned_size,
            "raw_draws_consumed": self.batch["raw_draws_consumed"],
            "constrained_hits": self.batch["constrained_hits"],
            "u_min_hat": self.u_min_hat,
            "u_max_hat": self.u_max_hat,
            "argmin_sample": self.argmin_sample,
            "argmax_sample": self.argmax_sample,
            "rho": self.rho,
            "empirical_rho": self.empirical_rho,
            "empirical_rho_se": self.empirical_rho_se,
            "inconclusive": self.inconclusive,
            "confidence_min_side": self.confidence.get("min_side"),
            "confidence_max_side": self.confidence.get("max_side"),
            "confidence_range": self.confidence.get("range"),
            "seed": self.seed,
            "notes": "; ".join(self.notes),
        }


def _confidence(mode, size, eps, rho):
    e = eps if mode == "indirect" else eps * rho
    one = 1.0 - (1.0 - e) ** size
    two = 1.0 - mu(size, e)
    return {"min_side": one, "max_side": one, "range": two}


_TARGETS = ("min", "max", "range")


def estimate_extrema(
    problem: ConstrainedProblem,
    spec: ReliabilitySpec,
    mode: str = "indirect",
    rho_hint=None,
    seed: Optional[int] = None,
    *,
    target: str = "min",
    draw_cap: Optional[int] = None,
    workers: int = 1,
    empirical_rho: Optional[RhoEstimate] = None,
) -> EstimateReport:
    """Plan a sample size, run the chosen sampler and report both extremes.

    ``target`` selects the planning formula: ``"min"`` and ``"max"`` use the
    one-sided size, ``"range"`` the two-sided one. The direct mode needs the
    volume ratio of the constrained subset through ``rho_hint``.
    """
    if mode not in ("indirect", "direct"):
        raise ConfigurationError(f"mode must be 'indirect' or 'direct', got {mode!r}")
    if target not in _TARGETS:
        raise ConfigurationError(f"target must be one of {_TARGETS}, got {target!r}")
    seed = resolve_seed(seed)
    notes = []
    rho = None
    if mode == "direct":
        if rho_hint is None:
            raise ConfigurationError("direct mode needs rho_hint (volume ratio of the constrained subset)")
        rho = float(planner.VolumeRatio(float(rho_hint)).rho)
        if empirical_rho is not None:
            notes.append(
                "rho estimated empirically from the hit fraction; the planned size "
                "inherits the estimation error"
            )
        if target == "range":
            size = planner.global_size_two_sided(spec, rho)
        else:
            size = planner.global_size_one_sided(spec, rho)
        batch = sample_direct(problem, size, seed, workers=workers)
    else:
        if target == "range":
            size = planner.constrained_size_two_sided(spec)
        else:
            size = planner.constrained_size_one_sided(spec)
        batch = sample_indirect(problem, size, seed, draw_cap=draw_cap, workers=workers)

    m = batch.constrained_hits
    inconclusive = mode == "direct" and m <= 1
    if m == 0:
        u_min = u_max = None
        arg_min = arg_max = None
        notes.append("no parameter vector satisfied the constraint")
    else:
        vals = batch.sorted_values
        u_min, u_max = float(vals[0]), float(vals[-1])
        first_max = int(np.flatnonzero(vals == vals[-1])[0])
        arg_min = [float(x) for x in batch.samples[0]]
        arg_max = [float(x) for x in batch.samples[first_max]]
        if m == 1:
            notes.append("single constrained hit; minimum and maximum coincide")

    return EstimateReport(
        u_min_hat=u_min,
        u_max_hat=u_max,
        argmin_sample=arg_min,
        argmax_sample=arg_max,
        spec=spec,
        planned_size=size,
        batch=batch.summary(),
        seed=seed,
        mode=mode,
        target=target,
        rho=rho,
        empirical_rho=None if empirical_rho is None else empirical_rho.value,
        empirical_rho_se=None if empirical_rho is None else empirical_rho.standard_error,
        inconclusive=inconclusive,
        confidence=_confidence(mode, size, spec.epsilon, rho if rho is not None else 1.0),
        notes=notes,
    )
