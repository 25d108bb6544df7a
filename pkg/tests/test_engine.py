import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randrobust.engine import (
    ConstrainedProblem,
    Coordinate,
    ParameterSpace,
    estimate_extrema,
    estimate_rho,
    sample_direct,
    sample_indirect,
)
from randrobust.errors import ConfigurationError, DomainError, SamplingCapExceeded
from randrobust.planner import ReliabilitySpec

SPEC = ReliabilitySpec(0.05, 0.05)
UNIT = ParameterSpace((Coordinate(0.0, 1.0),))


def scalar_problem(constraint, index=lambda q: q[:, 0], space=UNIT):
    return ConstrainedProblem(space=space, constraint=constraint, index=index, vectorized=True)


def always(q):
    return np.ones(len(q), dtype=bool)


def never(q):
    return np.zeros(len(q), dtype=bool)


def upper_half(q):
    return q[:, 0] >= 0.5


def test_indirect_all_hits():
    b = sample_indirect(scalar_problem(always), 5, seed=1)
    assert b.raw_draws_consumed == 5 and b.constrained_hits == 5


def test_indirect_stopping_count_ratio():
    b = sample_indirect(scalar_problem(upper_half), 1000, seed=2024)
    assert 1.8 <= b.raw_draws_consumed / 1000 <= 2.2
    assert np.all(b.sorted_values >= 0.5)


def test_indirect_cap():
    with pytest.raises(SamplingCapExceeded) as err:
        sample_indirect(scalar_problem(never), 3, seed=0, draw_cap=10**6)
    assert err.value.hits == 0 and err.value.draws == 10**6


def test_indirect_domain():
    with pytest.raises(DomainError):
        sample_indirect(scalar_problem(always), 0, seed=0)
    with pytest.raises(DomainError):
        sample_indirect(scalar_problem(always), 10, seed=0, draw_cap=5)
    with pytest.raises(DomainError):
        sample_indirect(scalar_problem(always), 10, seed=-1)


def test_direct_examples():
    assert sample_direct(scalar_problem(always), 100, seed=3).constrained_hits == 100
    b = sample_direct(scalar_problem(upper_half), 10_000, seed=4)
    assert 0.47 <= b.constrained_hits / 10_000 <= 0.53
    e = sample_direct(scalar_problem(never), 50, seed=5)
    assert e.constrained_hits == 0 and e.inconclusive and len(e.sorted_values) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**64 - 1))
def test_batch_invariants(n, seed):
    p = scalar_problem(upper_half, index=lambda q: np.sin(7 * q[:, 0]))
    b = sample_indirect(p, n, seed)
    assert b.constrained_hits == n == len(b.sorted_values)
    assert b.raw_draws_consumed >= n
    assert np.all(np.diff(b.sorted_values) >= 0)
    np.testing.assert_array_equal(b.sorted_values, np.sort(np.sin(7 * b.samples[:, 0])))
    assert b.draw_indices.max() == b.raw_draws_consumed - 1
    d = sample_direct(p, n, seed)
    assert d.raw_draws_consumed == n and d.constrained_hits <= n


def test_direct_and_indirect_share_the_stream():
    # The first n_c hits of the direct stream are exactly the indirect sample.
    p = scalar_problem(upper_half)
    ind = sample_indirect(p, 40, seed=9)
    d = sample_direct(p, ind.raw_draws_consumed, seed=9)
    np.testing.assert_array_equal(d.sorted_values, ind.sorted_values)


def test_lazy_and_vectorized_agree():
    lazy = ConstrainedProblem(space=UNIT, constraint=lambda q: q[0] >= 0.5, index=lambda q: q[0] * q[0])
    vec = scalar_problem(upper_half, index=lambda q: q[:, 0] * q[:, 0])
    a = sample_indirect(lazy, 200, seed=77)
    b = sample_indirect(vec, 200, seed=77)
    np.testing.assert_array_equal(a.sorted_values, b.sorted_values)
    assert a.raw_draws_consumed == b.raw_draws_consumed


def test_worker_count_does_not_change_results():
    lazy = ConstrainedProblem(space=ParameterSpace.box([(0, 1), (-1, 1)]),
                              constraint=lambda q: q[0] + q[1] > 0.2, index=lambda q: q[0] * q[1])
    ref = sample_indirect(lazy, 300, seed=5, workers=1)
    for w in (2, 4):
        got = sample_indirect(lazy, 300, seed=5, workers=w)
        np.testing.assert_array_equal(got.sorted_values, ref.sorted_values)
        np.testing.assert_array_equal(got.draw_indices, ref.draw_indices)


def test_truncated_normal_stays_in_bounds():
    space = ParameterSpace((Coordinate(-1.0, 2.0, law="truncated_normal", mean=0.0, std=0.5),))
    b = sample_direct(scalar_problem(always, space=space), 5000, seed=1)
    x = b.samples[:, 0]
    assert x.min() >= -1.0 and x.max() <= 2.0
    assert abs(x.mean()) < 0.05


def test_coordinate_validation():
    with pytest.raises(ConfigurationError):
        Coordinate(1.0, 0.0)
    with pytest.raises(ConfigurationError):
        Coordinate(0.0, math.inf)
    with pytest.raises(ConfigurationError):
        Coordinate(0.0, 1.0, law="truncated_normal")


def test_estimate_rho():
    assert estimate_rho(scalar_problem(always), 100, seed=0).value == 1.0
    assert estimate_rho(scalar_problem(never), 100, seed=0).value == 0.0
    r = estimate_rho(scalar_problem(upper_half), 10**5, seed=8)
    assert abs(r.value - 0.5) <= 3 * 0.0016
    assert r.standard_error == pytest.approx(math.sqrt(r.value * (1 - r.value) / 1e5))
    with pytest.raises(DomainError):
        estimate_rho(scalar_problem(always), 99, seed=0)


def test_estimate_extrema_uniform():
    rep = estimate_extrema(scalar_problem(always), SPEC, "indirect", seed=123)
    assert rep.planned_size == 59
    assert rep.u_min_hat < 0.15 and rep.u_max_hat > 0.85
    assert rep.argmin_sample == [rep.u_min_hat] and rep.argmax_sample == [rep.u_max_hat]
    assert rep.confidence["min_side"] == pytest.approx(1 - 0.95**59)


def test_estimate_extrema_constant_index():
    rep = estimate_extrema(scalar_problem(always, index=lambda q: np.full(len(q), 4.5)), SPEC, seed=1)
    assert rep.u_min_hat == rep.u_max_hat == 4.5


def test_estimate_extrema_tie_break_first_draw():
    p = scalar_problem(always, index=lambda q: np.where(q[:, 0] > 0.5, 1.0, 0.0))
    rep = estimate_extrema(p, SPEC, seed=3)
    b = sample_indirect(p, 59, seed=3)
    first_max = b.draw_indices[b.sorted_values == 1.0].min()
    first_min = b.draw_indices[b.sorted_values == 0.0].min()
    # ties keep draw order, so the first draw with each extreme value is reported
    assert rep.argmax_sample == [float(b.samples[b.draw_indices == first_max][0, 0])]
    assert rep.argmin_sample == [float(b.samples[b.draw_indices == first_min][0, 0])]


def test_estimate_extrema_direct():
    p = scalar_problem(upper_half)
    rep = estimate_extrema(p, SPEC, "direct", rho_hint=0.5, seed=2)
    assert rep.planned_size == 119 and rep.batch["raw_draws_consumed"] == 119
    assert rep.u_min_hat >= 0.5 and rep.u_min_hat <= rep.u_max_hat
    with pytest.raises(ConfigurationError):
        estimate_extrema(p, SPEC, "direct", seed=2)
    rng = estimate_extrema(p, SPEC, "direct", rho_hint=0.5, seed=2, target="range")
    assert rng.planned_size == 188


def test_estimate_extrema_direct_empty_is_inconclusive():
    rep = estimate_extrema(scalar_problem(never), SPEC, "direct", rho_hint=0.5, seed=2)
    assert rep.inconclusive and rep.u_min_hat is None


def test_estimate_extrema_reproducible():
    p = scalar_problem(upper_half, index=lambda q: np.cos(3 * q[:, 0]))
    a = estimate_extrema(p, SPEC, seed=99).to_record()
    b = estimate_extrema(p, SPEC, seed=99).to_record()
    assert a == b


def test_estimate_extrema_argument_checks():
    with pytest.raises(ConfigurationError):
        estimate_extrema(scalar_problem(always), SPEC, "sideways", seed=1)
    with pytest.raises(ConfigurationError):
        estimate_extrema(scalar_problem(always), SPEC, target="median", seed=1)
