import math

import pytest
from hypothesis import given, strategies as st

from lfmmi.semiring import ONE, ZERO, logadd, logsumexp

finite_logs = st.floats(min_value=-50.0, max_value=10.0)
weights = st.one_of(st.just(ZERO), finite_logs)


def test_halves_sum_to_one():
    assert logsumexp([math.log(0.5), math.log(0.5)]) == pytest.approx(0.0, abs=1e-12)


def test_empty_sum_is_zero():
    assert logsumexp([]) == ZERO


def test_ones_sum_to_two():
    assert logsumexp([ONE, ONE]) == pytest.approx(math.log(2.0), rel=1e-12)


def test_zero_is_identity_under_sum():
    assert logadd(ZERO, -1.5) == -1.5
    assert logadd(-1.5, ZERO) == -1.5
    assert logadd(ZERO, ZERO) == ZERO


def test_zero_absorbs_under_product():
    assert ZERO + (-1.5) == ZERO
    assert ZERO + ZERO == ZERO


@given(weights, weights)
def test_commutative(a, b):
    assert logadd(a, b) == logadd(b, a)


@given(weights, weights, weights)
def test_associative_within_tolerance(a, b, c):
    left = logadd(logadd(a, b), c)
    right = logadd(a, logadd(b, c))
    if left == ZERO or right == ZERO:
        assert left == right
    else:
        assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


@given(st.lists(weights, max_size=8))
def test_logsumexp_matches_pairwise(values):
    acc = ZERO
    for v in values:
        acc = logadd(acc, v)
    total = logsumexp(values)
    if acc == ZERO or total == ZERO:
        assert acc == total
    else:
        assert total == pytest.approx(acc, rel=1e-12, abs=1e-12)


@given(st.lists(finite_logs, min_size=1, max_size=8))
def test_logsumexp_bounds(values):
    total = logsumexp(values)
    assert total >= max(values)
    assert total <= max(values) + math.log(len(values)) + 1e-12
