"""Outward-rounded interval arithmetic and interval matrices."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlcert import expr as ex
from nlcert.errors import DomainError
from nlcert.interval import (
    Interval, IntervalMatrix, box_of, iatan, icos, iexp, ilog, ipow, isin, isqrt,
    split_mid_rad,
)

from .strategies import boxes, sample_box, smooth_exprs

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def intervals(draw, lo=-50.0, hi=50.0):
    a = draw(st.floats(lo, hi, allow_nan=False))
    b = draw(st.floats(lo, hi, allow_nan=False))
    return Interval(min(a, b), max(a, b))


def _samples(I: Interval, rng, count=100):
    return np.concatenate([[I.lo, I.hi], I.lo + (I.hi - I.lo) * rng.random(count - 2)])


def test_add_trivial():
    r = Interval(1, 2) + Interval(3, 4)
    assert r.lo <= 4 and 6 <= r.hi
    assert r.lo == pytest.approx(4) and r.hi == pytest.approx(6)


def test_arctan_unit_interval():
    r = iatan(Interval(0, 1))
    assert r.lo <= 0 and r.hi >= math.pi / 4
    assert r.hi == pytest.approx(0.7854, abs=1e-4) and r.lo > -1e-15


def test_sin_over_half_period_contains_peak():
    r = isin(Interval(0, 3.1416))
    xs = np.linspace(0, 3.1416, 1_000_001)
    v = np.sin(xs)
    assert r.lo <= v.min() and v.max() <= r.hi
    assert r.hi == pytest.approx(1.0, abs=1e-12)
    assert -1e-4 < r.lo <= 0


def test_division_by_zero_interval_is_a_domain_error():
    with pytest.raises(DomainError):
        Interval(1, 2) / Interval(-1, 1)


def test_log_and_sqrt_domains():
    with pytest.raises(DomainError):
        ilog(Interval(-1, 1))
    with pytest.raises(DomainError):
        isqrt(Interval(-1, 1))


@given(intervals(), intervals(), st.sampled_from(["+", "-", "*", "/"]))
def test_binary_containment(a, b, op):
    rng = np.random.default_rng(0)
    if op == "/" and b.lo <= 0 <= b.hi:
        return
    r = {"+": a.__add__, "-": a.__sub__, "*": a.__mul__, "/": a.__truediv__}[op](b)
    for x, y in zip(_samples(a, rng), _samples(b, rng)):
        v = {"+": lambda: x + y, "-": lambda: x - y, "*": lambda: x * y,
             "/": lambda: x / y}[op]()
        assert r.lo <= v <= r.hi


@given(intervals(-5, 5), st.integers(0, 5))
def test_power_containment(a, p):
    r = ipow(a, p)
    for x in _samples(a, np.random.default_rng(1)):
        assert r.lo <= x**p <= r.hi


@given(intervals(-20, 20), st.sampled_from(["sin", "cos", "atan", "exp"]))
def test_transcendental_containment(a, name):
    f = {"sin": (isin, np.sin), "cos": (icos, np.cos), "atan": (iatan, np.arctan),
         "exp": (iexp, np.exp)}[name]
    r = f[0](a)
    v = f[1](_samples(a, np.random.default_rng(2), 200))
    assert r.lo <= v.min() and v.max() <= r.hi


@given(st.fractions(-10, 10, max_denominator=100), st.fractions(-10, 10, max_denominator=100),
       st.fractions(-10, 10, max_denominator=100), st.fractions(-10, 10, max_denominator=100))
def test_rounding_contains_exact_rational_result(a, b, c, d):
    x = Interval.point(a) * Interval.point(b) + Interval.point(c) - Interval.point(d)
    exact = a * b + c - d
    assert Fraction(x.lo) <= exact <= Fraction(x.hi)


@given(smooth_exprs(2), boxes(2, -1.0, 1.0), st.data())
def test_interval_eval_monotone_under_inclusion(e, K, data):
    sub = []
    for lo, hi in K:
        a = data.draw(st.fractions(lo, hi, max_denominator=64))
        b = data.draw(st.fractions(a, hi, max_denominator=64))
        sub.append((a, b))
    try:
        big = ex.interval_eval(e, box_of(K))
    except DomainError:
        return
    small = ex.interval_eval(e, box_of(sub))
    assert big.lo <= small.lo and small.hi <= big.hi
    for x in sample_box(sub, 20, seed=4):
        v = ex.eval_expr(e, x)
        assert small.lo - 1e-9 * abs(v) <= v <= small.hi + 1e-9 * abs(v)


def test_interval_eval_product_on_unit_square():
    r = ex.interval_eval(ex.parse_expr("x1*x2"), box_of([(0, 1), (0, 1)]))
    assert r.lo == 0 and r.hi == pytest.approx(1)


# -- interval matrices --------------------------------------------------------
def test_split_degenerate():
    X, Y = split_mid_rad(IntervalMatrix([[1.0]], [[1.0]]))
    assert X.lo[0, 0] == X.hi[0, 0] == 1
    assert Y.lo[0, 0] == Y.hi[0, 0] == 0


def test_split_mid_rad_entry():
    X, Y = split_mid_rad(IntervalMatrix([[-1.0]], [[3.0]]))
    assert X.lo[0, 0] == 1
    assert Y.lo[0, 0] == pytest.approx(-2) and Y.hi[0, 0] == pytest.approx(2)
    assert Y.lo[0, 0] <= -2 and Y.hi[0, 0] >= 2


@given(st.lists(st.tuples(finite, finite), min_size=6, max_size=6))
def test_split_recomposition_contains(pairs):
    A = np.zeros((3, 3))
    B = np.zeros((3, 3))
    for (i, j), (a, b) in zip([(i, j) for i in range(3) for j in range(i, 3)], pairs):
        A[i, j] = A[j, i] = min(a, b)
        B[i, j] = B[j, i] = max(a, b)
    M = IntervalMatrix(A, B)
    X, Y = split_mid_rad(M)
    assert (X + Y).contains(M)


def test_interval_matrix_must_be_symmetric():
    with pytest.raises(ValueError):
        IntervalMatrix([[0.0, 1.0], [0.0, 0.0]])
