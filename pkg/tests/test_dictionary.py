"""Dictionary entries: derivatives, interval extensions, monotonicity oracle."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlcert.dictionary import DICTIONARY, get
from nlcert.interval import Interval

NAMES = sorted(DICTIONARY)


@st.composite
def entry_and_interval(draw):
    name = draw(st.sampled_from(NAMES))
    lo_bound = 0.05 if name == "log" else -8.0
    a = draw(st.floats(lo_bound, 8.0))
    b = draw(st.floats(lo_bound, 8.0))
    return get(name), Interval(min(a, b), max(a, b))


@given(entry_and_interval())
def test_extensions_contain_sampled_values(data):
    r, I = data
    xs = np.linspace(I.lo, I.hi, 1001)
    for ext, fn in ((r.ext_f, r.f_np), (r.ext_d1, r.d1_np), (r.ext_d2, r.d2_np)):
        E = ext(I)
        v = fn(xs)
        assert E.lo <= v.min() and v.max() <= E.hi


@given(entry_and_interval())
def test_monotonicity_oracle_is_sound(data):
    r, I = data
    xs = np.linspace(I.lo, I.hi, 2001)
    d = np.diff(r.f_np(xs))
    m = r.monotonicity(I)
    assert m in ("increasing", "decreasing", "unknown")
    if m == "increasing":
        assert np.all(d >= -1e-12)
    if m == "decreasing":
        assert np.all(d <= 1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_derivatives_match_finite_differences(name):
    r = get(name)
    h = 1e-5
    for x in (0.3, 1.1, 2.7):
        assert r.d1(x) == pytest.approx((r.f(x + h) - r.f(x - h)) / (2 * h), rel=1e-6, abs=1e-9)
        assert r.d2(x) == pytest.approx((r.d1(x + h) - r.d1(x - h)) / (2 * h), rel=1e-6, abs=1e-9)


def test_unknown_entry():
    with pytest.raises(KeyError):
        get("tan")
