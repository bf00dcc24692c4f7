"""Expression trees: parsing, evaluation, differentiation, classification."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlcert import expr as ex
from nlcert.errors import DomainError, NonDifferentiableError, ParseError
from nlcert.interval import Interval, box_of

from .conftest import FLYSPECK_X1
from .strategies import sample_box, semialgebraic_exprs, smooth_exprs


# -- parse --------------------------------------------------------------------------
def test_parse_schwefel_term_structure():
    p = ex.parse("var x1 in [1, 500];\nobjective x1*sin(sqrt(x1));\n")
    assert p.box == [(1, 500)]
    t = p.objective
    assert t.op == "mul"
    s = t.args[1]
    assert s.op == "func" and s.value == "sin"
    assert s.args[0].op == "sqrt"


def test_parse_flat_sum():
    e = ex.parse_expr("x1 + x2")
    assert e.op == "add"
    assert [a.op for a in e.args] == ["var", "var"]
    assert [a.value for a in e.args] == [0, 1]


def test_parse_flyspeck_has_six_vars_one_arctan(flyspeck):
    assert flyspeck.nvars == 6
    funcs = ex.transcendental_nodes(flyspeck.objective)
    assert [n.value for _, n in funcs] == ["arctan"]


def test_parse_decimal_constants_are_exact():
    e = ex.parse_expr("0.1 + 0.2")
    assert e.is_const and e.value == Fraction(3, 10)


def test_parse_constraints_and_comments():
    p = ex.parse("# comment\nvar x in [0, 1]; var y in [-1, 1];\n"
                 "objective x*y; constraint 1 - x^2 - y^2 >= 0;")
    assert len(p.constraints) == 1


@pytest.mark.parametrize("src, line", [
    ("var x in [0, 1];\nobjective x +;\n", 2),
    ("var x in [0, 1];\nobjective y;\n", 2),
    ("var x in [0 1];\nobjective x;\n", 1),
    ("var x in [2, 1];\nobjective x;\n", 1),
    ("var x in [0, 1];\n\nobjective foo(x);\n", 3),
])
def test_parse_errors_carry_position(src, line):
    with pytest.raises(ParseError) as err:
        ex.parse(src)
    assert err.value.line == line
    assert err.value.col is not None


def test_parse_missing_objective():
    with pytest.raises(ParseError):
        ex.parse("var x in [0, 1];")


def test_parse_expr_dimension_mismatch():
    with pytest.raises(ParseError):
        ex.parse_expr("x1 + z", ["x1"])


def test_to_string_round_trip(flyspeck):
    s = ex.to_string(flyspeck.objective, flyspeck.names)
    assert ex.parse_expr(s, flyspeck.names) == flyspeck.objective


# -- eval ---------------------------------------------------------------------------
def test_eval_arctan_zero():
    assert ex.eval_expr(ex.arctan(ex.var(0)), [0.0]) == 0.0


def test_eval_flyspeck_semialgebraic_part_at_reference_point(flyspeck_sa):
    assert ex.eval_expr(flyspeck_sa.objective, FLYSPECK_X1) == pytest.approx(0.3962, abs=5e-4)


def test_eval_mc_at_origin(mc):
    assert ex.eval_expr(mc.objective, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("src, x", [("log(x1)", [0.0]), ("sqrt(x1)", [-1.0]), ("1/x1", [0.0])])
def test_eval_domain_errors(src, x):
    with pytest.raises(DomainError):
        ex.eval_expr(ex.parse_expr(src), x)


@given(smooth_exprs(2))
def test_eval_many_matches_pointwise(e):
    X = sample_box([(-1, 1), (-1, 1)], 5, seed=1)
    vec = ex.eval_many(e, X)
    for row, v in zip(X, vec):
        assert v == pytest.approx(ex.eval_expr(e, row), rel=1e-12, abs=1e-12)


# -- differentiate ------------------------------------------------------------------
def test_derivative_of_arctan():
    d = ex.differentiate(ex.arctan(ex.var(0)), 0)
    for x in (-2.0, 0.0, 0.3962, 3.0):
        assert ex.eval_expr(d, [x]) == pytest.approx(1 / (1 + x * x), rel=1e-14)


def test_derivative_of_square():
    d = ex.differentiate(ex.power(ex.var(0), 2), 0)
    assert ex.to_poly(d, 1) == ex.to_poly(ex.mul(ex.const(2), ex.var(0)), 1)


def test_hessian_of_sin_sum_vanishes_at_origin():
    e = ex.parse_expr("sin(x1 + x2)")
    H = ex.hessian(e, 2)
    f = lambda x: ex.eval_expr(e, x)
    h = 1e-5
    for i in range(2):
        for j in range(2):
            assert ex.eval_expr(H[i][j], [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            fd = (f(ei + ej) - f(ei - ej) - f(-ei + ej) + f(-ei - ej)) / (4 * h * h)
            assert fd == pytest.approx(0.0, abs=1e-4)


def test_differentiate_rejects_abs():
    with pytest.raises(NonDifferentiableError):
        ex.differentiate(ex.parse_expr("abs(x1)"), 0)


@given(smooth_exprs(2), st.integers(0, 1))
def test_derivative_matches_central_differences(e, i):
    d = ex.differentiate(e, i)
    h = 1e-5
    for x in sample_box([(-0.9, 0.9), (-0.9, 0.9)], 10, seed=2):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (ex.eval_expr(e, xp) - ex.eval_expr(e, xm)) / (2 * h)
        exact = ex.eval_expr(d, x)
        scale = max(1.0, abs(ex.eval_expr(e, x)), abs(exact))
        assert abs(fd - exact) <= 1e-4 * scale


# -- classify -----------------------------------------------------------------------
def test_classify_polynomial_single_leaf():
    c = ex.classify(ex.parse_expr("x1^2 + 3*x1*x2"))
    assert c.leaves == [()]
    assert c.tags[()] == "semialgebraic"


def test_classify_flyspeck(flyspeck):
    t = flyspeck.objective
    c = ex.classify(t)
    assert c.tags[()] == "transcendental"
    assert c.tags[(0,)] == "semialgebraic"           # l(x), sqrt only
    assert t.args[1].value == "arctan" and c.tags[(1,)] == "transcendental"
    assert c.tags[(1, 0)] == "semialgebraic"         # the argument of arctan
    assert (0,) in c.leaves and (1, 0) in c.leaves


def test_classify_mc(mc):
    c = ex.classify(mc.objective)
    funcs = ex.transcendental_nodes(mc.objective)
    assert len(funcs) == 1 and funcs[0][1].value == "sin"
    path = funcs[0][0]
    assert c.tags[path + (0,)] == "semialgebraic"
    assert ex.is_polynomial(c.node(mc.objective, path + (0,)))


@given(st.one_of(smooth_exprs(2), semialgebraic_exprs(2)))
def test_classify_marks_sa_iff_no_dictionary_node(e):
    c = ex.classify(e)
    for path, tag in c.tags.items():
        node = c.node(e, path)
        has_func = any(n.op == "func" for n in node.walk())
        assert (tag == "semialgebraic") == (not has_func)
    for path in c.leaves:
        assert c.tags[path] == "semialgebraic"
        if path:
            assert c.tags[path[:-1]] == "transcendental"


def test_interval_eval_encloses_flyspeck_l(flyspeck):
    l = flyspeck.objective.args[0]
    I = ex.interval_eval(l, box_of(flyspeck.box))
    X = sample_box(flyspeck.box, 20000, seed=3)
    v = ex.eval_many(l, X)
    assert I.lo <= v.min() and v.max() <= I.hi
    # l is separable and monotone in each sqrt, so its exact range is
    # attained at vertices: min at x1 = 4, x4 = 6.3504, others 6.3504.
    lo_x = [4, 6.3504, 6.3504, 6.3504, 6.3504, 6.3504]
    hi_x = [6.3504, 4, 4, 8, 4, 4]
    assert I.lo <= ex.eval_expr(l, lo_x) + 1e-12
    assert ex.eval_expr(l, hi_x) - 1e-12 <= I.hi
    assert I.lo == pytest.approx(-0.4017, abs=1e-4)
    assert I.hi == pytest.approx(0.7188, abs=1e-4)


def test_interval_eval_constant_is_point():
    I = ex.interval_eval(ex.const(Fraction(1, 3)), [])
    assert I.lo <= 1 / 3 <= I.hi and I.width <= 1e-15
