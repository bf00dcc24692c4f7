"""Semialgebraic lifting and the min_sa / max_sa bounds."""

from __future__ import annotations

import math

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from nlcert import expr as ex
from nlcert.errors import DomainError
from nlcert.lift import count_lifting, lift, max_sa, min_sa
from nlcert.poly import Poly

from .strategies import sample_box, semialgebraic_exprs


DELTA = ("x1*x4*(-x1 + x2 + x3 - x4 + x5 + x6) + x2*x5*(x1 - x2 + x3 + x4 - x5 + x6)"
         " + x3*x6*(x1 + x2 - x3 + x4 + x5 - x6) - x2*x3*x4 - x1*x3*x5 - x1*x2*x6 - x4*x5*x6")
D4 = "x1*(-x1 + x2 + x3 - x4 + x5 + x6) - x1*x4 + x2*x5 + x3*x6 - x2*x3 - x5*x6"


def _graph_residual(L, X):
    """max over points of |h(x, z(x))| for equalities and the worst violation
    of inequalities and lifting bounds, plus the objective mismatch."""
    worst = 0.0
    for x in X:
        xz = L.lift_point(x)
        for h in L.equalities:
            worst = max(worst, abs(float(h.to_float()(list(xz)))))
        for g in L.inequalities:
            worst = max(worst, -float(g.to_float()(list(xz))))
        for (lo, hi), z in zip(L.lift_bounds, xz[L.n:]):
            worst = max(worst, float(lo) - z, z - float(hi))
    return worst


def test_sqrt_lift():
    L = lift(ex.parse_expr("sqrt(x1)"), [(1, 4)], 2)
    assert L.nlift == 1
    x, z = Poly.variable(2, 0), Poly.variable(2, 1)
    assert L.equalities == [z * z - x]
    lo, hi = L.lift_bounds[0]
    assert lo <= 1 <= hi and lo == pytest.approx(1) and hi == pytest.approx(2)


def test_flyspeck_lift_structure(flyspeck_sa):
    L = lift(flyspeck_sa.objective, flyspeck_sa.box, 2)
    assert L.nlift == 2 and L.n == 6
    N = 8
    x = [Poly.variable(N, i) for i in range(N)]
    delta = ex.to_poly(ex.parse_expr(DELTA), 6)
    d4 = ex.to_poly(ex.parse_expr(D4), 6)
    z1, z2 = x[6], x[7]
    # h3/h4: z1^2 - 4 x1 Delta = 0 as an inequality pair
    assert L.equalities[0] == z1 * z1 - 4 * x[0] * delta.extend(N)
    # h5/h6: z2 z1 - (numerator) = 0 with numerator -d4
    assert L.equalities[1] == z2 * z1 + d4.extend(N)
    assert L.objective == z2
    cons = L.constraints()
    assert len(cons) == 2 * 2 + 2 * 2      # bounds of z1, z2, then two equality pairs
    assert cons[4] == -cons[5] and cons[6] == -cons[7]
    assert _graph_residual(L, sample_box(flyspeck_sa.box, 100, seed=5)) <= 1e-7


def test_max_lift_graph():
    L = lift(ex.parse_expr("max(x1, x2)"), [(0, 1), (0, 1)], 2)
    x1, x2, z = (Poly.variable(3, i) for i in range(3))
    assert set(map(str, L.inequalities)) == {str(z - x1), str(z - x2)}
    assert L.equalities == [(z - x1) * (z - x2)]
    assert _graph_residual(L, sample_box([(0, 1), (0, 1)], 100, seed=6)) <= 1e-12


def test_division_by_interval_containing_zero():
    with pytest.raises(DomainError):
        lift(ex.parse_expr("1/x1"), [(-1, 1)], 2)


def test_negative_radicand():
    with pytest.raises(DomainError):
        lift(ex.parse_expr("sqrt(x1)"), [(-1, 1)], 2)


@settings(max_examples=25)
@given(semialgebraic_exprs(2))
def test_graph_property_random(e):
    K = [(-1, 1), (-1, 1)]
    L = lift(e, K, 1)
    assert L.nlift == len(L.backmap) == len(L.lift_bounds)
    X = sample_box(K, 100, seed=7)
    scale = max([1.0] + [abs(float(b)) for bb in L.lift_bounds for b in bb])
    assert _graph_residual(L, X) <= 1e-8 * scale**4  # equalities are up to quartic
    for x in X[:20]:
        xz = L.lift_point(x)
        assert float(L.objective.to_float()(list(xz))) == pytest.approx(ex.eval_expr(e, x), abs=1e-9)


def test_ill_conditioned_sub_bound_regression():
    # the bound SDPs of this lifting once produced a non-finite search direction
    e = ex.parse_expr("sqrt(2 + x1/(2 + x1*x1)*x1/(2 + x1*x1))")
    K = [(-1, 1), (-1, 1)]
    L = lift(e, K, 1)
    X = sample_box(K, 100, seed=7)
    assert _graph_residual(L, X) <= 1e-8 * max([1.0] + [abs(float(b)) for bb in L.lift_bounds
                                                         for b in bb]) ** 4
    assert min_sa(e, K, 2) <= math.sqrt(2) + 1e-9


def test_min_sa_linear():
    assert min_sa(ex.parse_expr("x1 + x2"), [(0, 1), (0, 1)], 1) == pytest.approx(0.0, abs=1e-6)


def test_count_lifting(flyspeck):
    assert count_lifting(flyspeck.objective.args[1].args[0]) == 2
    assert count_lifting(ex.parse_expr("x1^2 + x2")) == 0


@pytest.mark.parametrize("src", [
    "sqrt(1 + x1^2) - x1*x2",
    "max(x1, x2) - x1*x2",
    "abs(x1 - x2/2) + x2^2",
    "x1/(2 + x2) - x2",
    "min(x1^2, x2) + 0.5*x1",
])
def test_min_max_sa_sound(src):
    e = ex.parse_expr(src)
    K = [(-1, 1), (-1, 1)]
    v = ex.eval_many(e, sample_box(K, 100_000, seed=8))
    lo = min_sa(e, K, 2)
    hi = max_sa(e, K, 2)
    assert lo <= v.min() + 1e-9
    assert hi >= v.max() - 1e-9
    assert v.min() - lo < 0.5 and hi - v.max() < 0.5
