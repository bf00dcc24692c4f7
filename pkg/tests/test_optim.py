"""Template optimization: approximation recursion, refinement loop, subdivision."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlcert import expr as ex
from nlcert.expr import eval_many, parse
from nlcert.optim import (OptimConfig, Precision, bisect, minimize, randeval, subdivide_certify,
                          template_approx, template_optim)
from nlcert.sos import verify_certificate

from .strategies import sample_box


def _sampled_min(t, box, count=100_000, seed=0):
    X = sample_box(box, count, seed)
    return float(np.min(eval_many(t, X)))


# -- randeval ---------------------------------------------------------------------------
def test_randeval_is_seeded_and_in_box(mc):
    a = randeval(mc.objective, mc.box, 500, seed=3)
    b = randeval(mc.objective, mc.box, 500, seed=3)
    assert np.array_equal(a, b)
    for x, (lo, hi) in zip(a, mc.box):
        assert float(lo) <= x <= float(hi)


def test_randeval_finds_the_best_sample(mc):
    x = randeval(mc.objective, mc.box, 2000, seed=0)
    # best of 2000 uniform samples is close to the known minimum -1.9133
    assert ex.eval_expr(mc.objective, x) < -1.8


def test_randeval_rejects_zero_count(mc):
    with pytest.raises(ValueError):
        randeval(mc.objective, mc.box, 0)


# -- Precision ---------------------------------------------------------------------------
@pytest.mark.parametrize("kw", [{"mode": "taylor"}, {"reduce_lift": "l2:3"},
                                {"reduce_lift": "l1:x"}, {"nlift_max": -1}])
def test_precision_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        Precision(**kw)


# -- template_approx ---------------------------------------------------------------------
def test_polynomial_is_kept_exact():
    t = parse("var x in [-1, 1]; var y in [-1, 1]; objective x^2 + y^2 - x*y;").objective
    a = template_approx(t, [(-1, 1), (-1, 1)], 2, Precision())
    assert a.lower == t and a.upper == t
    assert a.m == pytest.approx(0.0, abs=1e-6)
    assert a.M == pytest.approx(3.0, abs=1e-6)
    assert not a.fallbacks


@pytest.mark.parametrize("mode", ["maxplus", "minimax", "interval"])
def test_template_approx_brackets_mc(mc, mode):
    a = template_approx(mc.objective, mc.box, 2, Precision(mode=mode))
    X = sample_box(mc.box, 20_000, seed=1)
    v = eval_many(mc.objective, X)
    lo = eval_many(a.lower, X)
    hi = eval_many(a.upper, X)
    assert np.all(lo <= v + 1e-9)
    assert np.all(v <= hi + 1e-9)
    assert a.m <= v.min() + 1e-9
    assert a.M >= v.max() - 1e-9


def test_template_approx_certificate_reverifies(mc):
    a = template_approx(mc.objective, mc.box, 2, Precision())
    assert a.certificate is not None
    rep = verify_certificate(a.certificate)
    assert rep.accepted
    assert rep.bound == pytest.approx(a.m, abs=1e-6) or rep.bound <= a.m + 1e-6


# -- template_optim ----------------------------------------------------------------------
def test_template_optim_polynomial_converges_immediately():
    t = parse("var x in [-2, 2]; objective (x - 1)^2 + 3;").objective
    r = template_optim(t, [(-2, 2)], iter_max=3)
    assert r.m == pytest.approx(3.0, abs=1e-5)
    assert r.m <= 3.0 + 1e-9
    assert r.value == pytest.approx(3.0, abs=1e-6)
    assert r.status == "certified"


def test_template_optim_mc_is_monotone_and_sound(mc):
    r = template_optim(mc.objective, mc.box, iter_max=3)
    ms = [it.m for it in r.iterations]
    assert len(ms) >= 2
    assert all(b >= a - 1e-7 for a, b in zip(ms, ms[1:]))
    assert r.m == max(ms)
    assert r.m <= _sampled_min(mc.objective, mc.box) + 1e-9
    # the minimizer guess is a good feasible point
    assert r.value < -1.9


def test_template_optim_stop_rule(mc):
    r = template_optim(mc.objective, mc.box, iter_max=3, stop_at="nonneg", target=-100.0)
    assert len(r.iterations) == 1


def test_template_optim_argument_checks(mc):
    with pytest.raises(ValueError):
        template_optim(mc.objective, mc.box, iter_max=0)
    with pytest.raises(ValueError):
        template_optim(mc.objective, mc.box, stop_at="forever")


def test_template_optim_is_deterministic(mc):
    a = template_optim(mc.objective, mc.box, iter_max=2, seed=5)
    b = template_optim(mc.objective, mc.box, iter_max=2, seed=5)
    assert a.m == b.m
    assert np.array_equal(a.x_opt, b.x_opt)


# Ten fixed random instances a*sin(b x + c y) + e*exp(x/2) + quadratic on random boxes.
def _instance(seed):
    rng = np.random.default_rng(seed)
    a, b, c, e, q1, q2 = (int(v) for v in rng.integers(-3, 4, size=6))
    lo = [Fraction(int(rng.integers(-8, 0)), 4) for _ in range(2)]
    hi = [Fraction(int(rng.integers(1, 9)), 4) for _ in range(2)]
    lo, hi = [float(v) for v in lo], [float(v) for v in hi]  # quarters print exactly
    src = (f"var x in [{lo[0]}, {hi[0]}]; var y in [{lo[1]}, {hi[1]}];\n"
           f"objective {a}*sin({b}*x + {c}*y) + {e}*exp(x/2) + {abs(q1)}*x^2 + {abs(q2)}*y^2 - x*y;")
    p = parse(src)
    return p.objective, p.box


@pytest.mark.parametrize("seed", range(10))
def test_end_to_end_soundness(seed):
    t, box = _instance(seed)
    r = template_optim(t, box, iter_max=2)
    assert r.m <= _sampled_min(t, box, 100_000, seed) + 1e-9


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_template_optim_never_exceeds_samples(seed):
    t, box = _instance(seed)
    r = template_optim(t, box, iter_max=1)
    assert r.m <= _sampled_min(t, box, 5_000, seed) + 1e-9


# -- subdivision -------------------------------------------------------------------------
def test_bisect_splits_widest_coordinate_exactly():
    box = [(Fraction(0), Fraction(1)), (Fraction(-3), Fraction(1))]
    left, right = bisect(box)
    assert left == [(0, 1), (-3, -1)]
    assert right == [(0, 1), (-1, 1)]


@given(st.lists(st.tuples(st.integers(-8, 0), st.integers(1, 8)), min_size=1, max_size=4))
def test_bisect_partitions(raw):
    box = [(Fraction(a, 2), Fraction(b, 2)) for a, b in raw]
    left, right = bisect(box)
    vol = lambda B: math.prod(b - a for a, b in B)  # noqa: E731
    assert vol(left) + vol(right) == vol(box)
    diff = [i for i in range(len(box)) if left[i] != right[i]]
    assert len(diff) == 1
    i = diff[0]
    assert left[i][0] == box[i][0] and right[i][1] == box[i][1] and left[i][1] == right[i][0]


def test_certify_easy_bound_uses_root_box_only(mc):
    r = subdivide_certify(mc.objective, mc.box, -10.0, OptimConfig())
    assert r.status == "certified"
    assert r.boxes == 1
    assert r.records[0].closed


def test_certify_impossible_target_is_inconclusive(mc):
    r = subdivide_certify(mc.objective, mc.box, -1.5, OptimConfig(max_boxes=3, iter_max=1))
    assert r.status == "inconclusive"
    assert r.boxes == 3
    assert r.worst_box is not None
    assert r.bound < -1.5


def test_certify_mc_certified_with_subdivision(mc):
    cfg = OptimConfig(iter_max=2, precision=Precision(points={"sin": 2}), max_boxes=64)
    r = subdivide_certify(mc.objective, mc.box, -1.92, cfg)
    assert r.status == "certified"
    assert r.boxes <= 64
    assert r.bound >= -1.92
    # closed boxes cover the root box
    vol = lambda B: math.prod(b - a for a, b in B)  # noqa: E731
    assert sum(vol(rec.box) for rec in r.records if rec.closed) == vol(mc.box)


def test_minimize_polynomial_converges():
    p = parse("var x in [-2, 2]; var y in [-1, 1]; objective (x - 1)^2 + (y + 0.5)^2 - 2;")
    r = minimize(p.objective, p.box, OptimConfig(iter_max=1))
    assert r.status == "converged"
    assert -2.0 - 0.03 <= r.bound <= -2.0 + 1e-9


def test_minimize_mc_bound_is_sound(mc):
    r = minimize(mc.objective, mc.box, OptimConfig(iter_max=2, max_boxes=8))
    assert r.bound <= _sampled_min(mc.objective, mc.box) + 1e-9
    assert r.value_best >= r.bound
    assert r.boxes <= 8


@pytest.mark.parametrize("kw", [{"max_boxes": 0}, {"k": 0}, {"workers": 0}])
def test_optim_config_validation(kw):
    with pytest.raises(ValueError):
        OptimConfig(**kw)
