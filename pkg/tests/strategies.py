"""Hypothesis strategies for random expressions, boxes and polynomials."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from nlcert import expr as ex
from nlcert.poly import Poly

small_ints = st.integers(min_value=-3, max_value=3)


def smooth_exprs(nvars: int = 2, max_leaves: int = 6):
    """Random smooth ASTs whose domain covers the box [-1, 1]^nvars.

    Only operations that are smooth and defined everywhere on the box are
    produced: +, -, *, integer powers, arctan, sin, cos, exp, and sqrt/log
    applied to strictly positive arguments (1 + u^2).
    """
    leaves = st.one_of(
        st.integers(0, nvars - 1).map(ex.var),
        small_ints.map(ex.const),
    )

    def extend(children):
        pos = children.map(lambda u: ex.add(ex.ONE, ex.mul(u, u)))
        return st.one_of(
            st.tuples(children, children).map(lambda ab: ex.add(*ab)),
            st.tuples(children, children).map(lambda ab: ex.sub(*ab)),
            st.tuples(children, children).map(lambda ab: ex.mul(*ab)),
            st.tuples(children, st.integers(2, 3)).map(lambda ap: ex.power(ap[0], ap[1])),
            children.map(ex.arctan),
            children.map(ex.sin),
            children.map(ex.cos),
            children.map(lambda u: ex.exp(ex.mul(ex.const(Fraction(1, 2)), u))),
            pos.map(ex.sqrt),
            pos.map(ex.log),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def semialgebraic_exprs(nvars: int = 2, max_leaves: int = 5):
    """Random semialgebraic ASTs well defined on [-1, 1]^nvars."""
    leaves = st.one_of(
        st.integers(0, nvars - 1).map(ex.var),
        small_ints.map(ex.const),
    )

    def extend(children):
        pos = children.map(lambda u: ex.add(ex.const(2), ex.mul(u, u)))
        return st.one_of(
            st.tuples(children, children).map(lambda ab: ex.add(*ab)),
            st.tuples(children, children).map(lambda ab: ex.sub(*ab)),
            st.tuples(children, children).map(lambda ab: ex.mul(*ab)),
            st.tuples(children, pos).map(lambda ab: ex.div(*ab)),
            pos.map(ex.sqrt),
            children.map(ex.absolute),
            st.tuples(children, children).map(lambda ab: ex.emax(*ab)),
            st.tuples(children, children).map(lambda ab: ex.emin(*ab)),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


@st.composite
def boxes(draw, n: int = 2, lo: float = -2.0, hi: float = 2.0):
    """Random boxes with rational endpoints (quarter-integer grid)."""
    out = []
    for _ in range(n):
        a = draw(st.integers(int(4 * lo), int(4 * hi) - 1))
        b = draw(st.integers(a + 1, int(4 * hi)))
        out.append((Fraction(a, 4), Fraction(b, 4)))
    return out


@st.composite
def polys(draw, nvars: int = 2, max_deg: int = 3, max_terms: int = 5):
    """Random sparse polynomials with small integer coefficients."""
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        alpha = tuple(draw(st.integers(0, max_deg)) for _ in range(nvars))
        if sum(alpha) > max_deg:
            continue
        c = draw(st.integers(-4, 4))
        if c:
            terms[alpha] = Fraction(c)
    return Poly(nvars, terms)


def sample_box(box, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([float(a) for a, _ in box])
    hi = np.array([float(b) for _, b in box])
    return lo + (hi - lo) * rng.random((count, len(box)))
