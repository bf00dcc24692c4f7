"""Semialgebraic under/over-approximations of transcendental expressions.

Univariate nodes r(c) are bracketed on an interval I by

* maxplus approximations: r- = max of tangent parabolas with curvature
  -gamma (gamma bounds -r'' on I), r+ = min of parabolas with curvature +gamma;
* minimax polynomials: p_d from the Remez exchange, r-/+ = p_d -/+ eps with eps
  a certified bound of |r - p_d| on I;
* interval constants: r-/+ = the interval enclosure of r(I).

Brackets are composed through the tree with :func:`compose_approx` and
:func:`compose_bop`, always staying inside the semialgebraic class (min/max
nodes are used where the sign of a factor is unknown).

Multivariate quadratic templates f_{xc,lambda'} under-approximate a smooth
function with a quadratic whose curvature shift lambda' bounds the minimal
eigenvalue of the Hessian difference over the box; they are used to replace
costly semialgebraic approximations by maxima of quadratics.  Finally,
:func:`l1_underapprox` computes a degree-d polynomial under-approximation of
a semialgebraic function with maximal integral over the box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from . import expr as ex
from .dictionary import DictionaryEntry
from .errors import ConvergenceError, DomainError, NlcertError
from .expr import Expr, const
from .interval import Interval, IntervalMatrix, _down, _up, box_of, split_mid_rad
from .lift import count_lifting, lift, min_sa
from .poly import Poly, mons
from .sdp import SdpProblem, SdpSolution, solve as sdp_solve
from .sos import (
    Normalization,
    PopProblem,
    SosCertificate,
    build_relaxation,
    normalize,
    psd_lower_bound,
    solve_pop,
    verify_certificate,
)

UNDER, OVER = "under", "over"
_U = 2.0**-53


def _fr(x: float) -> Fraction:
    return Fraction(float(x))


# =============================================================================
# maxplus parabolas
# =============================================================================
@dataclass(frozen=True)
class Parabola:
    """par(x) = value + slope (x - a) - s gamma/2 (x - a)^2, s = +1 under, -1 over.

    ``value`` and ``slope`` are stored as floats that make the bracket hold in
    exact arithmetic: the value is an outward-rounded enclosure end of r(a),
    shifted to absorb the rounding error of the slope over the interval.
    """

    a: float
    gamma: float
    side: str
    value: float
    slope: float

    @property
    def sign(self) -> int:
        return 1 if self.side == UNDER else -1

    def __call__(self, x):
        d = np.asarray(x, dtype=float) - self.a
        return self.value + self.slope * d - self.sign * 0.5 * self.gamma * d * d

    def expr(self, c: Expr) -> Expr:
        """The parabola composed with the expression c."""
        d = ex.sub(c, const(_fr(self.a)))
        out = ex.add(const(_fr(self.value)), ex.mul(const(_fr(self.slope)), d))
        if self.gamma:
            q = _fr(self.gamma) / 2 * self.sign
            out = ex.sub(out, ex.mul(const(q), ex.power(d, 2)))
        return out


def curvature(r: DictionaryEntry, I: Interval, side: str) -> float:
    """gamma = max(0, sup_I -r'') for the under side, max(0, sup_I r'') over."""
    d2 = r.ext_d2(I)
    g = -d2.lo if side == UNDER else d2.hi
    return max(0.0, g)


def maxplus_parabola(r: DictionaryEntry, a: float, I: Interval, side: str = UNDER,
                     gamma: Optional[float] = None) -> Parabola:
    """Parabola tangent to r at a with r >= par (under) or r <= par (over) on I.

    ``gamma`` overrides the curvature; it must then be >= the value computed
    by :func:`curvature` for the bracket to hold.
    """
    if side not in (UNDER, OVER):
        raise ValueError(f"side must be {UNDER!r} or {OVER!r}")
    a = float(a)
    if not I.contains(a):
        raise ValueError(f"expansion point {a} outside {I}")
    r.check_domain(I)
    g = curvature(r, I, side) if gamma is None else float(gamma)
    A = Interval(a, a)
    fa = r.ext_f(A)
    slope = float(r.d1(a))
    D = r.ext_d1(A)
    # |r'(a) - slope| <= serr, so the linear term errs by at most serr * w on I
    serr = max(D.hi - slope, slope - D.lo, 0.0)
    w = max(a - I.lo, I.hi - a)
    shift = _up(serr * w) if serr else 0.0
    if side == UNDER:
        value = _down(fa.lo - shift) if shift else fa.lo
    else:
        value = _up(fa.hi + shift) if shift else fa.hi
    return Parabola(a, g, side, value, slope)


# =============================================================================
# minimax polynomials (Remez exchange)
# =============================================================================
@dataclass
class RemezResult:
    """p(x) = sum_j coeffs[j] * t^j with t = (x - mid) / rad, |r - p| <= eps on I."""

    coeffs: Tuple[float, ...]
    mid: float
    rad: float
    level: float
    eps: float
    reference: Tuple[float, ...]
    ref_errors: Tuple[float, ...]
    iterations: int

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        t = (np.asarray(x, dtype=float) - self.mid) / self.rad if self.rad else np.zeros_like(np.asarray(x, float))
        return np.polynomial.polynomial.polyval(t, np.array(self.coeffs))

    def expr(self, c: Expr) -> Expr:
        if self.rad:
            t = ex.mul(ex.sub(c, const(_fr(self.mid))), const(1 / _fr(self.rad)))
        else:
            t = ex.ZERO
        out = ex.ZERO
        for j in range(len(self.coeffs) - 1, -1, -1):  # Horner keeps the tree small
            out = ex.add(ex.mul(out, t), const(_fr(self.coeffs[j])))
        return out


def _t_map(I: Interval) -> Tuple[float, float]:
    mid = 0.5 * (I.lo + I.hi)
    rad = max(mid - I.lo, I.hi - mid)
    if rad > 0:
        rad = _up(rad)
    return mid, rad


def _alternating_extrema(t: np.ndarray, e: np.ndarray, refine) -> List[Tuple[float, float]]:
    """One extremum (t, e) per maximal run of constant sign of e on the grid."""
    s = np.sign(e)
    s[s == 0] = 1
    out = []
    start = 0
    n = len(t)
    for i in range(1, n + 1):
        if i == n or s[i] != s[start]:
            j = start + int(np.argmax(np.abs(e[start:i])))
            out.append(refine(j))
            start = i
    return out


def remez(r: DictionaryEntry, I: Interval, d: int, max_iter: int = 100, nsub: int = 4096,
          grid: int = 8193) -> RemezResult:
    """Best uniform degree-d polynomial approximation of r on I, certified."""
    if d < 0:
        raise ValueError("degree must be >= 0")
    r.check_domain(I)
    mid, rad = _t_map(I)
    if rad == 0:
        v = float(r.f(mid))
        res = RemezResult((v,), mid, 0.0, 0.0, 0.0, (0.0,), (0.0,), 0)
        res.eps = certify_error(r, res, nsub=1)
        return res
    lo_t, hi_t = (I.lo - mid) / rad, (I.hi - mid) / rad
    lo_t, hi_t = max(-1.0, lo_t), min(1.0, hi_t)

    def g(t):
        return r.f_np(mid + rad * np.asarray(t, dtype=float))

    T = np.cos(np.linspace(math.pi, 0.0, grid))
    T = lo_t + (T + 1.0) * 0.5 * (hi_t - lo_t)
    gT = g(T)
    scale = 1.0 + float(np.max(np.abs(gT)))
    ref = lo_t + (1.0 - np.cos(np.pi * np.arange(d + 2) / (d + 1))) * 0.5 * (hi_t - lo_t)
    c = np.zeros(d + 1)
    E = 0.0
    converged = False
    it = 0
    ref_err = np.zeros(d + 2)
    for it in range(1, max_iter + 1):
        V = npcheb.chebvander(ref, d)
        A = np.hstack([V, ((-1.0) ** np.arange(d + 2))[:, None]])
        sol = np.linalg.lstsq(A, g(ref), rcond=None)[0]
        c, E = sol[:-1], float(sol[-1])

        def err(t):
            return g(t) - npcheb.chebval(t, c)

        eT = gT - npcheb.chebval(T, c)
        maxabs = float(np.max(np.abs(eT)))
        if maxabs <= 64 * _U * scale:  # r is reproduced exactly (up to rounding)
            ref_err = err(ref)
            converged = True
            break

        def refine(j):
            a, b = T[max(j - 1, 0)], T[min(j + 1, len(T) - 1)]
            sg = 1.0 if eT[j] >= 0 else -1.0
            if b > a:
                res = minimize_scalar(lambda t: -sg * float(err(t)), bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-14 * max(1.0, abs(T[j]))})
                if -res.fun > sg * eT[j]:
                    return float(res.x), sg * -float(res.fun)
            return float(T[j]), float(eT[j])

        ext = _alternating_extrema(T, eT, refine)
        if len(ext) < d + 2:
            raise ConvergenceError(f"Remez: only {len(ext)} alternations for degree {d}")
        mags = np.array([abs(v) for _, v in ext])
        jmax = int(np.argmax(mags))
        best, best_start = -1.0, 0
        for s0 in range(max(0, jmax - d - 1), min(jmax, len(ext) - d - 2) + 1):
            mn = float(np.min(mags[s0:s0 + d + 2]))
            if mn > best:
                best, best_start = mn, s0
        window = ext[best_start:best_start + d + 2]
        ref = np.array([t for t, _ in window])
        ref_err = np.array([v for _, v in window])
        big = max(float(np.max(mags)), abs(E))
        if (big - float(np.min(np.abs(ref_err)))) <= 1e-4 * big:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Remez exchange did not converge in {max_iter} iterations")
    coeffs = npcheb.cheb2poly(c)
    res = RemezResult(tuple(float(v) for v in coeffs), mid, rad, abs(E), math.inf,
                      tuple(float(v) for v in ref), tuple(float(v) for v in ref_err), it)
    level = max(abs(E), float(np.max(np.abs(ref_err))))
    eps = certify_error(r, res, nsub=nsub)
    if eps > 2 * level and eps > 1e-9 * scale:
        eps = certify_error(r, res, nsub=2 * nsub)
        if eps > 2 * level and eps > 1e-9 * scale:
            raise ConvergenceError(f"Remez certification failed: eps={eps:.3e} vs level {level:.3e}")
    res.eps = eps
    return res


def _ihorner(coeffs: Sequence[Interval], T: Interval) -> Interval:
    acc = Interval(0.0, 0.0)
    for cf in reversed(coeffs):
        acc = acc * T + cf
    return acc


def certify_error(r: DictionaryEntry, p: RemezResult, nsub: int = 4096) -> float:
    """Rigorous upper bound of sup_I |r - p| by second-order interval Taylor forms.

    On each of ``nsub`` sub-intervals J (in the t variable) with centre m and
    half-width h: e(J) is enclosed in e(m) + e'(m)[-h, h] + e''(J)[0, h^2]/2.
    """
    C0 = [Interval(c, c) for c in p.coeffs]
    C1 = [Interval(c, c) * Interval(j, j) for j, c in enumerate(p.coeffs)][1:]
    C2 = [Interval(c, c) * Interval(j * (j - 1), j * (j - 1)) for j, c in enumerate(p.coeffs)][2:]
    mid, rad = Interval(p.mid, p.mid), Interval(p.rad, p.rad)
    rad2 = rad * rad
    edges = np.linspace(-1.0, 1.0, nsub + 1)
    worst = 0.0
    for i in range(nsub):
        a, b = float(edges[i]), float(edges[i + 1])
        m = 0.5 * (a + b)
        h = _up(max(m - a, b - m))
        Tm = Interval(m, m)
        TJ = Interval(a, b)
        Xm = mid + rad * Tm
        XJ = mid + rad * TJ
        em = r.ext_f(Xm) - _ihorner(C0, Tm)
        d1m = rad * r.ext_d1(Xm) - (_ihorner(C1, Tm) if C1 else Interval(0.0, 0.0))
        d2J = rad2 * r.ext_d2(XJ) - (_ihorner(C2, TJ) if C2 else Interval(0.0, 0.0))
        H = Interval(-h, h)
        H2 = Interval(0.0, _up(h * h))
        eJ = em + d1m * H + d2J * H2 * Interval(0.5, 0.5)
        worst = max(worst, eJ.mag)
    return _up(worst)


# =============================================================================
# unary approximations
# =============================================================================
@dataclass(frozen=True)
class UnaryPrecision:
    """Precision of one transcendental node: maxplus points, minimax degree, or interval."""

    mode: str = "maxplus"  # 'maxplus' | 'minimax' | 'interval'
    points: Tuple[float, ...] = ()
    degree: int = 0

    def __post_init__(self):
        if self.mode not in ("maxplus", "minimax", "interval"):
            raise ValueError(f"unknown approximation mode {self.mode!r}")


@dataclass
class UnaryApprox:
    """r- <= r <= r+ on ``interval`` for one dictionary function."""

    func: DictionaryEntry
    interval: Interval
    mode: str
    points: Tuple[float, ...] = ()
    under: Tuple[Parabola, ...] = ()
    over: Tuple[Parabola, ...] = ()
    minimax: Optional[RemezResult] = None

    @property
    def eps(self) -> float:
        return self.minimax.eps if self.minimax is not None else 0.0

    def lower(self, x):
        x = np.asarray(x, dtype=float)
        if self.mode == "maxplus":
            return np.max([p(x) for p in self.under], axis=0)
        if self.mode == "minimax":
            return self.minimax(x) - self.minimax.eps
        return np.full_like(x, self.func.ext_f(self.interval).lo)

    def upper(self, x):
        x = np.asarray(x, dtype=float)
        if self.mode == "maxplus":
            return np.min([p(x) for p in self.over], axis=0)
        if self.mode == "minimax":
            return self.minimax(x) + self.minimax.eps
        return np.full_like(x, self.func.ext_f(self.interval).hi)

    def lower_expr(self, c: Expr) -> Expr:
        if self.mode == "maxplus":
            return ex.emax(*[p.expr(c) for p in self.under])
        if self.mode == "minimax":
            return ex.sub(self.minimax.expr(c), const(_fr(self.minimax.eps)))
        return const(_fr(self.func.ext_f(self.interval).lo))

    def upper_expr(self, c: Expr) -> Expr:
        if self.mode == "maxplus":
            return ex.emin(*[p.expr(c) for p in self.over])
        if self.mode == "minimax":
            return ex.add(self.minimax.expr(c), const(_fr(self.minimax.eps)))
        return const(_fr(self.func.ext_f(self.interval).hi))


def unary_approx(r: DictionaryEntry, I: Interval, precision: UnaryPrecision) -> UnaryApprox:
    """Bracket r on I at the given precision (points outside I are clamped in)."""
    r.check_domain(I)
    if precision.mode == "interval":
        return UnaryApprox(r, I, "interval")
    if precision.mode == "minimax":
        return UnaryApprox(r, I, "minimax", minimax=remez(r, I, precision.degree))
    pts = sorted({min(max(float(a), I.lo), I.hi) for a in precision.points})
    if not pts:
        raise ValueError("maxplus mode needs at least one point")
    gu, go = curvature(r, I, UNDER), curvature(r, I, OVER)
    under = tuple(maxplus_parabola(r, a, I, UNDER, gu) for a in pts)
    over = tuple(maxplus_parabola(r, a, I, OVER, go) for a in pts)
    return UnaryApprox(r, I, "maxplus", tuple(pts), under, over)


# =============================================================================
# composition rules
# =============================================================================
def _same(a: Expr, b: Expr) -> bool:
    return a is b or a == b


def compose_approx(r: DictionaryEntry, approx: UnaryApprox, I: Interval, c_minus: Expr,
                   c_plus: Expr) -> Tuple[Expr, Expr]:
    """Brackets of r(c) from brackets c- <= c <= c+ with c(K) inside I.

    An exact child is composed directly.  Otherwise the child brackets are
    clamped into I (so the unary brackets stay valid) and combined according
    to the monotonicity of r on I; for non-monotone r the minimum of r over
    [c-, c+] is bounded by the endpoint values and the interior extrema.
    """
    if _same(c_minus, c_plus):
        return approx.lower_expr(c_minus), approx.upper_expr(c_minus)
    u = ex.emax(c_minus, const(_fr(I.lo)))
    v = ex.emin(c_plus, const(_fr(I.hi)))
    mono = r.monotonicity(I)
    if mono == "increasing":
        return approx.lower_expr(u), approx.upper_expr(v)
    if mono == "decreasing":
        return approx.lower_expr(v), approx.upper_expr(u)
    ext = r.extrema(I)
    mins = sorted({val for _, val, kind in ext if kind == "min"})
    maxs = sorted({val for _, val, kind in ext if kind == "max"})
    lo = ex.emin(approx.lower_expr(u), approx.lower_expr(v), *[const(_fr(m)) for m in mins[:1]])
    hi = ex.emax(approx.upper_expr(u), approx.upper_expr(v), *[const(_fr(m)) for m in maxs[-1:]])
    return lo, hi


def _sa_unary_shape(node: Expr, I: Interval) -> Tuple[str, List[float], List[float]]:
    """Monotonicity of a semialgebraic unary operation on I, with interior
    local minimum / maximum values."""
    op = node.op
    if op == "neg":
        return "decreasing", [], []
    if op in ("sqrt",):
        return "increasing", [], []
    if op == "abs" or (op == "pow" and node.value.denominator == 1 and int(node.value) % 2 == 0
                       and node.value > 0):
        if I.lo >= 0:
            return "increasing", [], []
        if I.hi <= 0:
            return "decreasing", [], []
        return "unknown", [0.0], []
    if op == "pow":
        r = node.value
        if r.denominator != 1 or r > 0:  # roots and odd powers
            return "increasing", [], []
        if I.contains(0.0):
            raise DomainError(f"negative power on an interval containing 0: {I}")
        q = -int(r)
        if q % 2 == 1:
            return "decreasing", [], []
        return ("decreasing" if I.lo > 0 else "increasing"), [], []
    raise ValueError(f"not a semialgebraic unary node: {op}")


def compose_sa_unary(node: Expr, I: Interval, c_minus: Expr, c_plus: Expr) -> Tuple[Expr, Expr]:
    """Brackets of a semialgebraic unary operation applied to a bracketed child."""

    def phi(c: Expr) -> Expr:
        return Expr(node.op, (c,), node.value) if node.op != "neg" else ex.neg(c)

    if _same(c_minus, c_plus):
        e = phi(c_minus)
        return e, e
    mono, mins, maxs = _sa_unary_shape(node, I)
    if node.op == "neg":
        return ex.neg(c_plus), ex.neg(c_minus)
    u = ex.emax(c_minus, const(_fr(I.lo)))
    v = ex.emin(c_plus, const(_fr(I.hi)))
    if mono == "increasing":
        return phi(u), phi(v)
    if mono == "decreasing":
        return phi(v), phi(u)
    lo = ex.emin(phi(u), phi(v), *[const(_fr(m)) for m in mins])
    hi = ex.emax(phi(u), phi(v), *[const(_fr(m)) for m in maxs])
    return lo, hi


def compose_nary(op: str, lowers: Sequence[Expr], uppers: Sequence[Expr]) -> Tuple[Expr, Expr]:
    """min/max are non-decreasing in every argument."""
    f = ex.emin if op == "min" else ex.emax
    return f(*lowers), f(*uppers)


def compose_bop(c1_minus: Expr, c1_plus: Expr, c2_minus: Expr, c2_plus: Expr, bop: str,
                I2: Interval, I1: Optional[Interval] = None) -> Tuple[Expr, Expr]:
    """Brackets of bop(c1, c2) from brackets of the children.

    I2 = [m2, M2] encloses c2 on K (I1 optionally encloses c1).  When a child
    is exact its expression is kept in the product/quotient, which is much
    tighter than replacing it by the ends of its range.
    """
    ex1 = _same(c1_minus, c1_plus)
    ex2 = _same(c2_minus, c2_plus)
    if bop == "add":
        return ex.add(c1_minus, c2_minus), ex.add(c1_plus, c2_plus)
    if bop == "sub":
        return ex.sub(c1_minus, c2_plus), ex.sub(c1_plus, c2_minus)
    m2, M2 = const(_fr(I2.lo)), const(_fr(I2.hi))
    if bop == "mul":
        if ex1 and ex2:
            e = ex.mul(c1_minus, c2_minus)
            return e, e
        if ex1:
            c1 = c1_minus
            a, b = ex.mul(c1, c2_minus), ex.mul(c1, c2_plus)
            if I1 is not None and I1.lo >= 0:
                return a, b
            if I1 is not None and I1.hi <= 0:
                return b, a
            return ex.emin(a, b), ex.emax(a, b)
        if ex2:
            c2 = c2_minus
            a, b = ex.mul(c1_minus, c2), ex.mul(c1_plus, c2)
            if I2.lo >= 0:
                return a, b
            if I2.hi <= 0:
                return b, a
            return ex.emin(a, b), ex.emax(a, b)

        def s_lo(k):
            return c1_minus if k >= 0 else c1_plus

        def s_hi(k):
            return c1_plus if k >= 0 else c1_minus

        lo = ex.emin(ex.mul(s_lo(I2.lo), m2), ex.mul(s_lo(I2.hi), M2))
        hi = ex.emax(ex.mul(s_hi(I2.lo), m2), ex.mul(s_hi(I2.hi), M2))
        return lo, hi
    if bop == "div":
        if I2.contains(0.0):
            raise DomainError(f"divisor range {I2} contains 0")
        pos = I2.lo > 0
        if ex2:
            c2 = c2_minus
            a, b = ex.div(c1_minus, c2), ex.div(c1_plus, c2)
            return (a, b) if pos else (b, a)
        if pos:
            lo = ex.emin(ex.div(c1_minus, m2), ex.div(c1_minus, M2))
            hi = ex.emax(ex.div(c1_plus, m2), ex.div(c1_plus, M2))
        else:
            lo = ex.emin(ex.div(c1_plus, m2), ex.div(c1_plus, M2))
            hi = ex.emax(ex.div(c1_minus, m2), ex.div(c1_minus, M2))
        return lo, hi
    raise ValueError(f"unknown binary operation {bop!r}")


# =============================================================================
# quadratic templates
# =============================================================================
def _box_pairs(K) -> List[Tuple[Fraction, Fraction]]:
    out = []
    for b in K:
        if isinstance(b, Interval):
            out.append((Fraction(b.lo), Fraction(b.hi)))
        else:
            out.append((Fraction(b[0]), Fraction(b[1])))
    return out


def hessian_difference_enclosure(f: Expr, K, x_c: Sequence[float]) -> IntervalMatrix:
    """Entrywise enclosure of D^2 f(x) - D^2 f(x_c) over x in K."""
    box = box_of(_box_pairs(K))
    n = len(box)
    H = ex.hessian(f, n)
    pt = [Interval(float(v), float(v)) for v in x_c]
    lo = np.zeros((n, n))
    hi = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            D = ex.interval_eval(H[i][j], box) - ex.interval_eval(H[i][j], pt)
            lo[i, j] = lo[j, i] = D.lo
            hi[i, j] = hi[j, i] = D.hi
    return IntervalMatrix(lo, hi)


LAMBDA_TIGHT_MAX_N = 12


def _eig_error(A: np.ndarray) -> float:
    """Bound on the eigenvalue error of a backward-stable symmetric eigensolver."""
    n = A.shape[0]
    return 8.0 * n * _U * float(np.linalg.norm(A, "fro"))


def _sign_vectors(n: int):
    for bits in itertools.product((1.0, -1.0), repeat=n - 1):
        yield np.array((1.0,) + bits)


def lambda_tight(B: np.ndarray) -> float:
    """-max over sign matrices S of lambda_max(S B S) (B symmetric, entrywise >= 0).

    For a centred interval Hessian difference [-B, B] this is the exact
    minimal eigenvalue over the interval matrix; S and -S give the same
    matrix, so 2^(n-1) sign patterns are enumerated.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    if B.shape != (n, n) or not np.allclose(B, B.T):
        raise ValueError("B must be a symmetric square matrix")
    if np.any(B < 0):
        raise ValueError("B must be entrywise non-negative")
    if n > LAMBDA_TIGHT_MAX_N:
        raise ValueError(f"lambda_tight enumerates 2^(n-1) sign matrices; n={n} exceeds {LAMBDA_TIGHT_MAX_N}")
    if n == 0:
        return 0.0
    best = -math.inf
    for s in _sign_vectors(n):
        A = B * np.outer(s, s)
        best = max(best, float(np.linalg.eigvalsh(A)[-1]) + _eig_error(A))
    return -best if best != 0.0 else 0.0


def lambda_tight_interval(M: IntervalMatrix) -> float:
    """min over sign vectors s of lambda_min(X - diag(s) R diag(s)), X midpoint,
    R radius of M: the exact minimal eigenvalue over the symmetric interval
    matrix (vertex theorem), rounded down.  Always between lambda_coarse(M)
    and the true minimum over M."""
    X, Y = split_mid_rad(M)
    Xc, R = X.lo, Y.hi
    n = Xc.shape[0]
    if n > LAMBDA_TIGHT_MAX_N:
        raise ValueError(f"n={n} exceeds the sign-enumeration guard {LAMBDA_TIGHT_MAX_N}")
    if n == 0:
        return 0.0
    best = math.inf
    for s in _sign_vectors(n):
        A = Xc - R * np.outer(s, s)
        best = min(best, float(np.linalg.eigvalsh(A)[0]) - _eig_error(A))
    return best


def lambda_coarse(M: IntervalMatrix) -> float:
    """lambda_min(X) - max_i sum_j r_ij with X the midpoint and r the radii of M."""
    X, Y = split_mid_rad(M)
    Xc, R = X.lo, Y.hi
    if Xc.shape[0] == 0:
        return 0.0
    lam = psd_lower_bound(Xc)
    rowsum = float(np.max(np.sum(R, axis=1)))
    rowsum = _up(rowsum * (1 + Xc.shape[0] * _U)) if rowsum else 0.0
    return _down(lam - rowsum) if rowsum else lam


@dataclass
class QuadraticTemplate:
    """f_{xc,lam}(x) = f(xc) + g.(x-xc) + 1/2 (x-xc)^T H (x-xc) + lam/2 |x-xc|^2 (+ m_c)."""

    center: Tuple[float, ...]
    value: float
    gradient: Tuple[float, ...]
    hessian: np.ndarray
    lam: float
    m_c: float = 0.0

    def poly(self, with_shift: bool = True) -> Poly:
        n = len(self.center)
        xs = [Poly.variable(n, i) - _fr(self.center[i]) for i in range(n)]
        out = Poly.constant(n, _fr(self.value) + (_fr(self.m_c) if with_shift else 0))
        for i in range(n):
            out = out + xs[i].scale(_fr(self.gradient[i]))
        for i in range(n):
            for j in range(n):
                h = _fr(self.hessian[i, j]) / 2 + (_fr(self.lam) / 2 if i == j else 0)
                if h:
                    out = out + (xs[i] * xs[j]).scale(h)
        return out

    def expr(self, with_shift: bool = True) -> Expr:
        return ex.from_poly(self.poly(with_shift))

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        D = X - np.asarray(self.center)
        q = np.einsum("ij,jk,ik->i", D, self.hessian, D)
        return (self.value + self.m_c + D @ np.asarray(self.gradient) + 0.5 * q
                + 0.5 * self.lam * np.sum(D * D, axis=1))


def quadratic_template(f: Expr, x_c: Sequence[float], lam: float, n: Optional[int] = None) -> QuadraticTemplate:
    """Second-order expansion of f at x_c with curvature shift lam (lam <= lambda)."""
    n = n if n is not None else max(len(x_c), f.max_var() + 1)
    x_c = [float(v) for v in x_c]
    g = [ex.eval_expr(gi, x_c) for gi in ex.gradient(f, n)]
    Hs = ex.hessian(f, n)
    H = np.array([[ex.eval_expr(Hs[i][j], x_c) for j in range(n)] for i in range(n)])
    return QuadraticTemplate(tuple(x_c), ex.eval_expr(f, x_c), tuple(g), H, float(lam))


def template_lambda(f: Expr, K, x_c: Sequence[float], which: str = "auto", nlift: int = 0) -> float:
    """lambda' for the template of f at x_c: 'tight' (sign enumeration),
    'coarse' (row sums) or 'auto' (tight when n + nlift <= 8).  Falls back to
    0 when the Hessian cannot be enclosed (soundness never depends on lambda'
    because the template is shifted by a certified m_c)."""
    n = len(x_c)
    if which == "auto":
        which = "tight" if n + nlift <= 8 else "coarse"
    try:
        M = hessian_difference_enclosure(f, K, x_c)
    except (DomainError, NlcertError):
        return 0.0
    if not (np.all(np.isfinite(M.lo)) and np.all(np.isfinite(M.hi))):
        return 0.0
    if which == "tight":
        return lambda_tight_interval(M)
    if which == "coarse":
        return lambda_coarse(M)
    raise ValueError(f"unknown lambda mode {which!r}")


def reduce_lift_maxplus(t_minus: Expr, K, points: Sequence[Sequence[float]], k: int = 2,
                        which: str = "auto", f: Optional[Expr] = None, tol: float = 1e-8
                        ) -> Tuple[Expr, List[QuadraticTemplate]]:
    """Replace t- by max over x_c of (f_{xc,lam} + m_c) with m_c = min_sa(t- - f_{xc,lam}).

    ``f`` is the smooth function whose expansion is used (default t- itself,
    which must then be twice differentiable).  The result is <= t- on K.
    """
    box = _box_pairs(K)
    n = len(box)
    f = t_minus if f is None else f
    if not points:
        raise ValueError("reduce_lift_maxplus needs at least one point")
    nl = count_lifting(t_minus) if t_minus.is_semialgebraic else 0
    temps = []
    for xc in points:
        lam = template_lambda(f, box, xc, which, nl)
        q = quadratic_template(f, xc, lam, n)
        q.m_c = min_sa(ex.sub(t_minus, q.expr(with_shift=False)), box, k, tol)
        if not math.isfinite(q.m_c):
            raise NlcertError("template shift could not be bounded")
        temps.append(q)
    return ex.emax(*[q.expr() for q in temps]), temps


# =============================================================================
# L1-optimal polynomial under-approximation
# =============================================================================
@dataclass
class L1Result:
    """Degree-d polynomial h <= f_sa on K with maximal integral (order-k relaxation)."""

    h: Poly  # in the original coordinates
    mu: float  # certified lower bound of inf_K h
    tightness: float  # estimate of the mean of (f_sa - h) over K
    tightness_err: float  # standard error of the quasi-Monte-Carlo part
    shift: float  # constant subtracted from the numerical h to make it rigorous
    status: str
    d: int
    k: int


def _uniform_moment(alpha: Sequence[int], fixed: Sequence[bool]) -> Fraction:
    """Moment of the uniform probability measure on [-1,1]^n (fixed coords at 0)."""
    out = Fraction(1)
    for a, fx in zip(alpha, fixed):
        if fx:
            if a:
                return Fraction(0)
        elif a % 2:
            return Fraction(0)
        else:
            out /= a + 1
    return out


def l1_underapprox(f_sa: Expr, K, d: int, k: int, tol: float = 1e-8, qmc_log2: int = 14,
                   qmc_reps: int = 8, seed: int = 0) -> L1Result:
    """Best L1 polynomial under-approximation of a semialgebraic f_sa on a box.

    Solves  max  int_K h  s.t.  f_pop - h = sum_j sigma_j g_j  over the lifted
    problem (plus a ball constraint on the lifting variables).  The h
    coefficients are eliminated from the SDP: the x-moments up to degree d
    are pinned to those of the uniform measure on K.
    """
    if not f_sa.is_semialgebraic:
        raise ValueError("l1_underapprox expects a semialgebraic function")
    box = _box_pairs(K)
    n = len(box)
    L = lift(f_sa, box, k)
    pop = L.to_pop()
    if L.nlift:
        N = L.nvars
        need = sum(max(lo * lo, hi * hi) for lo, hi in L.lift_bounds)
        ball = Poly.constant(N, need)
        for i in range(n, N):
            ball = ball - Poly.variable(N, i) ** 2
        pop = PopProblem(N, pop.objective, list(pop.constraints) + [ball], pop.box)
    pn, nm = normalize(pop)
    k = max(k, pn.k0(), (d + 1) // 2)
    rel = build_relaxation(pn, k)
    N = pn.nvars
    fixed = [lo == hi for lo, hi in box]
    hset = [a for a in mons(N, d) if not any(a[n:])]
    zero = (0,) * N
    rows_h = {rel.index[a] - 1: _uniform_moment(a[:n], fixed) for a in hset if a != zero}
    keep = [i for i in range(rel.sdp.m) if i not in rows_h]
    remap = {i: j for j, i in enumerate(keep)}
    g0 = float(_uniform_moment(zero[:n], fixed))
    sd = SdpProblem(rel.sdp.block_sizes, len(keep))
    sd.b = rel.sdp.b[keep].copy()
    for blk in range(len(rel.sdp.block_sizes)):
        Cb = g0 * rel.sdp.C[blk].copy()
        for (i, r, c), v in rel.sdp._trip[blk].items():
            if i in rows_h:
                w = float(rows_h[i]) * v
                Cb[r, c] -= w
                if r != c:
                    Cb[c, r] -= w
            else:
                sd.add_entry(remap[i], blk, r, c, v)
        sd.C[blk] = Cb
    if sd.m:
        sol = sdp_solve(sd, tol=tol)
    else:
        # every moment is pinned: the multipliers vanish at the optimum (h = f)
        zeros = [np.zeros((s, s)) for s in sd.block_sizes]
        sol = SdpSolution(zeros, np.zeros(0), [c.copy() for c in sd.C], 0.0, 0.0, 0.0, 0.0, 0.0,
                          "optimal", 0)
    # h_alpha = f_alpha - coef_alpha(sum sigma_j g_j)
    AX = rel.sdp.op_A(sol.X)
    CX = float(sum(np.vdot(C, X) for C, X in zip(rel.sdp.C, sol.X)))
    fobj = pn.objective
    hterms: Dict[Tuple[int, ...], Fraction] = {}
    for a in hset:
        coef = CX if a == zero else -float(AX[rel.index[a] - 1])
        hv = Fraction(fobj.coeff(a)) - _fr(coef)
        if hv:
            hterms[a[:n]] = hv
    h_u = Poly(n, hterms)
    # rigorous shift: certified lower bound of f_pop - h on the lifted set
    h_ext = Poly(N, {a + (0,) * (N - n): c for a, c in h_u.terms.items()})
    cert = SosCertificate(k, 0.0, (fobj.to_fraction() - h_ext), [g.to_fraction() for g in rel.multipliers],
                          rel.bases, [0.5 * (X + X.T) for X in sol.X], nm, bounded=True)
    rep = verify_certificate(cert, eps_res=1e3 * tol, raise_on_reject=False)
    shift = 0.0
    if rep.bound < 0:
        shift = -rep.bound if math.isfinite(rep.bound) else math.inf
        if not math.isfinite(shift):
            raise NlcertError("L1 under-approximation could not be certified")
        h_u = h_u - _fr(shift)
    # back to the original coordinates: u = (x - shift) / scale
    inv_shift = [-(s / c) for s, c in zip(nm.shift[:n], nm.scale[:n])]
    inv_scale = [1 / c for c in nm.scale[:n]]
    h_x = h_u.substitute_affine(inv_shift, inv_scale)
    hmin = solve_pop(PopProblem.on_box(h_x, box), k, tol=tol)
    # tightness: mean of f_sa over K (scrambled Sobol) minus the exact mean of h
    lo = np.array([float(a) for a, _ in box])
    hi = np.array([float(b) for _, b in box])
    means = []
    for rep_i in range(qmc_reps):
        U = qmc.Sobol(n, scramble=True, seed=seed + rep_i).random_base2(qmc_log2)
        vals = ex.eval_many(f_sa, lo + U * (hi - lo))
        means.append(float(np.nanmean(vals)))
    mean_f = float(np.mean(means))
    err = float(np.std(means, ddof=1) / math.sqrt(qmc_reps)) if qmc_reps > 1 else math.nan
    mean_h = float(sum(c * _uniform_moment(a, fixed) for a, c in h_u.terms.items()))
    return L1Result(h_x, hmin.bound, mean_f - mean_h, err, shift, sol.status, d, k)


__all__ = [
    "UNDER", "OVER", "Parabola", "curvature", "maxplus_parabola", "RemezResult", "remez",
    "certify_error", "UnaryPrecision", "UnaryApprox", "unary_approx", "compose_approx",
    "compose_sa_unary", "compose_nary", "compose_bop", "hessian_difference_enclosure",
    "lambda_tight", "lambda_tight_interval", "lambda_coarse", "QuadraticTemplate",
    "quadratic_template", "template_lambda", "reduce_lift_maxplus", "L1Result", "l1_underapprox",
]
