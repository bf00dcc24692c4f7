"""Outward-rounded interval arithmetic and symmetric interval matrices.

Rounding is directed by nudging each computed endpoint one ulp outward with
:func:`math.nextafter` (two ulps for library transcendental functions).  IEEE
basic operations are correctly rounded, so the nudged endpoints bracket the
exact result without touching the global rounding mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import DomainError

_INF = math.inf


def _down(x: float, ulps: int = 1) -> float:
    for _ in range(ulps):
        if x == -_INF or math.isnan(x):
            return x
        x = math.nextafter(x, -_INF)
    return x


def _up(x: float, ulps: int = 1) -> float:
    for _ in range(ulps):
        if x == _INF or math.isnan(x):
            return x
        x = math.nextafter(x, _INF)
    return x


def _frac_lo(q) -> float:
    """Largest float <= q for a rational (or float) q."""
    f = float(q)
    if isinstance(q, Fraction) and Fraction(f) > q:
        f = math.nextafter(f, -_INF)
    return f


def _frac_hi(q) -> float:
    f = float(q)
    if isinstance(q, Fraction) and Fraction(f) < q:
        f = math.nextafter(f, _INF)
    return f


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] of extended reals."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    # -- constructors -----------------------------------------------------
    @staticmethod
    def point(x) -> "Interval":
        """Tightest float interval containing the number ``x`` (exact if Fraction)."""
        if isinstance(x, Fraction):
            return Interval(_frac_lo(x), _frac_hi(x))
        x = float(x)
        return Interval(x, x)

    @staticmethod
    def hull(values: Iterable[float]) -> "Interval":
        vals = list(values)
        return Interval(min(vals), max(vals))

    @staticmethod
    def entire() -> "Interval":
        return Interval(-_INF, _INF)

    # -- queries ----------------------------------------------------------
    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if math.isinf(self.lo) or math.isinf(self.hi):
            return 0.0 if self.lo == -self.hi else (self.lo if math.isinf(self.hi) else self.hi)
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            return Fraction(self.lo) <= x <= Fraction(self.hi) if math.isfinite(self.lo) and math.isfinite(self.hi) else (
                (self.lo == -_INF or Fraction(self.lo) <= x) and (self.hi == _INF or x <= Fraction(self.hi))
            )
        return self.lo <= x <= self.hi

    __contains__ = contains

    def is_point(self) -> bool:
        return self.lo == self.hi

    def union(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def intersect(self, other: "Interval") -> "Interval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def __iter__(self):
        yield self.lo
        yield self.hi

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"

    # -- arithmetic -------------------------------------------------------
    @staticmethod
    def _wrap(x) -> "Interval":
        return x if isinstance(x, Interval) else Interval.point(x)

    def __add__(self, other) -> "Interval":
        o = Interval._wrap(other)
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other) -> "Interval":
        o = Interval._wrap(other)
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __rsub__(self, other) -> "Interval":
        return Interval._wrap(other) - self

    def __mul__(self, other) -> "Interval":
        o = Interval._wrap(other)
        los, his = [], []
        for a in (self.lo, self.hi):
            for b in (o.lo, o.hi):
                if a == 0 or b == 0:
                    los.append(0.0)
                    his.append(0.0)
                else:
                    p = a * b
                    los.append(_down(p))
                    his.append(_up(p))
        return Interval(min(los), max(his))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        o = Interval._wrap(other)
        if o.lo <= 0 <= o.hi:
            raise DomainError(f"division by interval {o} containing 0")
        quots = [a / b for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        return Interval(_down(min(quots)), _up(max(quots)))

    def __rtruediv__(self, other) -> "Interval":
        return Interval._wrap(other) / self

    def __pow__(self, p: int) -> "Interval":
        if not isinstance(p, int):
            raise TypeError("use ipow/rpow for non-integer exponents")
        return ipow(self, p)

    def __abs__(self) -> "Interval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))


def ipow(a: Interval, p: int) -> Interval:
    """Integer power with the even-power dependency handled exactly."""
    if p == 0:
        return Interval(1.0, 1.0)
    if p < 0:
        return Interval(1.0, 1.0) / ipow(a, -p)
    if p == 1:
        return a
    lo, hi = a.lo, a.hi
    if p % 2 == 0:
        if lo >= 0:
            return Interval(_down(_pow_lo(lo, p)), _up(_pow_hi(hi, p)))
        if hi <= 0:
            return Interval(_down(_pow_lo(-hi, p)), _up(_pow_hi(-lo, p)))
        return Interval(0.0, _up(_pow_hi(max(-lo, hi), p)))
    return Interval(_down(_signed_pow(lo, p), p), _up(_signed_pow(hi, p), p))


def _pow_lo(x: float, p: int) -> float:
    return _down(x**p, p)


def _pow_hi(x: float, p: int) -> float:
    return _up(x**p, p)


def _signed_pow(x: float, p: int) -> float:
    return math.copysign(abs(x) ** p, x) if math.isfinite(x) else x


def isqrt(a: Interval) -> Interval:
    if a.lo < 0:
        raise DomainError(f"sqrt of interval {a} with negative part")
    return Interval(max(0.0, _down(math.sqrt(a.lo))), _up(math.sqrt(a.hi)))


def iroot(a: Interval, p: int) -> Interval:
    """Principal p-th root (p >= 2) of a nonnegative interval."""
    if p == 2:
        return isqrt(a)
    if a.lo < 0:
        raise DomainError(f"{p}-th root of interval {a} with negative part")
    return Interval(max(0.0, _down(a.lo ** (1.0 / p), 4)), _up(a.hi ** (1.0 / p), 4))


def rpow(a: Interval, r: Fraction) -> Interval:
    """Rational power a^r, r = p/q with q >= 1; requires a >= 0 unless q == 1."""
    r = Fraction(r)
    if r.denominator == 1:
        return ipow(a, int(r))
    base = iroot(a, r.denominator)
    return ipow(base, r.numerator)


def imin(*xs: Interval) -> Interval:
    return Interval(min(x.lo for x in xs), min(x.hi for x in xs))


def imax(*xs: Interval) -> Interval:
    return Interval(max(x.lo for x in xs), max(x.hi for x in xs))


# -- transcendental extensions --------------------------------------------
_TRANS_ULPS = 2


def _mono_inc(f, a: Interval) -> Interval:
    return Interval(_down(f(a.lo), _TRANS_ULPS), _up(f(a.hi), _TRANS_ULPS))


def iexp(a: Interval) -> Interval:
    lo = 0.0 if a.lo == -_INF else max(0.0, _down(math.exp(a.lo), _TRANS_ULPS))
    try:
        hi = _up(math.exp(a.hi), _TRANS_ULPS)
    except OverflowError:
        hi = _INF
    return Interval(lo, hi)


def ilog(a: Interval) -> Interval:
    if a.lo <= 0:
        raise DomainError(f"log of interval {a} not strictly positive")
    return _mono_inc(math.log, a)


def iatan(a: Interval) -> Interval:
    lo = -math.pi / 2 if a.lo == -_INF else math.atan(a.lo)
    hi = math.pi / 2 if a.hi == _INF else math.atan(a.hi)
    return Interval(max(_down(lo, _TRANS_ULPS), -1.5707963267948968),
                    min(_up(hi, _TRANS_ULPS), 1.5707963267948968))


# Enclosures of pi used when locating critical points of sin/cos.
_PI_LO = 3.141592653589793
_PI_HI = math.nextafter(_PI_LO, 4.0)


def _periodic_extremes(a: Interval, shift: float) -> Tuple[bool, bool]:
    """Does [a] contain a point shift + 2k*pi (max) / shift + pi + 2k*pi (min)?

    ``shift`` is the location of the maximum within the period.  The test is
    conservative: near-boundary cases report containment.
    """
    slack = 1e-12 * max(1.0, abs(a.lo), abs(a.hi))
    has_max = has_min = False
    for target, flag in ((shift, "max"), (shift + math.pi, "min")):
        kmin = math.floor((a.lo - target - slack) / (2 * math.pi)) - 1
        kmax = math.ceil((a.hi - target + slack) / (2 * math.pi)) + 1
        for k in range(kmin, kmax + 1):
            c = target + 2 * math.pi * k
            if a.lo - slack <= c <= a.hi + slack:
                if flag == "max":
                    has_max = True
                else:
                    has_min = True
    return has_max, has_min


def _trig(a: Interval, f, shift: float) -> Interval:
    if not (math.isfinite(a.lo) and math.isfinite(a.hi)) or a.width >= 2 * _PI_HI:
        return Interval(-1.0, 1.0)
    has_max, has_min = _periodic_extremes(a, shift)
    v1, v2 = f(a.lo), f(a.hi)
    lo = -1.0 if has_min else max(-1.0, _down(min(v1, v2), _TRANS_ULPS))
    hi = 1.0 if has_max else min(1.0, _up(max(v1, v2), _TRANS_ULPS))
    return Interval(lo, hi)


def isin(a: Interval) -> Interval:
    return _trig(a, math.sin, math.pi / 2)


def icos(a: Interval) -> Interval:
    return _trig(a, math.cos, 0.0)


# -- interval matrices ----------------------------------------------------
class IntervalMatrix:
    """Symmetric matrix of intervals stored as two float arrays lo <= hi."""

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[0] != lo.shape[1]:
            raise ValueError("IntervalMatrix needs two square arrays of equal shape")
        if np.any(lo > hi):
            raise ValueError("IntervalMatrix requires lo <= hi entrywise")
        if not (np.array_equal(lo, lo.T) and np.array_equal(hi, hi.T)):
            raise ValueError("IntervalMatrix must be symmetric")
        self.lo = lo
        self.hi = hi

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[Interval]]) -> "IntervalMatrix":
        lo = np.array([[e.lo for e in row] for row in entries])
        hi = np.array([[e.hi for e in row] for row in entries])
        return cls(lo, hi)

    def __getitem__(self, ij) -> Interval:
        i, j = ij
        return Interval(float(self.lo[i, j]), float(self.hi[i, j]))

    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def rad(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def magnitude(self) -> np.ndarray:
        """B_ij = max(|lo_ij|, |hi_ij|)."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def contains(self, other) -> bool:
        if isinstance(other, IntervalMatrix):
            return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))
        A = np.asarray(other, dtype=float)
        return bool(np.all(self.lo <= A) and np.all(A <= self.hi))

    def __add__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        lo = np.nextafter(self.lo + other.lo, -np.inf)
        hi = np.nextafter(self.hi + other.hi, np.inf)
        return IntervalMatrix(lo, hi)

    def __repr__(self) -> str:
        return f"IntervalMatrix(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def split_mid_rad(M: IntervalMatrix) -> Tuple[IntervalMatrix, IntervalMatrix]:
    """Split M = X + Y with X the (degenerate) midpoint, Y the centered radius.

    Midpoints are rounded to nearest; radii are rounded up after measuring the
    distance to both endpoints, so that X + Y contains M entrywise.
    """
    mid = 0.5 * (M.lo + M.hi)
    r = np.maximum(mid - M.lo, M.hi - mid)
    r = np.where(r > 0, np.nextafter(r, np.inf), r)
    # guard: recompute containment with outward addition
    X = IntervalMatrix(mid, mid)
    Y = IntervalMatrix(-r, r)
    return X, Y


def box_of(bounds: Sequence[Tuple]) -> list:
    """Convert (lo, hi) pairs (floats or Fractions) to outward Interval list."""
    return [Interval(_frac_lo(lo), _frac_hi(hi)) for lo, hi in bounds]


def interval_eval(e, box):
    """Enclosure of the range of expression ``e`` over ``box`` (list of Interval)."""
    from .expr import interval_eval as _impl

    return _impl(e, box)
