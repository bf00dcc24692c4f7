"""Univariate transcendental functions admitted as tree nodes.

Each entry carries closed-form first and second derivatives, numpy
vectorized versions, and sound interval extensions of all three.  Where a
natural interval extension would overestimate (arctan'' has two occurrences
of x), the range is obtained by splitting at the critical points of the
function being enclosed and taking the hull of point enclosures.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from .interval import (
    Interval,
    iatan,
    icos,
    iexp,
    ilog,
    ipow,
    isin,
)

Ext = Callable[[Interval], Interval]

_PI_LO = 3.141592653589793
_PI_HI = math.nextafter(_PI_LO, 4.0)


def _hull_at(points: Sequence[float], g: Ext, I: Interval) -> Interval:
    """Hull of enclosures of g at the endpoints of I and at given interior points.

    Valid when g is monotone between consecutive points of the list.  Each
    interior point is enclosed in a tiny interval so irrational critical
    points (like 1/sqrt(3)) are covered.
    """
    encl = [g(Interval(I.lo, I.lo)), g(Interval(I.hi, I.hi))]
    for c in points:
        d = 1e-12 * max(1.0, abs(c))
        if I.lo - d <= c <= I.hi + d:
            lo, hi = max(I.lo, c - d), min(I.hi, c + d)
            if lo <= hi:
                encl.append(g(Interval(lo, hi)))
    return Interval(min(e.lo for e in encl), max(e.hi for e in encl))


@dataclass(frozen=True)
class DictionaryEntry:
    """A univariate function of the dictionary with its calculus oracles."""

    name: str
    f: Callable[[float], float]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    f_np: Callable[[np.ndarray], np.ndarray]
    d1_np: Callable[[np.ndarray], np.ndarray]
    d2_np: Callable[[np.ndarray], np.ndarray]
    ext_f: Ext
    ext_d1: Ext
    ext_d2: Ext
    domain: Interval = field(default_factory=Interval.entire)
    # Locations (within one period for periodic functions) of local maxima and
    # minima of f; used to split non-monotone pieces.
    period: float | None = None
    max_shift: float | None = None

    def monotonicity(self, I: Interval) -> str:
        """'increasing', 'decreasing' or 'unknown' on I (sound)."""
        d = self.ext_d1(I)
        if d.lo >= 0:
            return "increasing"
        if d.hi <= 0:
            return "decreasing"
        if self.period is not None and not self._critical_inside(I):
            # no critical point in the interior: the sign of f' is constant,
            # read it off at the midpoint
            m = self.ext_d1(Interval(I.mid, I.mid))
            if m.lo > 0:
                return "increasing"
            if m.hi < 0:
                return "decreasing"
        return "unknown"

    def _critical_inside(self, I: Interval) -> bool:
        """Whether a zero of f' may lie in the open interval (lo, hi).

        Critical points of the periodic entries are j * pi / 2 with j of a
        fixed parity; each is enclosed using an interval for pi.
        """
        parity = int(round(self.max_shift / (math.pi / 2))) % 2
        half_pi_hi = _PI_HI / 2
        j0 = math.floor(I.lo / half_pi_hi) - 2
        j1 = math.ceil(I.hi / half_pi_hi) + 2
        for j in range(j0, j1 + 1):
            if j % 2 != parity:
                continue
            a, b = j * Fraction(_PI_LO) / 2, j * Fraction(_PI_HI) / 2  # exact
            if max(a, b) > Fraction(I.lo) and min(a, b) < Fraction(I.hi):
                return True
        return False

    def extrema(self, I: Interval) -> List[Tuple[float, float, str]]:
        """Interior local extrema (x, value, 'max'|'min') of f on I.

        Only periodic entries have any; values are exact (+1 / -1).
        """
        if self.period is None:
            return []
        out = []
        for shift, val, kind in ((self.max_shift, 1.0, "max"),
                                 (self.max_shift + self.period / 2, -1.0, "min")):
            k0 = math.floor((I.lo - shift) / self.period) - 1
            k1 = math.ceil((I.hi - shift) / self.period) + 1
            for k in range(k0, k1 + 1):
                c = shift + self.period * k
                d = 1e-12 * max(1.0, abs(c))  # float c may sit just outside I
                if I.lo - d <= c <= I.hi + d:
                    out.append((c, val, kind))
        return sorted(out)

    def check_domain(self, I: Interval) -> None:
        from .errors import DomainError

        if I.lo < self.domain.lo or I.hi > self.domain.hi:
            raise DomainError(f"{self.name} undefined on {I}")


def _atan_d1_ext(I: Interval) -> Interval:
    return Interval(1.0, 1.0) / (Interval(1.0, 1.0) + ipow(I, 2))


def _atan_d2_natural(I: Interval) -> Interval:
    return Interval(-2.0, -2.0) * I / ipow(Interval(1.0, 1.0) + ipow(I, 2), 2)


_INV_SQRT3 = 1.0 / math.sqrt(3.0)


def _atan_d2_ext(I: Interval) -> Interval:
    # d/dx [-2x/(1+x^2)^2] = (6x^2-2)/(1+x^2)^3 vanishes at +-1/sqrt(3)
    return _hull_at([-_INV_SQRT3, _INV_SQRT3], _atan_d2_natural, I)


def _neg(ext: Ext) -> Ext:
    return lambda I: -ext(I)


def _log_d1_ext(I: Interval) -> Interval:
    if I.lo <= 0:
        from .errors import DomainError

        raise DomainError(f"log' undefined on {I}")
    return Interval(1.0, 1.0) / I


def _log_d2_ext(I: Interval) -> Interval:
    return -(Interval(1.0, 1.0) / ipow(I, 2))


ARCTAN = DictionaryEntry(
    name="arctan",
    f=math.atan,
    d1=lambda x: 1.0 / (1.0 + x * x),
    d2=lambda x: -2.0 * x / (1.0 + x * x) ** 2,
    f_np=np.arctan,
    d1_np=lambda x: 1.0 / (1.0 + x * x),
    d2_np=lambda x: -2.0 * x / (1.0 + x * x) ** 2,
    ext_f=iatan,
    ext_d1=_atan_d1_ext,
    ext_d2=_atan_d2_ext,
)

SIN = DictionaryEntry(
    name="sin",
    f=math.sin,
    d1=math.cos,
    d2=lambda x: -math.sin(x),
    f_np=np.sin,
    d1_np=np.cos,
    d2_np=lambda x: -np.sin(x),
    ext_f=isin,
    ext_d1=icos,
    ext_d2=_neg(isin),
    period=2 * math.pi,
    max_shift=math.pi / 2,
)

COS = DictionaryEntry(
    name="cos",
    f=math.cos,
    d1=lambda x: -math.sin(x),
    d2=lambda x: -math.cos(x),
    f_np=np.cos,
    d1_np=lambda x: -np.sin(x),
    d2_np=lambda x: -np.cos(x),
    ext_f=icos,
    ext_d1=_neg(isin),
    ext_d2=_neg(icos),
    period=2 * math.pi,
    max_shift=0.0,
)

EXP = DictionaryEntry(
    name="exp",
    f=math.exp,
    d1=math.exp,
    d2=math.exp,
    f_np=np.exp,
    d1_np=np.exp,
    d2_np=np.exp,
    ext_f=iexp,
    ext_d1=iexp,
    ext_d2=iexp,
)

LOG = DictionaryEntry(
    name="log",
    f=math.log,
    d1=lambda x: 1.0 / x,
    d2=lambda x: -1.0 / (x * x),
    f_np=np.log,
    d1_np=lambda x: 1.0 / x,
    d2_np=lambda x: -1.0 / (x * x),
    ext_f=ilog,
    ext_d1=_log_d1_ext,
    ext_d2=_log_d2_ext,
    domain=Interval(math.nextafter(0.0, 1.0), math.inf),
)

DICTIONARY: Dict[str, DictionaryEntry] = {e.name: e for e in (ARCTAN, SIN, COS, EXP, LOG)}


def get(name: str) -> DictionaryEntry:
    try:
        return DICTIONARY[name]
    except KeyError:
        raise KeyError(f"unknown dictionary function {name!r}") from None


__all__ = ["DictionaryEntry", "DICTIONARY", "get", "ARCTAN", "SIN", "COS", "EXP", "LOG"]
