"""Sparse multivariate polynomials, monomial bases and unit-box moments.

A polynomial is a map from exponent tuples to coefficients.  Coefficients are
either :class:`fractions.Fraction` (exact path, used for problem data and
certificate checking) or ``float`` (numeric path, used when compiling SDPs).
Mixing the two follows Python's usual promotion rules (the result is float).
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

Monomial = Tuple[int, ...]
Coeff = Union[Fraction, float, int]


def mons(n: int, d: int) -> List[Monomial]:
    """All exponent vectors of ``n`` variables with total degree ``<= d``.

    Graded-lex order: by degree first, then lexicographically with ``x1``
    dominant, e.g. ``mons(2, 2) = [1, x1, x2, x1^2, x1x2, x2^2]``.
    """
    if n < 1 or d < 0:
        raise ValueError("mons requires n >= 1 and d >= 0")
    out: List[Monomial] = []
    for deg in range(d + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def n_mons(n: int, d: int) -> int:
    """Number of monomials of degree <= d in n variables, C(n+d, d)."""
    return comb(n + d, d)


def unit_box_moment(alpha: Sequence[int]) -> Fraction:
    """Exact integral of x^alpha over [0,1]^n (Lebesgue measure, total mass 1)."""
    out = Fraction(1)
    for a in alpha:
        out /= a + 1
    return out


def mon_add(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def _is_zero(c) -> bool:
    return c == 0


class Poly:
    """Sparse polynomial in ``nvars`` variables.

    >>> x = Poly.variable(2, 0); y = Poly.variable(2, 1)
    >>> sorted(((x + y) ** 2).terms.values())
    [Fraction(1, 1), Fraction(1, 1), Fraction(2, 1)]
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Monomial, Coeff] | None = None):
        self.nvars = int(nvars)
        clean: Dict[Monomial, Coeff] = {}
        if terms:
            for m, c in terms.items():
                if len(m) != self.nvars:
                    raise ValueError("monomial length does not match nvars")
                if not _is_zero(c):
                    clean[tuple(m)] = c
        self.terms = clean

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, c: Coeff) -> "Poly":
        if isinstance(c, int):
            c = Fraction(c)
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @classmethod
    def monomial(cls, alpha: Monomial, c: Coeff = Fraction(1)) -> "Poly":
        return cls(len(alpha), {tuple(alpha): c})

    # -- basic queries ----------------------------------------------------
    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self.terms)

    def constant_term(self) -> Coeff:
        return self.terms.get((0,) * self.nvars, Fraction(0))

    def coeff(self, m: Monomial) -> Coeff:
        return self.terms.get(tuple(m), Fraction(0))

    def variables(self) -> List[int]:
        """Indices of variables that actually occur."""
        used = set()
        for m in self.terms:
            used.update(i for i, e in enumerate(m) if e)
        return sorted(used)

    def l1_norm(self) -> Coeff:
        return sum((abs(c) for c in self.terms.values()), Fraction(0))

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"Poly({self.nvars}, {self.to_string()})"

    def to_string(self, names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        names = names or [f"x{i + 1}" for i in range(self.nvars)]
        parts = []
        for m in sorted(self.terms, key=lambda a: (-sum(a), [-e for e in a])):
            c = self.terms[m]
            mono = "*".join(
                names[i] + (f"^{e}" if e > 1 else "") for i, e in enumerate(m) if e
            )
            cs = str(c)
            parts.append(f"{cs}*{mono}" if mono else cs)
        return " + ".join(parts)

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Poly") -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"dimension mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, float, Fraction)):
            return Poly.constant(self.nvars, other)
        return NotImplemented

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, float, Fraction)):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Monomial, Coeff] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mon_add(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def scale(self, c: Coeff) -> "Poly":
        if _is_zero(c):
            return Poly(self.nvars)
        return Poly(self.nvars, {m: v * c for m, v in self.terms.items()})

    def __pow__(self, p: int) -> "Poly":
        if not isinstance(p, int) or p < 0:
            raise ValueError("Poly powers must be non-negative integers")
        result = Poly.constant(self.nvars, 1)
        base = self
        while p:
            if p & 1:
                result = result * base
            base = base * base if p > 1 else base
            p >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- structural transforms -------------------------------------------
    def extend(self, nvars: int, positions: Sequence[int] | None = None) -> "Poly":
        """Embed into ``nvars`` variables; variable i goes to ``positions[i]``."""
        if positions is None:
            positions = list(range(self.nvars))
        out = {}
        for m, c in self.terms.items():
            e = [0] * nvars
            for i, a in enumerate(m):
                if a:
                    e[positions[i]] += a
            out[tuple(e)] = c
        return Poly(nvars, out)

    def compose(self, subs: Sequence["Poly"]) -> "Poly":
        """Substitute polynomial ``subs[i]`` for variable ``i``."""
        if len(subs) != self.nvars:
            raise ValueError("need one substitution per variable")
        if not subs:
            return Poly(0, dict(self.terms))
        target = subs[0].nvars
        cache: Dict[Tuple[int, int], Poly] = {}

        def power(i: int, e: int) -> Poly:
            key = (i, e)
            if key not in cache:
                cache[key] = Poly.constant(target, 1) if e == 0 else power(i, e - 1) * subs[i]
            return cache[key]

        acc: Dict[Monomial, Coeff] = {}
        for m, c in self.terms.items():
            term = Poly.constant(target, c)
            for i, e in enumerate(m):
                if e:
                    term = term * power(i, e)
            for mm, cc in term.terms.items():
                acc[mm] = acc.get(mm, 0) + cc
        return Poly(target, acc)

    def substitute_affine(self, shift: Sequence[Coeff], scale: Sequence[Coeff]) -> "Poly":
        """Return p(shift + scale * y) as a polynomial in y."""
        n = self.nvars
        subs = []
        for i in range(n):
            e0 = (0,) * n
            ei = tuple(1 if j == i else 0 for j in range(n))
            subs.append(Poly(n, {e0: shift[i], ei: scale[i]}))
        return self.compose(subs)

    def to_float(self) -> "Poly":
        return Poly(self.nvars, {m: float(c) for m, c in self.terms.items()})

    def to_fraction(self) -> "Poly":
        return Poly(self.nvars, {m: Fraction(c) for m, c in self.terms.items()})

    # -- evaluation -------------------------------------------------------
    def __call__(self, x: Sequence[Coeff]) -> Coeff:
        return self.evaluate(x)

    def evaluate(self, x: Sequence[Coeff]) -> Coeff:
        total = 0
        for m, c in self.terms.items():
            t = c
            for xi, e in zip(x, m):
                if e:
                    t = t * xi**e
            total = total + t
        return total

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Exponent matrix (T x n) and float coefficient vector (T,)."""
        if not self.terms:
            return np.zeros((0, self.nvars), dtype=int), np.zeros(0)
        ms = list(self.terms)
        E = np.array(ms, dtype=int).reshape(len(ms), self.nvars)
        c = np.array([float(self.terms[m]) for m in ms])
        return E, c

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation at the rows of ``X`` (N x n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        E, c = self.to_arrays()
        if len(c) == 0:
            return np.zeros(X.shape[0])
        out = np.zeros(X.shape[0])
        for t in range(len(c)):
            v = np.full(X.shape[0], c[t])
            for i in np.nonzero(E[t])[0]:
                v = v * X[:, i] ** E[t, i]
            out += v
        return out

    def items(self) -> Iterable[Tuple[Monomial, Coeff]]:
        return self.terms.items()

    # -- integration ------------------------------------------------------
    def integrate_unit_box(self) -> Coeff:
        """Exact integral over [0,1]^n (exact when coefficients are rational)."""
        total = Fraction(0)
        for m, c in self.terms.items():
            total = total + c * unit_box_moment(m)
        return total
