"""Expression trees: construction, parsing, evaluation, differentiation.

Variables are addressed by 0-based index (``x1`` in a problem file is index
0).  Constants are exact rationals; ``pi`` is a dedicated leaf whose numeric
value is the nearest double and whose interval value encloses pi.

Node kinds (``Expr.op``):

``const``  rational constant (``value`` is a Fraction)
``pi``     the constant pi
``var``    variable (``value`` is its index)
``add sub mul div``  binary arithmetic
``neg``    unary minus
``pow``    rational power (``value`` is the Fraction exponent)
``sqrt abs``         unary semialgebraic operations
``min max``          n-ary (n >= 2) semialgebraic operations
``func``   dictionary function (``value`` is its name)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import dictionary
from .errors import DomainError, NonDifferentiableError, ParseError
from .interval import Interval, iatan, imax, imin, ipow, isqrt, rpow, _down, _up
from .poly import Poly

BINARY = ("add", "sub", "mul", "div")
NARY = ("min", "max")
SEMIALGEBRAIC_UNARY = ("neg", "pow", "sqrt", "abs")

_PI_INTERVAL = Interval(3.141592653589793, math.nextafter(3.141592653589793, 4.0))


class Expr:
    """Immutable expression node with structural equality and cached hash."""

    __slots__ = ("op", "args", "value", "_hash", "_sa", "_poly_ok")

    def __init__(self, op: str, args: Tuple["Expr", ...] = (), value=None):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "_hash", hash((op, self.args, value)))
        sa = op != "func" and all(a._sa for a in self.args)
        object.__setattr__(self, "_sa", sa)
        object.__setattr__(self, "_poly_ok", None)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.op == other.op
            and self.value == other.value
            and self.args == other.args
        )

    def __reduce__(self):
        return (Expr, (self.op, self.args, self.value))

    # -- convenience operators -------------------------------------------
    def __add__(self, o):
        return add(self, as_expr(o))

    def __radd__(self, o):
        return add(as_expr(o), self)

    def __sub__(self, o):
        return sub(self, as_expr(o))

    def __rsub__(self, o):
        return sub(as_expr(o), self)

    def __mul__(self, o):
        return mul(self, as_expr(o))

    def __rmul__(self, o):
        return mul(as_expr(o), self)

    def __truediv__(self, o):
        return div(self, as_expr(o))

    def __rtruediv__(self, o):
        return div(as_expr(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, Fraction(p))

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    # -- queries ----------------------------------------------------------
    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def is_semialgebraic(self) -> bool:
        return self._sa

    def walk(self) -> Iterator["Expr"]:
        yield self
        for a in self.args:
            yield from a.walk()

    def size(self) -> int:
        return sum(1 for _ in self.walk())

    def max_var(self) -> int:
        """Largest variable index occurring, or -1."""
        return max((n.value for n in self.walk() if n.op == "var"), default=-1)


# -- smart constructors with constant folding ------------------------------
def const(c) -> Expr:
    if isinstance(c, float):
        c = Fraction(c)
    return Expr("const", (), Fraction(c))


def var(i: int) -> Expr:
    return Expr("var", (), int(i))


PI = Expr("pi")
ZERO = const(0)
ONE = const(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction, float)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a.is_const and a.value == 0:
        return b
    if b.is_const and b.value == 0:
        return a
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if b.is_const and b.value == 0:
        return a
    if a.is_const and a.value == 0:
        return neg(b)
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    for x, y in ((a, b), (b, a)):
        if x.is_const:
            if x.value == 0:
                return ZERO
            if x.value == 1:
                return y
            if x.value == -1:
                return neg(y)
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.is_const:
        if b.value == 0:
            raise DomainError("division by the constant 0")
        if a.is_const:
            return const(a.value / b.value)
        if b.value == 1:
            return a
    if a.is_const and a.value == 0:
        return ZERO
    return Expr("div", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def power(a: Expr, r) -> Expr:
    r = Fraction(r)
    if r == 0:
        return ONE
    if r == 1:
        return a
    if a.is_const and r.denominator == 1:
        if a.value == 0 and r < 0:
            raise DomainError("0 raised to a negative power")
        return const(a.value ** int(r))
    if r == Fraction(1, 2):
        return sqrt(a)
    if r.denominator != 1 and r.numerator != 1:
        raise ValueError("rational exponents must be integers or 1/p")
    return Expr("pow", (a,), r)


def sqrt(a: Expr) -> Expr:
    if a.is_const:
        v = a.value
        if v < 0:
            raise DomainError("sqrt of a negative constant")
        n, d = v.numerator, v.denominator
        rn, rd = math.isqrt(n), math.isqrt(d)
        if rn * rn == n and rd * rd == d:
            return const(Fraction(rn, rd))
    return Expr("sqrt", (a,))


def absolute(a: Expr) -> Expr:
    if a.is_const:
        return const(abs(a.value))
    return Expr("abs", (a,))


def emin(*xs: Expr) -> Expr:
    xs = tuple(as_expr(x) for x in xs)
    if len(xs) == 1:
        return xs[0]
    if all(x.is_const for x in xs):
        return const(min(x.value for x in xs))
    return Expr("min", xs)


def emax(*xs: Expr) -> Expr:
    xs = tuple(as_expr(x) for x in xs)
    if len(xs) == 1:
        return xs[0]
    if all(x.is_const for x in xs):
        return const(max(x.value for x in xs))
    return Expr("max", xs)


def func(name: str, a: Expr) -> Expr:
    dictionary.get(name)  # validates the name
    return Expr("func", (a,), name)


def arctan(a):
    return func("arctan", as_expr(a))


def sin(a):
    return func("sin", as_expr(a))


def cos(a):
    return func("cos", as_expr(a))


def exp(a):
    return func("exp", as_expr(a))


def log(a):
    return func("log", as_expr(a))


def from_poly(p: Poly) -> Expr:
    """Expression for a polynomial (sum of monomial products)."""
    out = ZERO
    for m, c in sorted(p.terms.items()):
        term = const(Fraction(c))
        for i, e in enumerate(m):
            if e:
                term = mul(term, power(var(i), e) if e > 1 else var(i))
        out = add(out, term)
    return out


# -- printing -------------------------------------------------------------
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _fmt_const(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    # print as a terminating decimal when possible
    d = c.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        s = format(c.numerator * 10**40 // c.denominator, "d")
        neg_ = s.startswith("-")
        s = s.lstrip("-").rjust(41, "0")
        out = (s[:-40] + "." + s[-40:]).rstrip("0")
        return ("-" if neg_ else "") + out
    return f"({c.numerator}/{c.denominator})"


def to_string(e: Expr, names: Optional[Sequence[str]] = None, prec: int = 0) -> str:
    """Readable, re-parseable rendering of an expression."""
    op = e.op
    if op == "const":
        s = _fmt_const(e.value)
        return f"({s})" if e.value < 0 and prec > 0 else s
    if op == "pi":
        return "pi"
    if op == "var":
        return names[e.value] if names else f"x{e.value + 1}"
    if op in BINARY:
        p = _PREC[op]
        left = to_string(e.args[0], names, p)
        right = to_string(e.args[1], names, p + (1 if op in ("sub", "div") else 0))
        s = f"{left} {_SYM[op]} {right}" if op in ("add", "sub") else f"{left}{_SYM[op]}{right}"
        return f"({s})" if p < prec else s
    if op == "neg":
        s = "-" + to_string(e.args[0], names, 3)
        return f"({s})" if prec > 1 else s
    if op == "pow":
        r = e.value
        rs = str(r.numerator) if r.denominator == 1 else f"({r.numerator}/{r.denominator})"
        if r.numerator < 0:
            rs = f"({rs})"
        s = f"{to_string(e.args[0], names, 5)}^{rs}"
        return f"({s})" if prec > 4 else s
    if op in ("sqrt", "abs"):
        return f"{op}({to_string(e.args[0], names)})"
    if op in NARY:
        return f"{op}(" + ", ".join(to_string(a, names) for a in e.args) + ")"
    if op == "func":
        return f"{e.value}({to_string(e.args[0], names)})"
    raise ValueError(op)


# -- polynomial view ------------------------------------------------------
def to_poly(e: Expr, nvars: int) -> Optional[Poly]:
    """Polynomial form of ``e`` if it is a polynomial expression, else None.

    ``pi`` is converted to the nearest double (callers needing rigor handle
    pi separately; see :func:`contains_pi`).
    """
    cache: Dict[Expr, Optional[Poly]] = {}

    def rec(n: Expr) -> Optional[Poly]:
        if n in cache:
            return cache[n]
        op = n.op
        out: Optional[Poly]
        if op == "const":
            out = Poly.constant(nvars, n.value)
        elif op == "pi":
            out = Poly.constant(nvars, Fraction(math.pi))
        elif op == "var":
            if n.value >= nvars:
                raise ValueError(f"variable index {n.value} >= {nvars}")
            out = Poly.variable(nvars, n.value)
        elif op in ("add", "sub", "mul"):
            a, b = rec(n.args[0]), rec(n.args[1])
            if a is None or b is None:
                out = None
            else:
                out = a + b if op == "add" else (a - b if op == "sub" else a * b)
        elif op == "div":
            a, b = rec(n.args[0]), rec(n.args[1])
            if a is None or b is None or not b.is_constant() or b.is_zero():
                out = None
            else:
                out = a.scale(1 / Fraction(b.constant_term()))
        elif op == "neg":
            a = rec(n.args[0])
            out = None if a is None else -a
        elif op == "pow":
            r = n.value
            a = rec(n.args[0])
            if a is None or r.denominator != 1 or r < 0:
                out = None
            else:
                out = a ** int(r)
        else:
            out = None
        cache[n] = out
        return out

    return rec(e)


def is_polynomial(e: Expr) -> bool:
    return to_poly(e, max(e.max_var() + 1, 1)) is not None


def contains_pi(e: Expr) -> bool:
    return any(n.op == "pi" for n in e.walk())


# -- evaluation -----------------------------------------------------------
def eval_expr(e: Expr, x: Sequence[float]) -> float:
    """Float evaluation at point ``x``; raises DomainError outside domains."""
    memo: Dict[Expr, float] = {}

    def rec(n: Expr) -> float:
        v = memo.get(n)
        if v is not None:
            return v
        op = n.op
        if op == "const":
            v = float(n.value)
        elif op == "pi":
            v = math.pi
        elif op == "var":
            v = float(x[n.value])
        elif op == "add":
            v = rec(n.args[0]) + rec(n.args[1])
        elif op == "sub":
            v = rec(n.args[0]) - rec(n.args[1])
        elif op == "mul":
            v = rec(n.args[0]) * rec(n.args[1])
        elif op == "div":
            d = rec(n.args[1])
            if d == 0:
                raise DomainError("division by zero")
            v = rec(n.args[0]) / d
        elif op == "neg":
            v = -rec(n.args[0])
        elif op == "pow":
            v = _fpow(rec(n.args[0]), n.value)
        elif op == "sqrt":
            a = rec(n.args[0])
            if a < 0:
                raise DomainError(f"sqrt of negative value {a}")
            v = math.sqrt(a)
        elif op == "abs":
            v = abs(rec(n.args[0]))
        elif op == "min":
            v = min(rec(a) for a in n.args)
        elif op == "max":
            v = max(rec(a) for a in n.args)
        elif op == "func":
            a = rec(n.args[0])
            if n.value == "log" and a <= 0:
                raise DomainError(f"log of non-positive value {a}")
            v = dictionary.get(n.value).f(a)
        else:  # pragma: no cover
            raise ValueError(op)
        memo[n] = v
        return v

    return rec(e)


# Spec-facing alias (``eval`` shadows a builtin, so it is exported as eval_expr).
evaluate = eval_expr


def _fpow(a: float, r: Fraction) -> float:
    if r.denominator == 1:
        p = int(r)
        if a == 0 and p < 0:
            raise DomainError("0 raised to a negative power")
        return a**p
    if a < 0:
        raise DomainError(f"fractional power of negative value {a}")
    return a ** float(r)


def eval_many(e: Expr, X: np.ndarray) -> np.ndarray:
    """Vectorized evaluation at the rows of X; NaN marks domain violations."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    memo: Dict[Expr, np.ndarray] = {}
    N = X.shape[0]

    def rec(n: Expr) -> np.ndarray:
        v = memo.get(n)
        if v is not None:
            return v
        op = n.op
        if op == "const":
            v = np.full(N, float(n.value))
        elif op == "pi":
            v = np.full(N, math.pi)
        elif op == "var":
            v = X[:, n.value]
        elif op == "add":
            v = rec(n.args[0]) + rec(n.args[1])
        elif op == "sub":
            v = rec(n.args[0]) - rec(n.args[1])
        elif op == "mul":
            v = rec(n.args[0]) * rec(n.args[1])
        elif op == "div":
            d = rec(n.args[1])
            v = np.where(d == 0, np.nan, rec(n.args[0]) / np.where(d == 0, 1.0, d))
        elif op == "neg":
            v = -rec(n.args[0])
        elif op == "pow":
            a = rec(n.args[0])
            r = n.value
            if r.denominator == 1:
                p = int(r)
                if p < 0:
                    v = np.where(a == 0, np.nan, 1.0 / np.where(a == 0, 1.0, a) ** (-p))
                else:
                    v = a**p
            else:
                v = np.where(a < 0, np.nan, np.abs(a) ** float(r))
        elif op == "sqrt":
            a = rec(n.args[0])
            v = np.where(a < 0, np.nan, np.sqrt(np.abs(a)))
        elif op == "abs":
            v = np.abs(rec(n.args[0]))
        elif op == "min":
            v = np.minimum.reduce([rec(a) for a in n.args])
        elif op == "max":
            v = np.maximum.reduce([rec(a) for a in n.args])
        elif op == "func":
            a = rec(n.args[0])
            if n.value == "log":
                v = np.where(a <= 0, np.nan, np.log(np.where(a <= 0, 1.0, a)))
            else:
                v = dictionary.get(n.value).f_np(a)
        else:  # pragma: no cover
            raise ValueError(op)
        memo[n] = v
        return v

    with np.errstate(all="ignore"):
        return np.asarray(rec(e), dtype=float)


# -- interval evaluation --------------------------------------------------
def interval_eval(e: Expr, box: Sequence[Interval]) -> Interval:
    """Outward enclosure of e over the box; DomainError names the node path."""
    memo: Dict[Expr, Interval] = {}

    def rec(n: Expr, path: Tuple[int, ...]) -> Interval:
        v = memo.get(n)
        if v is not None:
            return v
        op = n.op
        try:
            if op == "const":
                v = Interval.point(n.value)
            elif op == "pi":
                v = _PI_INTERVAL
            elif op == "var":
                v = box[n.value]
            elif op in BINARY:
                a = rec(n.args[0], path + (0,))
                b = rec(n.args[1], path + (1,))
                if op == "add":
                    v = a + b
                elif op == "sub":
                    v = a - b
                elif op == "mul":
                    v = ipow(a, 2) if n.args[0] == n.args[1] else a * b
                else:
                    v = a / b
            elif op == "neg":
                v = -rec(n.args[0], path + (0,))
            elif op == "pow":
                v = rpow(rec(n.args[0], path + (0,)), n.value)
            elif op == "sqrt":
                v = isqrt(rec(n.args[0], path + (0,)))
            elif op == "abs":
                v = abs(rec(n.args[0], path + (0,)))
            elif op == "min":
                v = imin(*[rec(a, path + (i,)) for i, a in enumerate(n.args)])
            elif op == "max":
                v = imax(*[rec(a, path + (i,)) for i, a in enumerate(n.args)])
            elif op == "func":
                entry = dictionary.get(n.value)
                a = rec(n.args[0], path + (0,))
                entry.check_domain(a)
                v = entry.ext_f(a)
            else:  # pragma: no cover
                raise ValueError(op)
        except DomainError as err:
            if err.path is None:
                raise DomainError(str(err), path) from None
            raise
        memo[n] = v
        return v

    return rec(e, ())


# -- differentiation ------------------------------------------------------
def differentiate(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative d e / d x_i (constant folding only)."""
    memo: Dict[Expr, Expr] = {}

    def d(n: Expr) -> Expr:
        if n in memo:
            return memo[n]
        op = n.op
        if op in ("const", "pi"):
            out = ZERO
        elif op == "var":
            out = ONE if n.value == i else ZERO
        elif op == "add":
            out = add(d(n.args[0]), d(n.args[1]))
        elif op == "sub":
            out = sub(d(n.args[0]), d(n.args[1]))
        elif op == "mul":
            u, v = n.args
            out = add(mul(d(u), v), mul(u, d(v)))
        elif op == "div":
            u, v = n.args
            du, dv = d(u), d(v)
            if dv.is_const and dv.value == 0:
                out = div(du, v)
            else:
                out = div(sub(mul(du, v), mul(u, dv)), power(v, 2))
        elif op == "neg":
            out = neg(d(n.args[0]))
        elif op == "pow":
            u = n.args[0]
            r = n.value
            du = d(u)
            if du == ZERO:
                out = ZERO
            elif r.denominator == 1:
                out = mul(mul(const(r), power(u, r - 1)), du)
            else:  # u^(1/p): derivative (1/p) * u^(1/p) / u
                out = mul(mul(const(r), div(n, u)), du)
        elif op == "sqrt":
            u = n.args[0]
            du = d(u)
            out = ZERO if du == ZERO else div(du, mul(const(2), n))
        elif op in ("abs", "min", "max"):
            if all(d(a) == ZERO for a in n.args):
                out = ZERO
            else:
                raise NonDifferentiableError(f"cannot differentiate through {op}")
        elif op == "func":
            u = n.args[0]
            du = d(u)
            if du == ZERO:
                out = ZERO
            else:
                name = n.value
                if name == "arctan":
                    inner = div(ONE, add(ONE, power(u, 2)))
                elif name == "sin":
                    inner = cos(u)
                elif name == "cos":
                    inner = neg(sin(u))
                elif name == "exp":
                    inner = n
                elif name == "log":
                    inner = div(ONE, u)
                else:  # pragma: no cover
                    raise ValueError(name)
                out = mul(inner, du)
        else:  # pragma: no cover
            raise ValueError(op)
        memo[n] = out
        return out

    return d(e)


def gradient(e: Expr, n: int) -> List[Expr]:
    return [differentiate(e, i) for i in range(n)]


def hessian(e: Expr, n: int) -> List[List[Expr]]:
    g = gradient(e, n)
    H: List[List[Optional[Expr]]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            H[i][j] = H[j][i] = differentiate(g[i], j)
    return H  # type: ignore[return-value]


# -- classification -------------------------------------------------------
@dataclass
class Classification:
    """Semialgebraic/transcendental tag per node path, plus maximal SA leaves."""

    tags: Dict[Tuple[int, ...], str]
    leaves: List[Tuple[int, ...]]

    def node(self, e: Expr, path: Tuple[int, ...]) -> Expr:
        for k in path:
            e = e.args[k]
        return e


def classify(e: Expr) -> Classification:
    tags: Dict[Tuple[int, ...], str] = {}
    leaves: List[Tuple[int, ...]] = []

    def rec(n: Expr, path: Tuple[int, ...], parent_sa: bool) -> None:
        tags[path] = "semialgebraic" if n.is_semialgebraic else "transcendental"
        if n.is_semialgebraic and not parent_sa:
            leaves.append(path)
        for k, a in enumerate(n.args):
            rec(a, path + (k,), n.is_semialgebraic)

    rec(e, (), False)
    return Classification(tags, leaves)


def transcendental_nodes(e: Expr) -> List[Tuple[Tuple[int, ...], Expr]]:
    """(path, node) for every dictionary node, in pre-order."""
    out = []

    def rec(n: Expr, path):
        if n.op == "func":
            out.append((path, n))
        for k, a in enumerate(n.args):
            rec(a, path + (k,))

    rec(e, ())
    return out


def single_use(e: Expr) -> bool:
    """True when no variable occurs twice (interval evaluation is then exact)."""
    seen = set()
    for n in e.walk():
        if n.op == "var":
            if n.value in seen:
                return False
            seen.add(n.value)
        if n.op == "func":
            return False
    return True


# -- parsing --------------------------------------------------------------
@dataclass
class Problem:
    """A parsed problem file."""

    names: List[str]
    box: List[Tuple[Fraction, Fraction]]
    objective: Expr
    constraints: List[Expr] = field(default_factory=list)
    source: str = ""

    @property
    def nvars(self) -> int:
        return len(self.names)

    def interval_box(self) -> List[Interval]:
        from .interval import box_of

        return box_of(self.box)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+) |
    (?P<nl>\n) |
    (?P<comment>\#[^\n]*) |
    (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?) |
    (?P<name>[A-Za-z_][A-Za-z_0-9]*) |
    (?P<op>>=|\*\*|[-+*/^(),;\[\]=])
    """,
    re.VERBOSE,
)

_FUNCS = {"sqrt", "abs", "min", "max", "arctan", "atan", "sin", "cos", "exp", "log"}
_KEYWORDS = {"var", "in", "objective", "constraint", "let"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                toks.append(_Tok(kind, s, line, col))
            col += len(s)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str, names: Optional[Dict[str, int]] = None):
        self.toks = _tokenize(text)
        self.i = 0
        self.names: Dict[str, int] = dict(names or {})
        self.lets: Dict[str, Expr] = {}

    # token helpers
    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return t

    def error(self, msg: str, t: Optional[_Tok] = None):
        t = t or self.peek()
        raise ParseError(msg, t.line, t.col)

    # grammar
    def problem(self) -> Problem:
        var_names: List[str] = []
        box: List[Tuple[Fraction, Fraction]] = []
        objective = None
        constraints: List[Expr] = []
        while self.peek().kind != "eof":
            t = self.next()
            if t.text == "var":
                nt = self.next()
                if nt.kind != "name" or nt.text in _KEYWORDS or nt.text in _FUNCS or nt.text == "pi":
                    self.error("expected a variable name", nt)
                if nt.text in self.names:
                    self.error(f"variable {nt.text!r} declared twice", nt)
                self.expect("in")
                self.expect("[")
                lo = self.signed_number()
                self.expect(",")
                hi = self.signed_number()
                self.expect("]")
                self.expect(";")
                if lo > hi:
                    self.error(f"empty interval for {nt.text}", nt)
                self.names[nt.text] = len(var_names)
                var_names.append(nt.text)
                box.append((lo, hi))
            elif t.text == "let":
                nt = self.next()
                if nt.kind != "name" or nt.text in self.names or nt.text in _KEYWORDS:
                    self.error("expected a fresh name after 'let'", nt)
                self.expect("=")
                self.lets[nt.text] = self.expr()
                self.expect(";")
            elif t.text == "objective":
                if objective is not None:
                    self.error("objective declared twice", t)
                objective = self.expr()
                self.expect(";")
            elif t.text == "constraint":
                lhs = self.expr()
                self.expect(">=")
                rhs = self.expr()
                self.expect(";")
                g = sub(lhs, rhs)
                if to_poly(g, max(len(var_names), 1)) is None:
                    self.error("constraints must be polynomial", t)
                constraints.append(g)
            else:
                self.error(f"unexpected {t.text!r}; expected var, let, objective or constraint", t)
        if objective is None:
            raise ParseError("missing objective")
        if not var_names:
            raise ParseError("no variables declared")
        return Problem(var_names, box, objective, constraints)

    def signed_number(self) -> Fraction:
        sign = 1
        while self.peek().text in ("-", "+"):
            if self.next().text == "-":
                sign = -sign
        t = self.next()
        if t.kind != "num":
            self.error("expected a number", t)
        return sign * Fraction(t.text)

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            r = self.term()
            e = add(e, r) if op == "+" else sub(e, r)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            r = self.unary()
            e = mul(e, r) if op == "*" else div(e, r)
        return e

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            return neg(self.unary())
        if self.peek().text == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().text in ("^", "**"):
            t = self.next()
            ex = self.unary()
            if not ex.is_const:
                self.error("exponents must be constant", t)
            try:
                return power(base, ex.value)
            except ValueError as err:
                self.error(str(err), t)
        return base

    def atom(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            return const(Fraction(t.text))
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            if t.text == "pi":
                return PI
            if t.text in _FUNCS:
                self.expect("(")
                args = [self.expr()]
                while self.peek().text == ",":
                    self.next()
                    args.append(self.expr())
                self.expect(")")
                return self.call(t, args)
            if t.text in self.lets:
                return self.lets[t.text]
            if t.text in self.names:
                return var(self.names[t.text])
            self.error(f"unknown identifier {t.text!r}", t)
        self.error(f"unexpected token {t.text or 'end of input'!r}", t)

    def call(self, t: _Tok, args: List[Expr]) -> Expr:
        name = "arctan" if t.text == "atan" else t.text
        if name in ("min", "max"):
            if len(args) < 2:
                self.error(f"{name} needs at least two arguments", t)
            return emin(*args) if name == "min" else emax(*args)
        if len(args) != 1:
            self.error(f"{name} takes one argument", t)
        a = args[0]
        if name == "sqrt":
            return sqrt(a)
        if name == "abs":
            return absolute(a)
        return func(name, a)


def parse(text: str) -> Problem:
    """Parse a problem source (see the grammar in the README)."""
    p = _Parser(text).problem()
    p.source = text
    n = p.nvars
    for e in [p.objective] + p.constraints:
        if e.max_var() >= n:
            raise ParseError("dimension mismatch: variable index beyond declarations")
    return p


def parse_expr(text: str, names: Optional[Sequence[str]] = None) -> Expr:
    """Parse a bare expression; names default to x1, x2, ... ."""
    mapping: Dict[str, int] = {}
    if names is not None:
        mapping = {s: i for i, s in enumerate(names)}
    parser = _Parser(text, mapping)
    if names is None:
        # accept x<k> for any k
        for t in parser.toks:
            if t.kind == "name" and re.fullmatch(r"x\d+", t.text) and int(t.text[1:]) >= 1:
                parser.names[t.text] = int(t.text[1:]) - 1
    e = parser.expr()
    if parser.peek().kind != "eof":
        parser.error(f"trailing input {parser.peek().text!r}")
    return e


def parse_file(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
