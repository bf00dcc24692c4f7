"""Basic semialgebraic lifting.

A semialgebraic expression is re-encoded as a polynomial optimization problem
in the original variables x and auxiliary lifting variables z.  Every
non-polynomial node gets one lifting variable whose graph is described by
polynomial (in)equalities:

    sqrt(u)      z^2 = u,            z >= 0
    u^(1/p)      z^p = u,            z >= 0
    u^(-p)       z * u^p = 1
    u / v        z * v = u           (v bounded away from 0)
    |u|          z^2 = u^2,          z >= 0
    max(u, v)    z >= u, z >= v,     (z - u)(z - v) = 0
    min(u, v)    z <= u, z <= v,     (z - u)(z - v) = 0

n-ary min/max are lifted as chains of binary ones.  Identical subtrees share
one lifting variable.  Every lifting variable receives a finite bound
interval (needed to keep the problem Archimedean), computed from interval
arithmetic intersected with auxiliary SOS bounds on the operands.
Sign conditions z >= 0 are carried by the bound interval of z (its lower end
is >= 0), so they need no separate constraint.  Equalities are encoded as
pairs of opposite inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, NlcertError
from .expr import Expr, contains_pi, eval_expr, interval_eval, single_use
from .interval import Interval, _down, box_of, imax, imin, iroot, isqrt
from .poly import Poly
from .sos import PopProblem, PopResult, solve_pop

Box = List[Tuple[Fraction, Fraction]]

# Relative margin applied to bounds of expressions involving pi, whose
# polynomial form uses the nearest double to pi.
PI_MARGIN = 1e-10
# Radicands whose lower bound is above -RADICAND_SLACK * (1 + |hi|) are clamped to 0.
RADICAND_SLACK = 1e-9
# Divisors must exclude 0 by this fraction of their enclosure width.
DIVISOR_MARGIN = 1e-9


def _is_lift_node(n: Expr) -> bool:
    op = n.op
    if op in ("sqrt", "abs"):
        return True
    if op == "pow":
        return n.value.denominator != 1 or n.value < 0
    if op == "div":
        return not (n.args[1].is_const or n.args[1].op == "pi")
    if op in ("min", "max"):
        return True
    if op == "func":
        raise ValueError("transcendental nodes cannot be lifted; approximate them first")
    return False


def count_lifting(e: Expr) -> int:
    """Number of lifting variables :func:`lift` introduces for ``e``."""
    seen = set()
    total = 0
    for n in e.walk():
        if n in seen:
            continue
        seen.add(n)
        if _is_lift_node(n):
            total += len(n.args) - 1 if n.op in ("min", "max") else 1
    return total


@dataclass
class LiftedPop:
    """Lifted problem over (x, z) in R^(n+p).

    ``equalities`` hold as h = 0 and ``inequalities`` as h >= 0 on the graph;
    ``backmap[i]`` is the expression that z_i stands for.
    """

    n: int
    box: Box
    lift_bounds: Box
    objective: Poly
    equalities: List[Poly] = field(default_factory=list)
    inequalities: List[Poly] = field(default_factory=list)
    backmap: List[Expr] = field(default_factory=list)

    @property
    def nlift(self) -> int:
        return len(self.backmap)

    @property
    def nvars(self) -> int:
        return self.n + self.nlift

    def full_box(self) -> Box:
        return list(self.box) + list(self.lift_bounds)

    def constraints(self) -> List[Poly]:
        """All constraints h_l >= 0 in listing order: for each lifting variable
        its bounds z - m, M - z, then equalities as +h, -h pairs, then the
        remaining inequalities."""
        N = self.nvars
        out: List[Poly] = []
        for i, (lo, hi) in enumerate(self.lift_bounds):
            z = Poly.variable(N, self.n + i)
            out += [z - lo, Poly.constant(N, hi) - z]
        for h in self.equalities:
            out += [h, -h]
        out += list(self.inequalities)
        return out

    def to_pop(self, encoding: str = "quadratic") -> PopProblem:
        gs: List[Poly] = []
        for h in self.equalities:
            gs += [h, -h]
        gs += list(self.inequalities)
        return PopProblem.on_box(self.objective, self.full_box(), gs, encoding=encoding)

    def lift_point(self, x: Sequence[float]) -> np.ndarray:
        """(x, z(x)) with z evaluated through the back-map."""
        x = list(map(float, x))
        return np.array(x + [eval_expr(b, x) for b in self.backmap])


@dataclass
class LiftOptions:
    """Controls how lifting-variable bounds are computed."""

    sub_order: Optional[int] = None  # order of the bound subproblems (default max(k0, k-1))
    use_sos_bounds: bool = True
    tol: float = 1e-8


def _frac_interval(I: Interval) -> Tuple[Fraction, Fraction]:
    return Fraction(I.lo), Fraction(I.hi)


# Bounds of lifting variables are pure functions of their subproblem; the
# same subexpressions recur when a function is bounded from both sides or
# inside larger expressions, so solved subproblems are memoized.
_SUB_BOUNDS: Dict[tuple, Tuple[float, float]] = {}
_SUB_BOUNDS_MAX = 512


class _Lifter:
    def __init__(self, e: Expr, box: Box, k: int, known: Dict[Expr, Interval], opts: LiftOptions):
        self.n = len(box)
        self.box = [(Fraction(lo), Fraction(hi)) for lo, hi in box]
        self.ibox = box_of(self.box)
        self.k = k
        self.known = known
        self.opts = opts
        self.N = self.n + count_lifting(e)
        self.polys: Dict[Expr, Poly] = {}
        self.bounds: Dict[Expr, Interval] = {}
        self.lift_bounds: Box = []
        self.backmap: List[Expr] = []
        self.eqs: List[Poly] = []
        self.ineqs: List[Poly] = []

    # -- bounds -------------------------------------------------------------
    def enclosure(self, e: Expr, p: Poly) -> Interval:
        """Sound enclosure of e on K (intervals, known bounds, SOS subproblems)."""
        if e in self.bounds:
            return self.bounds[e]
        try:
            I = interval_eval(e, self.ibox)
        except DomainError:
            I = Interval.entire()
        if e in self.known:
            J = I.intersect(self.known[e])
            I = J if J is not None else I
        exact = single_use(e) or (p.degree() <= 1 and all(i < self.n for i in p.variables()))
        if self.opts.use_sos_bounds and not exact:
            lo, hi = self._sos_bounds(p, contains_pi(e))
            J = I.intersect(Interval(max(lo, I.lo), min(hi, I.hi))) if max(lo, I.lo) <= min(hi, I.hi) else None
            if J is not None:
                I = J
        self.bounds[e] = I
        return I

    def _sos_bounds(self, p: Poly, pi: bool) -> Tuple[float, float]:
        pop = self._current_pop(p)
        k = self.opts.sub_order if self.opts.sub_order is not None else max(1, self.k - 1)
        k = max(k, pop.k0())
        key = (pop.objective, tuple(pop.constraints), tuple(pop.box), k, self.opts.tol, pi)
        if key not in _SUB_BOUNDS:
            if len(_SUB_BOUNDS) >= _SUB_BOUNDS_MAX:
                _SUB_BOUNDS.pop(next(iter(_SUB_BOUNDS)))
            _SUB_BOUNDS[key] = self._solve_bounds(pop, k, pi)
        return _SUB_BOUNDS[key]

    def _solve_bounds(self, pop: PopProblem, k: int, pi: bool) -> Tuple[float, float]:
        lo, hi = -math.inf, math.inf
        try:
            r = solve_pop(pop, k, tol=self.opts.tol)
            lo = r.bound
            r = solve_pop(PopProblem(pop.nvars, -pop.objective, pop.constraints, pop.box), k,
                          tol=self.opts.tol)
            hi = -r.bound
        except NlcertError:
            pass
        if pi:
            lo = lo - PI_MARGIN * (1 + abs(lo)) if math.isfinite(lo) else lo
            hi = hi + PI_MARGIN * (1 + abs(hi)) if math.isfinite(hi) else hi
        return lo, hi

    def _current_pop(self, p: Poly) -> PopProblem:
        """POP for bounding ``p`` over the variables it depends on.

        Only the lifting variables reachable from ``p`` through their defining
        constraints are kept (with the original variables those constraints
        mention); dropping the others relaxes the feasible set, so bounds stay
        valid while the subproblem gets much smaller.
        """
        n, m = self.n, self.n + len(self.backmap)
        cons = [(h, True) for h in self.eqs] + [(h, False) for h in self.ineqs]

        def used(q: Poly) -> set:
            return {i for a in q.terms for i, e in enumerate(a) if e}

        owner: Dict[int, List[int]] = {}
        for j, (h, _) in enumerate(cons):
            vs = [i for i in used(h) if i >= n]
            if vs:
                owner.setdefault(max(vs), []).append(j)
        keep_c: set = set()
        todo = [i for i in used(p) if i >= n]
        seen = set(todo)
        if any(i >= m for i in seen):
            raise AssertionError("polynomial uses a lifting variable not yet defined")
        while todo:
            z = todo.pop()
            for j in owner.get(z, []):
                keep_c.add(j)
                for i in used(cons[j][0]):
                    if i >= n and i not in seen:
                        seen.add(i)
                        todo.append(i)
        keep_v = sorted(used(p) | set().union(*[used(cons[j][0]) for j in keep_c]))
        if not keep_v:
            keep_v = [0]
        pos = {v: i for i, v in enumerate(keep_v)}

        def shrink(q: Poly) -> Poly:
            terms = {}
            for a, c in q.terms.items():
                b = [0] * len(keep_v)
                for i, e in enumerate(a):
                    if e:
                        b[pos[i]] = e
                terms[tuple(b)] = c
            return Poly(len(keep_v), terms)

        gs: List[Poly] = []
        for j in sorted(keep_c):
            h, is_eq = cons[j]
            gs += [shrink(h), -shrink(h)] if is_eq else [shrink(h)]
        full = self.box + self.lift_bounds
        return PopProblem.on_box(shrink(p), [full[v] for v in keep_v], gs)

    # -- conversion --------------------------------------------------------------
    def poly(self, e: Expr) -> Poly:
        if e in self.polys:
            return self.polys[e]
        N, op = self.N, e.op
        if op == "const":
            out = Poly.constant(N, e.value)
        elif op == "pi":
            out = Poly.constant(N, Fraction(math.pi))
        elif op == "var":
            out = Poly.variable(N, e.value)
        elif op == "add":
            out = self.poly(e.args[0]) + self.poly(e.args[1])
        elif op == "sub":
            out = self.poly(e.args[0]) - self.poly(e.args[1])
        elif op == "mul":
            out = self.poly(e.args[0]) * self.poly(e.args[1])
        elif op == "neg":
            out = -self.poly(e.args[0])
        elif op == "div" and not _is_lift_node(e):
            d = self.poly(e.args[1]).constant_term()
            if d == 0:
                raise DomainError("division by zero", ())
            out = self.poly(e.args[0]).scale(1 / Fraction(d))
        elif op == "pow" and not _is_lift_node(e):
            out = self.poly(e.args[0]) ** int(e.value)
        else:
            out = self.lift_node(e)
        self.polys[e] = out
        return out

    def new_var(self, e: Expr, I: Interval) -> Poly:
        if not (math.isfinite(I.lo) and math.isfinite(I.hi)):
            raise DomainError(f"unbounded lifting variable for {e!r}", ())
        self.lift_bounds.append(_frac_interval(I))
        self.backmap.append(e)
        z = Poly.variable(self.N, self.n + len(self.backmap) - 1)
        self.bounds[e] = I
        return z

    def lift_node(self, e: Expr) -> Poly:
        op = e.op
        if op in ("sqrt", "pow"):
            u_e = e.args[0]
            u = self.poly(u_e)
            U = self.enclosure(u_e, u)
            if op == "sqrt" or e.value.denominator != 1:
                p = 2 if op == "sqrt" else e.value.denominator
                if U.lo < 0:
                    if U.lo < -RADICAND_SLACK * (1 + abs(U.hi)) or U.hi < 0:
                        raise DomainError(f"radicand possibly negative on the box: {U}", ())
                    U = Interval(0.0, max(U.hi, 0.0))
                Z = isqrt(U) if p == 2 else iroot(U, p)
                Z = self._intersect_direct(e, Z)
                z = self.new_var(e, Z)
                self.eqs.append(z ** p - u)
                return z
            # negative integer power: z * u^q = 1
            q = -int(e.value)
            self._check_divisor(U)
            Z = self._intersect_direct(e, Interval(1.0, 1.0) / (U ** q))
            z = self.new_var(e, Z)
            self.eqs.append(z * u ** q - 1)
            return z
        if op == "div":
            a, b = e.args
            u, v = self.poly(a), self.poly(b)
            V = self.enclosure(b, v)
            self._check_divisor(V)
            Uu = self.enclosure(a, u)
            Z = self._intersect_direct(e, Uu / V)
            z = self.new_var(e, Z)
            self.eqs.append(z * v - u)
            return z
        if op == "abs":
            u_e = e.args[0]
            u = self.poly(u_e)
            U = self.enclosure(u_e, u)
            Z = self._intersect_direct(e, abs(U))
            z = self.new_var(e, Z)
            self.eqs.append(z * z - u * u)
            return z
        if op in ("min", "max"):
            args = list(e.args)
            acc_e = args[0]
            acc = self.poly(acc_e)
            acc_I = self.enclosure(acc_e, acc)
            for i in range(1, len(args)):
                b_e = args[i]
                b = self.poly(b_e)
                B = self.enclosure(b_e, b)
                node = e if i == len(args) - 1 else Expr(op, tuple(args[: i + 1]))
                Z = imax(acc_I, B) if op == "max" else imin(acc_I, B)
                Z = self._intersect_direct(node, Z)
                z = self.new_var(node, Z)
                if op == "max":
                    self.ineqs += [z - acc, z - b]
                else:
                    self.ineqs += [acc - z, b - z]
                self.eqs.append((z - acc) * (z - b))
                acc, acc_I = z, Z
                if node is not e:
                    self.polys[node] = z
            return acc
        raise ValueError(f"cannot lift node {op}")

    def _intersect_direct(self, e: Expr, Z: Interval) -> Interval:
        try:
            J = Z.intersect(interval_eval(e, self.ibox))
        except DomainError:
            J = None
        if e in self.known and J is not None:
            J = J.intersect(self.known[e]) or J
        return J if J is not None else Z

    @staticmethod
    def _check_divisor(V: Interval) -> None:
        margin = DIVISOR_MARGIN * max(V.width, 1e-300)
        if not (V.lo > margin or V.hi < -margin):
            raise DomainError(f"divisor enclosure {V} contains or touches 0", ())


def lift(e: Expr, box: Sequence[Tuple], k: int = 2, known_bounds: Optional[Dict[Expr, Interval]] = None,
         options: Optional[LiftOptions] = None) -> LiftedPop:
    """Lift a semialgebraic expression over ``box`` into a polynomial problem."""
    if not e.is_semialgebraic:
        raise ValueError("lift expects a semialgebraic expression")
    L = _Lifter(e, box, k, dict(known_bounds or {}), options or LiftOptions())
    obj = L.poly(e)
    return LiftedPop(L.n, L.box, L.lift_bounds, obj, L.eqs, L.ineqs, L.backmap)


@dataclass
class SaResult:
    """Certified lower bound of a semialgebraic expression and how it was obtained."""

    bound: float
    method: str  # 'constant' | 'interval' | 'sos'
    interval: Interval
    pop_result: Optional[PopResult] = None
    lifted: Optional[LiftedPop] = None

    def minimizer_candidate(self) -> Optional[np.ndarray]:
        """First-order moments of the original variables, or None."""
        if self.pop_result is None or self.lifted is None:
            return None
        return self.pop_result.first_moments()[: self.lifted.n]


def minimize_sa(e: Expr, box: Sequence[Tuple], k: int = 2, tol: float = 1e-8,
                known_bounds: Optional[Dict[Expr, Interval]] = None,
                options: Optional[LiftOptions] = None) -> SaResult:
    """Certified lower bound of ``e`` on ``box`` with provenance."""
    box = [(Fraction(lo), Fraction(hi)) for lo, hi in box]
    if e.is_const:
        v = float(e.value)
        return SaResult(_down(v) if Fraction(v) > e.value else v, "constant", Interval.point(v))
    try:
        I = interval_eval(e, box_of(box))
    except DomainError:
        # naive interval evaluation may fail where the lifted problem does not
        I = Interval.entire()
    else:
        if single_use(e):
            return SaResult(I.lo, "interval", I)
    opts = options or LiftOptions(tol=tol)
    L = lift(e, box, k, known_bounds, opts)  # domain errors propagate
    try:
        pop = L.to_pop()
        res = solve_pop(pop, max(k, pop.k0()), tol=tol)
    except NlcertError:
        return SaResult(I.lo, "interval", I, None, L)
    b = res.bound
    if contains_pi(e) and math.isfinite(b):
        b -= PI_MARGIN * (1 + abs(b))
    if not math.isfinite(b) or b < I.lo:
        return SaResult(I.lo, "interval", I, res, L)
    return SaResult(b, "sos", I, res, L)


def min_sa(e: Expr, box: Sequence[Tuple], k: int = 2, tol: float = 1e-8,
           known_bounds: Optional[Dict[Expr, Interval]] = None) -> float:
    """Certified lower bound of the semialgebraic expression ``e`` on ``box``."""
    return minimize_sa(e, box, k, tol, known_bounds).bound


def max_sa(e: Expr, box: Sequence[Tuple], k: int = 2, tol: float = 1e-8,
           known_bounds: Optional[Dict[Expr, Interval]] = None) -> float:
    """Certified upper bound of ``e`` on ``box`` (computed as -min_sa(-e))."""
    from .expr import neg

    kb = {neg(x): -I for x, I in (known_bounds or {}).items()}
    return -min_sa(neg(e), box, k, tol, kb)


__all__ = ["LiftedPop", "LiftOptions", "SaResult", "count_lifting", "lift", "minimize_sa",
           "min_sa", "max_sa"]
