"""Template optimization: the approximation recursion, the refinement loop and
box subdivision.

``template_approx`` walks an expression tree and returns semialgebraic
brackets ``t- <= t <= t+`` together with certified bounds ``m <= inf t`` and
``M >= sup t``.  Semialgebraic subtrees are kept exactly; every dictionary
function is replaced by maxplus parabolas, a minimax polynomial or its
interval range, composed with the brackets of its argument.  When a bracket
needs too many lifting variables it is replaced by quadratic templates
(``reduce_lift``).

``template_optim`` repeats the approximation, each time refining the
precision at a guessed minimizer, and ``subdivide_certify`` / ``minimize``
bisect the box when a single box is not enough.
"""

from __future__ import annotations

import heapq
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dictionary
from . import expr as ex
from .approx import (UnaryPrecision, compose_approx, compose_bop, compose_nary, compose_sa_unary,
                     l1_underapprox, reduce_lift_maxplus, unary_approx)
from .errors import DomainError, NlcertError
from .expr import Expr, eval_expr, eval_many, interval_eval
from .interval import Interval, box_of
from .lift import count_lifting, minimize_sa
from .sos import SosCertificate

Box = List[Tuple[Fraction, Fraction]]
Path = Tuple[int, ...]


# =============================================================================
# precision
# =============================================================================
@dataclass
class Precision:
    """Global precision parameter of the template method.

    ``nodes`` maps the path of each dictionary node to its own
    :class:`UnaryPrecision`; ``mode``/``points``/``degree`` give the defaults
    used when a node has no record yet (``points`` and ``degree`` are keyed by
    function name, e.g. ``{"sin": 2}``).  ``reduce_lift`` is ``"none"``,
    ``"maxplus"`` or ``"l1:<d>"`` and is applied to brackets needing more than
    ``nlift_max`` lifting variables; ``xpoints`` are the template centers used
    by the maxplus reduction.
    """

    mode: str = "maxplus"
    points: Dict[str, int] = field(default_factory=dict)
    degree: Dict[str, int] = field(default_factory=dict)
    nodes: Dict[Path, UnaryPrecision] = field(default_factory=dict)
    reduce_lift: str = "none"
    nlift_max: int = 12
    xpoints: List[Tuple[float, ...]] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("maxplus", "minimax", "interval"):
            raise ValueError(f"unknown approximation mode {self.mode!r}")
        if not (self.reduce_lift in ("none", "maxplus") or self.reduce_lift.startswith("l1:")):
            raise ValueError(f"unknown reduce_lift mode {self.reduce_lift!r}")
        if self.reduce_lift.startswith("l1:"):
            int(self.reduce_lift[3:])
        if self.nlift_max < 0:
            raise ValueError("nlift_max must be >= 0")

    def copy(self) -> "Precision":
        return replace(self, points=dict(self.points), degree=dict(self.degree),
                       nodes=dict(self.nodes), xpoints=list(self.xpoints))

    def max_points(self, name: str) -> Optional[int]:
        return self.points.get(name)

    def node(self, path: Path, name: str) -> UnaryPrecision:
        if path in self.nodes:
            return self.nodes[path]
        if self.mode == "minimax":
            return UnaryPrecision("minimax", degree=self.degree.get(name, 2))
        if self.mode == "interval":
            return UnaryPrecision("interval")
        return UnaryPrecision("maxplus", points=())


# =============================================================================
# template_approx
# =============================================================================
@dataclass
class ApproxResult:
    """Output of :func:`template_approx`."""

    m: float
    M: float
    lower: Expr
    upper: Expr
    fallbacks: List[str] = field(default_factory=list)
    certificate: Optional[SosCertificate] = None
    minimizer: Optional[np.ndarray] = None


class _Approximator:
    """One run of the recursion on a fixed box; caches min_sa / max_sa calls."""

    def __init__(self, t: Expr, box: Box, k: int, p: Precision, tol: float,
                 cache: Optional[dict] = None):
        self.t, self.box, self.k, self.p, self.tol = t, box, k, p, tol
        self.cache = {} if cache is None else cache
        self.fallbacks: List[str] = []
        self.intervals: Dict[Path, Interval] = {}
        self.children: Dict[Path, Expr] = {}

    # -- certified bounds of semialgebraic expressions -------------------------
    def _min(self, e: Expr, where: str):
        key = ("min", e, self.k)
        if key not in self.cache:
            try:
                self.cache[key] = minimize_sa(e, self.box, self.k, self.tol)
            except (DomainError, NlcertError) as err:
                self.cache[key] = err
        r = self.cache[key]
        if isinstance(r, Exception):
            I = self._interval(e)
            self.fallbacks.append(f"{where}: interval ({type(r).__name__})")
            return I.lo, None
        if r.method == "interval" and r.lifted is not None and (
                r.pop_result is None or not math.isfinite(r.pop_result.bound)):
            # an SDP that ran but was beaten by interval arithmetic is not a failure
            self.fallbacks.append(f"{where}: interval (SDP failure)")
        return r.bound, r

    def _interval(self, e: Expr) -> Interval:
        try:
            return interval_eval(e, box_of(self.box))
        except DomainError:
            return Interval.entire()

    def lower_bound(self, e: Expr, where: str = "") -> float:
        return self._min(e, where)[0]

    def upper_bound(self, e: Expr, where: str = "") -> float:
        return -self._min(ex.neg(e), where)[0]

    def range_of(self, lo: Expr, hi: Expr, where: str) -> Interval:
        a = self.lower_bound(lo, where)
        b = self.upper_bound(hi, where)
        a = max(a, self._interval(lo).lo)
        b = min(b, self._interval(hi).hi)
        if not (a <= b):
            raise NlcertError(f"empty range at {where}: [{a}, {b}]")
        return Interval(a, b)

    # -- the recursion -------------------------------------------------------------
    def rec(self, e: Expr, path: Path) -> Tuple[Expr, Expr]:
        if e.is_semialgebraic:
            return e, e
        if e.op in ex.BINARY:
            l1, u1 = self.rec(e.args[0], path + (0,))
            l2, u2 = self.rec(e.args[1], path + (1,))
            if e.op in ("add", "sub"):
                return compose_bop(l1, u1, l2, u2, e.op, Interval(0.0, 0.0))
            I2 = self.range_of(l2, u2, f"{path + (1,)}")
            I1 = self.range_of(l1, u1, f"{path + (0,)}") if l1 is u1 or l1 == u1 else None
            return compose_bop(l1, u1, l2, u2, e.op, I2, I1)
        if e.op in ex.NARY:
            pairs = [self.rec(a, path + (j,)) for j, a in enumerate(e.args)]
            return compose_nary(e.op, [a for a, _ in pairs], [b for _, b in pairs])
        if e.op == "func":
            c = e.args[0]
            lo, hi = self.rec(c, path + (0,))
            I = self.range_of(lo, hi, f"{path + (0,)}")
            r = dictionary.get(e.value)
            prec = self.p.node(path, e.value)
            if prec.mode == "maxplus" and not prec.points:
                prec = UnaryPrecision("maxplus", points=(I.mid,))
                self.p.nodes[path] = prec
            self.intervals[path] = I
            self.children[path] = c
            ua = unary_approx(r, I, prec)
            return compose_approx(r, ua, I, lo, hi)
        if e.op in ex.SEMIALGEBRAIC_UNARY:
            lo, hi = self.rec(e.args[0], path + (0,))
            if e.op == "neg":
                return ex.neg(hi), ex.neg(lo)
            I = self.range_of(lo, hi, f"{path + (0,)}")
            return compose_sa_unary(e, I, lo, hi)
        raise ValueError(f"unexpected node {e.op!r}")

    def reduce(self, lo: Expr, hi: Expr) -> Tuple[Expr, Expr]:
        """Line 12 of the recursion: shrink brackets with too many liftings."""
        mode = self.p.reduce_lift
        if mode == "none":
            return lo, hi
        out = []
        for side, b in ((1, lo), (-1, hi)):
            target = b if side == 1 else ex.neg(b)
            if count_lifting(target) <= self.p.nlift_max or not target.is_semialgebraic:
                out.append(b)
                continue
            try:
                if mode == "maxplus":
                    pts = self.p.xpoints or [tuple(float(a + c) / 2 for a, c in self.box)]
                    # expand t itself when it is twice differentiable, else the bracket
                    f = target
                    if _smooth(self.t):
                        f = self.t if side == 1 else ex.neg(self.t)
                    r, _ = reduce_lift_maxplus(target, self.box, pts, self.k, f=f, tol=self.tol)
                else:
                    d = int(mode[3:])
                    res = l1_underapprox(target, self.box, d, max(self.k, (d + 1) // 2), self.tol)
                    r = ex.from_poly(res.h)  # already shifted to be rigorous
            except (DomainError, NlcertError) as err:
                self.fallbacks.append(f"reduce_lift: kept lifted bracket ({type(err).__name__})")
                out.append(b)
                continue
            out.append(r if side == 1 else ex.neg(r))
        return out[0], out[1]


def _smooth(e: Expr) -> bool:
    return not any(n.op in ("abs", "min", "max") for n in e.walk())


def template_approx(t: Expr, K: Sequence[Tuple], k: int, p: Precision, tol: float = 1e-8,
                    upper: bool = True, cache: Optional[dict] = None) -> ApproxResult:
    """Certified bounds and semialgebraic brackets of ``t`` on the box ``K``.

    ``p`` is updated in place with the default point set of every dictionary
    node that had none (the midpoint of its argument range).
    """
    box = [(Fraction(a), Fraction(b)) for a, b in K]
    A = _Approximator(t, box, k, p, tol, cache)
    lo, hi = A.rec(t, ())
    lo, hi = A.reduce(lo, hi)
    m, res = A._min(lo, "root")
    I = A._interval(t)
    m = max(m, I.lo) if math.isfinite(I.lo) else m
    M = A.upper_bound(hi, "root") if upper else math.inf
    if upper and math.isfinite(I.hi):
        M = min(M, I.hi)
    out = ApproxResult(m, M, lo, hi, A.fallbacks)
    out.intervals = A.intervals  # type: ignore[attr-defined]
    out.children = A.children  # type: ignore[attr-defined]
    if res is not None and res.pop_result is not None and res.method == "sos":
        out.certificate = res.pop_result.certificate
        x = res.minimizer_candidate()
        if x is not None and np.all(np.isfinite(x)):
            out.minimizer = x
    return out


# =============================================================================
# the refinement loop
# =============================================================================
def _box_arrays(K: Sequence[Tuple]) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.array([float(a) for a, _ in K])
    hi = np.array([float(b) for _, b in K])
    return lo, hi


def randeval(t: Expr, K: Sequence[Tuple], count: int = 1000, seed: int = 0) -> np.ndarray:
    """The best of ``count`` uniform samples of ``t`` on ``K`` (seeded)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = _box_arrays(K)
    rng = np.random.default_rng(seed)
    X = lo + (hi - lo) * rng.random((count, len(lo)))
    with np.errstate(all="ignore"):
        try:
            v = eval_many(t, X)
        except DomainError:
            v = np.array([_safe_eval(t, x) for x in X])
    v = np.where(np.isfinite(v), v, np.inf)
    if not np.any(np.isfinite(v)):
        raise DomainError("every sample hit a domain error")
    return X[int(np.argmin(v))]


def _safe_eval(t: Expr, x) -> float:
    try:
        v = eval_expr(t, x)
    except (DomainError, ValueError, ZeroDivisionError, OverflowError):
        return math.inf
    return v if math.isfinite(v) else math.inf


def local_polish(t: Expr, K: Sequence[Tuple], x0: Sequence[float], steps: int = 20) -> np.ndarray:
    """Projected coordinate descent on ``t`` with step halving."""
    lo, hi = _box_arrays(K)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    fx = _safe_eval(t, x)
    h = (hi - lo) / 4.0
    for _ in range(steps):
        improved = False
        for i in range(len(x)):
            for s in (1.0, -1.0):
                y = x.copy()
                y[i] = min(max(y[i] + s * h[i], lo[i]), hi[i])
                fy = _safe_eval(t, y)
                if fy < fx:
                    x, fx, improved = y, fy, True
                    break
        if not improved:
            h = h / 2.0
    return x


def guess_argmin(t: Expr, K: Sequence[Tuple], approx: ApproxResult) -> np.ndarray:
    """Minimizer candidate: first moments of the bracket POP, clamped, then polished."""
    lo, hi = _box_arrays(K)
    x0 = approx.minimizer if approx.minimizer is not None else (lo + hi) / 2
    return local_polish(t, K, np.clip(x0, lo, hi))


def update_precision(p: Precision, x_opt: Sequence[float], approx: ApproxResult) -> Precision:
    """Refine ``p`` at ``x_opt``: add the argument image of x_opt to every
    maxplus node (respecting the per-function point budget), raise minimax
    degrees by 2 and record x_opt as a template center."""
    q = p.copy()
    intervals: Dict[Path, Interval] = getattr(approx, "intervals", {})
    children: Dict[Path, Expr] = getattr(approx, "children", {})
    for path, prec in list(q.nodes.items()):
        if prec.mode == "maxplus" and path in children:
            a = _safe_eval(children[path], x_opt)
            I = intervals[path]
            if not math.isfinite(a):
                continue
            a = min(max(a, I.lo), I.hi)
            if any(abs(a - b) <= 1e-12 * (1 + abs(b)) for b in prec.points):
                continue
            q.nodes[path] = replace(prec, points=prec.points + (a,))
        elif prec.mode == "minimax":
            q.nodes[path] = replace(prec, degree=prec.degree + 2)
    xt = tuple(float(v) for v in x_opt)
    if xt not in q.xpoints:
        q.xpoints.append(xt)
    return q


def _budget_ok(p: Precision, t: Expr) -> bool:
    """False when some maxplus node already has its maximal number of points."""
    for path, n in ex.transcendental_nodes(t):
        cap = p.max_points(n.value)
        prec = p.nodes.get(path)
        if cap is not None and prec is not None and prec.mode == "maxplus" and len(prec.points) >= cap:
            return False
    return True


def seed_precision(t: Expr, x0: Sequence[float], p: Precision) -> Precision:
    """Initial point sets: the argument image of ``x0`` at every maxplus node."""
    q = p.copy()
    for path, n in ex.transcendental_nodes(t):
        if path in q.nodes:
            continue
        if q.mode == "maxplus":
            a = _safe_eval(n.args[0], x0)
            if math.isfinite(a):
                q.nodes[path] = UnaryPrecision("maxplus", points=(a,))
        elif q.mode == "minimax":
            q.nodes[path] = UnaryPrecision("minimax", degree=q.degree.get(n.value, 2))
        else:
            q.nodes[path] = UnaryPrecision("interval")
    if not q.xpoints:
        q.xpoints.append(tuple(float(v) for v in x0))
    return q


@dataclass
class Iteration:
    m: float
    M: float
    x_opt: Tuple[float, ...]
    value: float
    fallbacks: List[str]


@dataclass
class OptimResult:
    """Best certified lower bound of one box and how it was reached."""

    m: float
    x_opt: np.ndarray
    value: float
    iterations: List[Iteration]
    precision: Precision
    certificate: Optional[SosCertificate] = None
    status: str = "certified"  # 'certified' | 'interval-fallback'
    boxes: int = 1
    time: float = 0.0


def template_optim(t: Expr, K: Sequence[Tuple], iter_max: int = 3, p0: Optional[Precision] = None,
                   k: int = 2, stop_at: str = "iterations", target: float = 0.0,
                   x0: Optional[Sequence[float]] = None, seed: int = 0, tol: float = 1e-8,
                   samples: int = 1000) -> OptimResult:
    """Iterated template approximation on one box.

    ``stop_at="nonneg"`` stops as soon as ``m >= target`` (default 0).  When
    ``x0`` is not given the starting point is the best of ``samples`` seeded
    random evaluations.  The iteration also stops early once a point budget
    of ``p0.points`` is reached.
    """
    if iter_max < 1:
        raise ValueError("iter_max must be >= 1")
    if stop_at not in ("iterations", "nonneg"):
        raise ValueError(f"unknown stop rule {stop_at!r}")
    t0 = time.perf_counter()
    box = [(Fraction(a), Fraction(b)) for a, b in K]
    if x0 is None:
        x0 = randeval(t, box, samples, seed)
    x0 = np.asarray(x0, dtype=float)
    p = seed_precision(t, x0, p0 or Precision())
    best_x, best_v = x0, _safe_eval(t, x0)
    best_m, best_cert, status = -math.inf, None, "certified"
    log: List[Iteration] = []
    cache: dict = {}
    for it in range(iter_max):
        a = template_approx(t, box, k, p, tol, upper=False, cache=cache)
        x = guess_argmin(t, box, a)
        v = _safe_eval(t, x)
        if v < best_v:
            best_x, best_v = x, v
        log.append(Iteration(a.m, a.M, tuple(float(c) for c in x), v, list(a.fallbacks)))
        if a.m > best_m:
            best_m, best_cert = a.m, a.certificate
            status = "interval-fallback" if a.fallbacks else "certified"
        if stop_at == "nonneg" and best_m >= target:
            break
        if it + 1 < iter_max:
            if not _budget_ok(p, t):
                break
            p = update_precision(p, x, a)
    return OptimResult(best_m, np.asarray(best_x), best_v, log, p, best_cert, status, 1,
                       time.perf_counter() - t0)


# =============================================================================
# subdivision
# =============================================================================
@dataclass
class BoxRecord:
    box: List[Tuple[Fraction, Fraction]]
    m: float
    closed: bool
    iterations: List[float]
    certificate: Optional[SosCertificate] = None
    status: str = "certified"


@dataclass
class SubdivisionResult:
    """Outcome of :func:`subdivide_certify` or :func:`minimize`."""

    status: str  # 'certified' | 'inconclusive' (certify) or 'converged' | 'budget' (minimize)
    bound: float
    boxes: int
    records: List[BoxRecord]
    x_best: Optional[np.ndarray] = None
    value_best: float = math.inf
    worst_box: Optional[List[Tuple[Fraction, Fraction]]] = None
    time: float = 0.0


@dataclass
class OptimConfig:
    """Settings shared by the subdivision drivers."""

    k: int = 2
    iter_max: int = 3
    precision: Precision = field(default_factory=Precision)
    max_boxes: int = 64
    tol: float = 1e-8
    seed: int = 0
    samples: int = 1000
    workers: int = 1
    gap: float = 1e-2  # relative optimality gap used by minimize()
    x0: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.max_boxes < 1:
            raise ValueError("max_boxes must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def bisect(box: Sequence[Tuple[Fraction, Fraction]]):
    """Split the widest coordinate at its (exact) midpoint."""
    widths = [b - a for a, b in box]
    i = max(range(len(box)), key=lambda j: (widths[j], -j))
    a, b = box[i]
    mid = (a + b) / 2
    left, right = list(box), list(box)
    left[i] = (a, mid)
    right[i] = (mid, b)
    return left, right


def _x0_for(cfg: OptimConfig, box) -> Optional[Tuple[float, ...]]:
    if cfg.x0 is None:
        return None
    lo, hi = _box_arrays(box)
    x = np.asarray(cfg.x0, dtype=float)
    return tuple(x) if np.all(x >= lo) and np.all(x <= hi) else None


def _run_boxes(t: Expr, boxes, cfg: OptimConfig, stop_at: str, target: float) -> List[OptimResult]:
    def one(item):
        idx, box = item
        return template_optim(t, box, cfg.iter_max, cfg.precision, cfg.k, stop_at, target,
                              _x0_for(cfg, box), cfg.seed + idx, cfg.tol, cfg.samples)

    items = list(boxes)
    if cfg.workers == 1 or len(items) == 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(cfg.workers) as pool:
        return list(pool.map(one, items))


def subdivide_certify(t: Expr, K: Sequence[Tuple], m0: float,
                      config: Optional[OptimConfig] = None) -> SubdivisionResult:
    """Prove ``t >= m0`` on ``K`` by worst-first bisection within a box budget."""
    cfg = config or OptimConfig()
    t0 = time.perf_counter()
    root = [(Fraction(a), Fraction(b)) for a, b in K]
    heap: List[Tuple[float, int, list]] = [(-math.inf, 0, root)]
    counter, used = 1, 0
    records: List[BoxRecord] = []
    x_best, v_best = None, math.inf
    while heap and used < cfg.max_boxes:
        batch = []
        while heap and len(batch) < cfg.workers and used + len(batch) < cfg.max_boxes:
            batch.append(heapq.heappop(heap))
        results = _run_boxes(t, [(c, b) for _, c, b in batch], cfg, "nonneg", m0)
        used += len(batch)
        for (_, _, box), r in zip(batch, results):
            closed = r.m >= m0
            records.append(BoxRecord(box, r.m, closed, [i.m for i in r.iterations], r.certificate,
                                     r.status))
            if r.value < v_best:
                x_best, v_best = r.x_opt, r.value
            if not closed:
                for child in bisect(box):
                    heapq.heappush(heap, (r.m, counter, child))
                    counter += 1
    # every failed box was split, so the target is proved iff nothing is left open
    status = "certified" if not heap else "inconclusive"
    bound = min([m for m, _, _ in heap] + [rec.m for rec in records if rec.closed])
    worst = min(heap)[2] if heap else None
    return SubdivisionResult(status, bound, used, records, x_best, v_best, worst,
                             time.perf_counter() - t0)


def minimize(t: Expr, K: Sequence[Tuple], config: Optional[OptimConfig] = None) -> SubdivisionResult:
    """Certified lower bound of ``t`` on ``K`` by best-first branch and bound.

    Boxes whose bound is within the relative gap of the best sampled value are
    closed; the result bound is the minimum over closed and open leaves.
    """
    cfg = config or OptimConfig()
    t0 = time.perf_counter()
    root = [(Fraction(a), Fraction(b)) for a, b in K]
    heap: List[Tuple[float, int, list]] = [(-math.inf, 0, root)]
    counter, used = 1, 0
    records: List[BoxRecord] = []
    closed_bounds: List[float] = []
    x_best, v_best = None, math.inf

    def good_enough(m: float) -> bool:
        return math.isfinite(v_best) and v_best - m <= cfg.gap * max(1.0, abs(v_best))

    while heap and used < cfg.max_boxes:
        if good_enough(heap[0][0]):
            break
        batch = []
        while heap and len(batch) < cfg.workers and used + len(batch) < cfg.max_boxes:
            batch.append(heapq.heappop(heap))
        results = _run_boxes(t, [(c, b) for _, c, b in batch], cfg, "iterations", 0.0)
        used += len(batch)
        for r in results:
            if r.value < v_best:
                x_best, v_best = r.x_opt, r.value
        for (_, _, box), r in zip(batch, results):
            records.append(BoxRecord(box, r.m, False, [i.m for i in r.iterations], r.certificate,
                                     r.status))
            if good_enough(r.m):
                records[-1].closed = True
                closed_bounds.append(r.m)
            else:
                for child in bisect(box):
                    heapq.heappush(heap, (r.m, counter, child))
                    counter += 1
    bound = min(closed_bounds + [m for m, _, _ in heap])
    status = "converged" if good_enough(bound) else "budget"
    worst = min(heap)[2] if heap else None
    return SubdivisionResult(status, bound, used, records, x_best, v_best, worst,
                             time.perf_counter() - t0)


__all__ = ["Precision", "ApproxResult", "template_approx", "randeval", "local_polish",
           "guess_argmin", "update_precision", "seed_precision", "Iteration", "OptimResult",
           "template_optim", "BoxRecord", "SubdivisionResult", "OptimConfig", "bisect",
           "subdivide_certify", "minimize"]
