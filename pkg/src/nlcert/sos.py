"""Lasserre SOS/moment relaxations of polynomial optimization problems.

For ``min f(x) s.t. g_j(x) >= 0`` the order-k relaxation is

    sup mu  s.t.  f - mu = sum_j sigma_j g_j,   sigma_j SOS,  deg(sigma_j g_j) <= 2k

with g_0 = 1.  Each sigma_j = z_j^T G_j z_j over the monomial basis z_j of
degree k - ceil(deg g_j / 2).  The Gram matrices are the primal variables of
:mod:`nlcert.sdp`; the dual variables are the moments y_alpha (y_0 = 1).

Problems with a declared box are mapped affinely onto [-1, 1]^n before
compilation.  The relaxation value is invariant under this change of
coordinates, and it keeps the SDP data well scaled.  Certificates are stated
in the normalized coordinates, where every monomial is bounded by 1 in
absolute value, which is what makes the a-posteriori error bound cheap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CertificateError, OrderError
from .poly import Monomial, Poly, mon_add, mons
from .sdp import OPTIMAL, SdpProblem, SdpSolution, solve as sdp_solve

SCHEMA = "nlcert/1"
Box = List[Tuple[Fraction, Fraction]]


@dataclass
class PopProblem:
    """min objective(x) s.t. every constraint g(x) >= 0 (x in an optional box)."""

    nvars: int
    objective: Poly
    constraints: List[Poly] = field(default_factory=list)
    box: Optional[Box] = None

    def __post_init__(self):
        for g in [self.objective] + list(self.constraints):
            if g.nvars != self.nvars:
                raise ValueError("all polynomials must share the problem dimension")
        if self.box is not None:
            self.box = [(Fraction(lo), Fraction(hi)) for lo, hi in self.box]
            if len(self.box) != self.nvars:
                raise ValueError("box dimension mismatch")
            for lo, hi in self.box:
                if lo > hi:
                    raise ValueError("empty box")

    @classmethod
    def on_box(cls, objective: Poly, box: Sequence[Tuple], constraints: Sequence[Poly] = (),
               encoding: str = "quadratic") -> "PopProblem":
        """Problem over a box, with the box encoded as polynomial constraints.

        encoding: 'quadratic' -> (x_i - lo)(hi - x_i) >= 0 (default),
                  'linear'    -> x_i - lo >= 0, hi - x_i >= 0.
        """
        n = objective.nvars
        box = [(Fraction(lo), Fraction(hi)) for lo, hi in box]
        gs = box_constraints(n, box, encoding) + list(constraints)
        return cls(n, objective, gs, box)

    def k0(self) -> int:
        d = self.objective.degree()
        k = (d + 1) // 2
        for g in self.constraints:
            k = max(k, (g.degree() + 1) // 2)
        return max(k, 1)


def box_constraints(n: int, box: Box, encoding: str = "quadratic") -> List[Poly]:
    out = []
    for i, (lo, hi) in enumerate(box):
        xi = Poly.variable(n, i)
        if lo == hi:
            out += [xi - lo, Poly.constant(n, hi) - xi]
        elif encoding == "quadratic":
            out.append((xi - lo) * (Poly.constant(n, hi) - xi))
        elif encoding == "linear":
            out += [xi - lo, Poly.constant(n, hi) - xi]
        else:
            raise ValueError(f"unknown box encoding {encoding!r}")
    return out


def add_ball_constraint(p: PopProblem, N=None) -> PopProblem:
    """Append N - ||x||^2 >= 0; N defaults to the max of ||x||^2 over the box."""
    if p.box is None:
        raise ValueError("add_ball_constraint needs a declared box")
    need = sum(max(lo * lo, hi * hi) for lo, hi in p.box)
    if N is None:
        N = need
    N = Fraction(N)
    if N < need:
        raise ValueError(f"N={N} is below sup ||x||^2 = {need} over the box")
    n = p.nvars
    ball = Poly.constant(n, N)
    for i in range(n):
        ball = ball - Poly.variable(n, i) ** 2
    return PopProblem(n, p.objective, list(p.constraints) + [ball], p.box)


# -- normalization -------------------------------------------------------------
@dataclass(frozen=True)
class Normalization:
    """x = shift + scale * u with u in [-1, 1]^n (scale > 0; 1 for fixed coords)."""

    shift: Tuple[Fraction, ...]
    scale: Tuple[Fraction, ...]

    @classmethod
    def identity(cls, n: int) -> "Normalization":
        return cls((Fraction(0),) * n, (Fraction(1),) * n)

    @classmethod
    def for_box(cls, box: Box) -> "Normalization":
        shift, scale = [], []
        for lo, hi in box:
            shift.append((lo + hi) / 2)
            scale.append((hi - lo) / 2 if hi > lo else Fraction(1))
        return cls(tuple(shift), tuple(scale))

    def apply(self, p: Poly) -> Poly:
        return p.substitute_affine(self.shift, self.scale)

    def to_original(self, u: Sequence[float]) -> np.ndarray:
        return np.array([float(s) + float(r) * float(v) for s, r, v in zip(self.shift, self.scale, u)])


def _unit_scale(g: Poly) -> Poly:
    m = max((abs(c) for c in g.terms.values()), default=Fraction(0))
    return g if m == 0 else g.scale(1 / Fraction(m))


def normalize(p: PopProblem) -> Tuple[PopProblem, Normalization]:
    if p.box is None:
        return p, Normalization.identity(p.nvars)
    nm = Normalization.for_box(p.box)
    f = nm.apply(p.objective.to_fraction())
    # positive rescaling of each g_j leaves the quadratic module unchanged and
    # keeps the SDP data of comparable magnitude across blocks
    gs = [_unit_scale(nm.apply(g.to_fraction())) for g in p.constraints]
    box = [(Fraction(-1), Fraction(1)) if hi > lo else (Fraction(0), Fraction(0)) for lo, hi in p.box]
    return PopProblem(p.nvars, f, gs, box), nm


# -- relaxation ------------------------------------------------------------------
@dataclass
class Relaxation:
    """Compiled order-k relaxation and the index maps needed to read it back."""

    pop: PopProblem
    k: int
    sdp: SdpProblem
    moments: List[Monomial]  # index i <-> moments[i + 1]; moments[0] = 0
    index: Dict[Monomial, int]
    bases: List[List[Monomial]]  # per block; block 0 is sigma_0
    multipliers: List[Poly]  # g_0 = 1, g_1..g_m


def _half_deg(g: Poly) -> int:
    return (g.degree() + 1) // 2


def build_relaxation(p: PopProblem, k: int) -> Relaxation:
    """Compile the order-k SOS relaxation of ``p`` into an SdpProblem."""
    n = p.nvars
    k0 = p.k0()
    if k < k0:
        raise OrderError(f"relaxation order {k} below k0 = {k0}")
    allm = mons(n, 2 * k)
    index = {a: i for i, a in enumerate(allm)}
    zero = allm[0]
    gs = [Poly.constant(n, 1)] + list(p.constraints)
    bases = [mons(n, k - _half_deg(g)) for g in gs]
    sdp = SdpProblem([len(B) for B in bases], len(allm) - 1)
    fterms = p.objective.terms
    for a, c in fterms.items():
        if a != zero:
            sdp.b[index[a] - 1] = -float(c)
    for j, (g, B) in enumerate(zip(gs, bases)):
        gterms = [(gm, float(gc)) for gm, gc in g.terms.items()]
        Cj = sdp.C[j]
        for r in range(len(B)):
            br = B[r]
            for c in range(r, len(B)):
                bc = mon_add(br, B[c])
                for gm, gc in gterms:
                    a = mon_add(bc, gm)
                    if a == zero:
                        Cj[r, c] += gc
                        if r != c:
                            Cj[c, r] += gc
                    else:
                        sdp.add_entry(index[a] - 1, j, r, c, -gc)
    return Relaxation(p, k, sdp, allm, index, bases, gs)


# -- results ----------------------------------------------------------------------
@dataclass
class PopResult:
    """Outcome of :func:`solve_pop`.

    ``bound`` is rigorous: it is the certificate's degraded bound (valid on
    the feasible set whatever the solver status).  ``numeric_bound`` is the
    raw relaxation value f_0 - <C, X>.
    """

    bound: float
    numeric_bound: float
    status: str
    moments: Dict[Monomial, float]
    normalization: Normalization
    solution: Optional[SdpSolution] = None
    certificate: Optional["SosCertificate"] = None
    report: Optional["VerifyReport"] = None
    k: int = 0

    def first_moments(self) -> np.ndarray:
        """First-order moments mapped back to the original coordinates."""
        n = len(self.normalization.shift)
        u = []
        for i in range(n):
            e = tuple(1 if j == i else 0 for j in range(n))
            u.append(self.moments.get(e, 0.0))
        return self.normalization.to_original(u)


def solve_pop(p: PopProblem, k: Optional[int] = None, tol: float = 1e-8, max_iter: int = 200,
              certify: bool = True) -> PopResult:
    """Lower bound of the POP at order k (default k0) and its moment vector."""
    if p.objective.is_constant():
        c = float(p.objective.constant_term())
        nm = Normalization.identity(p.nvars) if p.box is None else Normalization.for_box(p.box)
        return PopResult(c, c, OPTIMAL, {(0,) * p.nvars: 1.0}, nm, k=k or 0)
    pn, nm = normalize(p)
    k = pn.k0() if k is None else k
    rel = build_relaxation(pn, k)
    sol = sdp_solve(rel.sdp, tol=tol, max_iter=max_iter)
    moments = {a: (1.0 if i == 0 else float(sol.y[i - 1])) for i, a in enumerate(rel.moments)}
    f0 = float(pn.objective.constant_term())
    numeric = f0 - float(sum(np.vdot(C, X) for C, X in zip(rel.sdp.C, sol.X)))
    bound = numeric
    cert = report = None
    if certify:
        cert = extract_certificate(sol, rel, nm)
        report = verify_certificate(cert, eps_res=1e3 * tol, raise_on_reject=False)
        bound = report.bound
        if not math.isfinite(bound):
            bound = -math.inf
    return PopResult(bound, numeric, sol.status, moments, nm, sol, cert, report, k)


def extract_minimizer(y: Dict[Monomial, float], box: Sequence[Tuple], normalization: Optional[Normalization] = None) -> np.ndarray:
    """First-order moments (mapped back if normalized) clamped into the box."""
    n = len(box)
    u = []
    for i in range(n):
        e = tuple(1 if j == i else 0 for j in range(n))
        u.append(float(y.get(e, 0.0)))
    x = normalization.to_original(u) if normalization is not None else np.array(u)
    lo = np.array([float(a) for a, _ in box])
    hi = np.array([float(b) for _, b in box])
    return np.clip(x, lo, hi)


# -- certificates ---------------------------------------------------------------------
@dataclass
class SosCertificate:
    """f - mu = sum_j (z_j^T G_j z_j) g_j + r, stated in normalized coordinates."""

    k: int
    mu: float
    objective: Poly  # exact (normalized) f
    multipliers: List[Poly]  # exact g_0 = 1, g_1, ...
    bases: List[List[Monomial]]
    grams: List[np.ndarray]
    normalization: Normalization
    bounded: bool = True  # feasible set known to lie in [-1, 1]^n

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "sos",
            "order": self.k,
            "mu": repr(float(self.mu)),
            "nvars": self.objective.nvars,
            "bounded": self.bounded,
            "normalization": {
                "shift": [str(s) for s in self.normalization.shift],
                "scale": [str(s) for s in self.normalization.scale],
            },
            "objective": _poly_json(self.objective),
            "multipliers": [_poly_json(g) for g in self.multipliers],
            "blocks": [
                {"basis": [list(m) for m in B], "gram": [[repr(float(v)) for v in row] for row in G]}
                for B, G in zip(self.bases, self.grams)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SosCertificate":
        if d.get("schema") != SCHEMA or d.get("kind") != "sos":
            raise CertificateError("not an nlcert/1 SOS certificate", "schema")
        n = int(d["nvars"])
        nm = Normalization(tuple(Fraction(s) for s in d["normalization"]["shift"]),
                           tuple(Fraction(s) for s in d["normalization"]["scale"]))
        return cls(
            k=int(d["order"]),
            mu=float(d["mu"]),
            objective=_poly_from_json(d["objective"], n),
            multipliers=[_poly_from_json(g, n) for g in d["multipliers"]],
            bases=[[tuple(m) for m in blk["basis"]] for blk in d["blocks"]],
            grams=[np.array([[float(v) for v in row] for row in blk["gram"]]).reshape(len(blk["basis"]), len(blk["basis"]))
                   for blk in d["blocks"]],
            normalization=nm,
            bounded=bool(d.get("bounded", True)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def _poly_json(p: Poly) -> list:
    return [[list(m), str(Fraction(c))] for m, c in sorted(p.terms.items())]


def _poly_from_json(d: list, n: int) -> Poly:
    return Poly(n, {tuple(m): Fraction(c) for m, c in d})


def extract_certificate(sol: SdpSolution, rel: Relaxation, nm: Normalization) -> SosCertificate:
    f0 = float(rel.pop.objective.constant_term())
    mu = f0 - float(sum(np.vdot(C, X) for C, X in zip(rel.sdp.C, sol.X)))
    grams = [0.5 * (X + X.T) for X in sol.X]
    mults = [g.to_fraction() for g in rel.multipliers]
    return SosCertificate(rel.k, mu, rel.pop.objective.to_fraction(), mults, rel.bases, grams, nm,
                          bounded=rel.pop.box is not None)


@dataclass
class VerifyReport:
    accepted: bool
    residual_l1: float
    psd_lower: List[float]
    bound: float
    failed_check: Optional[str] = None


_U = 2.0**-53


def psd_lower_bound(G: np.ndarray) -> float:
    """Rigorous lower bound on lambda_min(G) for a float symmetric matrix.

    Tries Cholesky factorizations of G - t I with a Rump-style safety shift
    covering the rounding errors of the floating-point factorization; a
    successful factorization proves G - t I is positive semidefinite.
    """
    s = G.shape[0]
    if s == 0:
        return 0.0
    G = 0.5 * (G + G.T)
    if not np.any(G - np.diag(np.diag(G))):
        return float(np.min(np.diag(G)))  # diagonal: eigenvalues are exact
    lam = float(np.linalg.eigvalsh(G)[0])
    scale = max(1e-300, float(np.max(np.abs(np.diag(G)))), abs(lam))
    margin = 1e-9 * scale
    t = lam - margin
    for _ in range(40):
        # rounding error bound for Cholesky of an s x s matrix (Demmel/Rump)
        diag = np.abs(np.diag(G) - t)
        c = 3.0 * (s + 2) * _U * float(np.sum(diag)) + 1e-300
        A = G - (t + c) * np.eye(s)
        try:
            np.linalg.cholesky(A)
            return t
        except np.linalg.LinAlgError:
            t = t - max(margin, abs(t)) * 2.0
    return -math.inf


def _basis_sq_bound(B: Sequence[Monomial]) -> int:
    return len(B)


def verify_certificate(cert: SosCertificate, eps_res: float = 1e-5, eps_psd: float = 1e-6,
                       raise_on_reject: bool = True) -> VerifyReport:
    """Recompute the identity residual exactly and bound the PSD defects.

    Returns the rigorous degraded bound
        mu - ||r||_1 - sum_j max(0, -lambda_j) * |z_j| * ||g_j||_1
    valid on the feasible set inside [-1, 1]^n (normalized coordinates).
    """
    n = cert.objective.nvars
    mu = Fraction(cert.mu)
    acc: Dict[Monomial, Fraction] = dict(cert.objective.terms)
    zero = (0,) * n
    acc[zero] = acc.get(zero, Fraction(0)) - mu
    for B, G, g in zip(cert.bases, cert.grams, cert.multipliers):
        s = len(B)
        # sigma = z^T G z as a polynomial (exact)
        sigma: Dict[Monomial, Fraction] = {}
        for r in range(s):
            for c in range(r, s):
                v = float(G[r, c])
                if v == 0.0:
                    continue
                w = Fraction(v) * (1 if r == c else 2)
                m = mon_add(B[r], B[c])
                sigma[m] = sigma.get(m, Fraction(0)) + w
        for sm, sc in sigma.items():
            for gm, gc in g.terms.items():
                m = mon_add(sm, gm)
                acc[m] = acc.get(m, Fraction(0)) - sc * gc
    res_l1 = sum((abs(v) for v in acc.values()), Fraction(0))
    psd = [psd_lower_bound(G) for G in cert.grams]
    degr = res_l1
    for lam, B, g in zip(psd, cert.bases, cert.multipliers):
        if lam < 0:
            degr += Fraction(-lam) * _basis_sq_bound(B) * g.l1_norm() if math.isfinite(lam) else Fraction(10**30)
    if not cert.bounded and degr > 0:
        # without a box the monomials are unbounded: only exact identities count
        bound_exact = None
    else:
        bound_exact = mu - degr
    if bound_exact is None:
        bound = -math.inf
    else:
        bound = float(bound_exact)
        if Fraction(bound) > bound_exact:
            bound = math.nextafter(bound, -math.inf)
    failed = None
    if float(res_l1) > eps_res:
        failed = "residual"
    elif min(psd, default=0.0) < -eps_psd:
        failed = "psd"
    report = VerifyReport(failed is None, float(res_l1), psd, bound, failed)
    if failed and raise_on_reject:
        raise CertificateError(f"certificate rejected: {failed} check failed", failed)
    return report
