"""Block-diagonal SDPs and a primal-dual interior-point solver.

Standard form (primal is a minimization)::

    (P)  min  <C, X>   s.t.  <A_i, X> = b_i  (i = 1..m),   X >= 0
    (D)  max  b^T y    s.t.  sum_i y_i A_i + S = C,        S >= 0

where X, S, C and every A_i are block-diagonal symmetric matrices.  The
solver is an infeasible-start path-following method with Nesterov-Todd
scaling and Mehrotra's predictor-corrector, using dense linear algebra per
block.  Constraint matrices are stored as upper-triangular triplets; the
Schur complement M_ij = <A_i, W A_j W> is assembled in chunks from gathered
rows of W, which costs O(nnz^2) per block and keeps memory bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible-certificate"
DUAL_INFEASIBLE = "dual-infeasible-certificate"
NUMERICAL_FAILURE = "numerical-failure"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class Block:
    """Constraint data of one block, as upper-triangular triplets.

    Entry t contributes ``u[t] * (E_pq + E_qp)`` to ``A_{con[t]}`` (so a
    diagonal entry of value v is stored with u = v/2).
    """

    size: int
    C: np.ndarray
    con: np.ndarray
    p: np.ndarray
    q: np.ndarray
    u: np.ndarray


class SdpProblem:
    """Block-diagonal SDP in the (P)/(D) form above.

    Build it with :meth:`add_block` / :meth:`add_entry`, or from arrays via
    :meth:`from_dense` (convenient for tests).
    """

    def __init__(self, block_sizes: Sequence[int], m: int):
        self.block_sizes = [int(s) for s in block_sizes]
        self.m = int(m)
        self.b = np.zeros(self.m)
        self.C = [np.zeros((s, s)) for s in self.block_sizes]
        self._trip: List[Dict[Tuple[int, int, int], float]] = [dict() for _ in self.block_sizes]
        self._blocks: Optional[List[Block]] = None

    # -- construction ------------------------------------------------------
    def add_entry(self, i: int, blk: int, r: int, c: int, v: float) -> None:
        """Add v to entries (r,c) and (c,r) of A_i in block blk (once if r == c)."""
        if r > c:
            r, c = c, r
        key = (i, r, c)
        d = self._trip[blk]
        d[key] = d.get(key, 0.0) + float(v)
        self._blocks = None

    def set_cost(self, blk: int, r: int, c: int, v: float) -> None:
        self.C[blk][r, c] = v
        self.C[blk][c, r] = v

    @classmethod
    def from_dense(cls, C: Sequence[np.ndarray], A: Sequence[Sequence[np.ndarray]], b) -> "SdpProblem":
        """C[blk] dense, A[i][blk] dense symmetric, b vector."""
        sizes = [np.atleast_2d(c).shape[0] for c in C]
        prob = cls(sizes, len(A))
        prob.b = np.asarray(b, dtype=float).copy()
        for blk, c in enumerate(C):
            prob.C[blk] = np.array(np.atleast_2d(c), dtype=float)
        for i, Ai in enumerate(A):
            for blk, a in enumerate(Ai):
                a = np.atleast_2d(np.asarray(a, dtype=float))
                rr, cc = np.nonzero(np.triu(a))
                for r, c in zip(rr, cc):
                    prob.add_entry(i, blk, r, c, a[r, c])
        return prob

    def blocks(self) -> List[Block]:
        if self._blocks is None:
            out = []
            for blk, s in enumerate(self.block_sizes):
                items = sorted(self._trip[blk].items())
                items = [(k, v) for k, v in items if v != 0.0]
                if items:
                    arr = np.array([k for k, _ in items], dtype=np.int64)
                    vals = np.array([v for _, v in items])
                    con, p, q = arr[:, 0], arr[:, 1], arr[:, 2]
                else:
                    con = p = q = np.zeros(0, dtype=np.int64)
                    vals = np.zeros(0)
                u = np.where(p == q, 0.5 * vals, vals)
                out.append(Block(s, self.C[blk], con, p, q, u))
            self._blocks = out
        return self._blocks

    def dense_A(self, i: int) -> List[np.ndarray]:
        """Dense blocks of A_i (for tests and small problems)."""
        out = []
        for blk, s in enumerate(self.block_sizes):
            M = np.zeros((s, s))
            for (ii, r, c), v in self._trip[blk].items():
                if ii == i:
                    M[r, c] += v
                    if r != c:
                        M[c, r] += v
            out.append(M)
        return out

    # -- linear maps ---------------------------------------------------------
    def op_A(self, X: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for B, Xb in zip(self.blocks(), X):
            if len(B.u):
                out += np.bincount(B.con, weights=2.0 * B.u * Xb[B.p, B.q], minlength=self.m)
        return out

    def op_At(self, y: np.ndarray) -> List[np.ndarray]:
        out = []
        for B in self.blocks():
            s = B.size
            if len(B.u):
                M = sp.coo_matrix((B.u * y[B.con], (B.p, B.q)), shape=(s, s)).toarray()
                out.append(M + M.T)
            else:
                out.append(np.zeros((s, s)))
        return out

    @property
    def nnz(self) -> int:
        return sum(len(B.u) for B in self.blocks())


@dataclass
class SdpSolution:
    X: List[np.ndarray]
    y: np.ndarray
    S: List[np.ndarray]
    pobj: float
    dobj: float
    pinf: float
    dinf: float
    gap: float
    status: str
    iterations: int
    trace: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _inner(A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(a, b) for a, b in zip(A, B)))


def _fro(A: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(a, a)) for a in A))


_SCHUR_CHUNK_ELEMS = 2_000_000  # elements of K formed at once


def _schur_data(B: Block, m: int):
    """Cached sparse helpers of a block: P (nnz x m, column j holds u of A_j)
    and, per chunk of rows, the group-sum matrix onto distinct constraints."""
    cache = getattr(B, "_schur_cache", None)
    if cache is not None and cache[0] == m:
        return cache[1]
    nnz = len(B.u)
    P = sp.csc_matrix((B.u, (np.arange(nnz), B.con)), shape=(nnz, m))
    chunk = max(1, min(nnz, int(_SCHUR_CHUNK_ELEMS // max(nnz, 1))))
    chunks = []
    for start in range(0, nnz, chunk):
        stop = min(nnz, start + chunk)
        cons = B.con[start:stop]
        ucons, inv = np.unique(cons, return_inverse=True)
        G = sp.csr_matrix((2.0 * B.u[start:stop], (inv, np.arange(stop - start))),
                          shape=(len(ucons), stop - start))
        chunks.append((start, stop, ucons, G, P[start:].tocsc(), stop - start))
    data = (P, chunks)
    object.__setattr__(B, "_schur_cache", (m, data))
    return data


def _schur_block(B: Block, W: np.ndarray, m: int, M: np.ndarray) -> None:
    """Accumulate M_ij += <A_i^B, W A_j^B W> for one block.

    With A_i = sum_a u_a (E_{p_a q_a} + E_{q_a p_a}) the contribution is
    sum_{a in i, b in j} 2 u_a u_b K_ab where
    K_ab = W[p_a,p_b] W[q_a,q_b] + W[p_a,q_b] W[q_a,p_b].  K is symmetric, so
    only the chunk rows against columns from the chunk start onwards are
    formed and the strictly-upper part is mirrored.
    """
    nnz = len(B.u)
    if nnz == 0:
        return
    if B.size == 1:
        # 1x1 block: A_i = a_i, contribution a_i a_j w^2
        a = np.bincount(B.con, weights=2.0 * B.u, minlength=m)
        idx = np.nonzero(a)[0]
        M[np.ix_(idx, idx)] += (W[0, 0] ** 2) * np.outer(a[idx], a[idx])
        return
    _, chunks = _schur_data(B, m)
    for start, stop, ucons, G, Ptail, c in chunks:
        p_c, q_c = B.p[start:stop], B.q[start:stop]
        pt, qt = B.p[start:], B.q[start:]
        Wpc, Wqc = W[p_c], W[q_c]  # c x s
        T = Wpc[:, pt] * Wqc[:, qt]
        T += Wpc[:, qt] * Wqc[:, pt]
        # diagonal chunk block (rows and columns in [start, stop))
        Rd = np.asarray((Ptail[:c].T @ T[:, :c].T).T)
        M[ucons] += G @ Rd
        if stop < nnz:
            Ro = np.asarray((Ptail[c:].T @ T[:, c:].T).T)  # c x m
            Co = G @ Ro  # len(ucons) x m
            M[ucons] += Co
            M[:, ucons] += Co.T


def _chol(A: np.ndarray) -> Optional[np.ndarray]:
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None


def _psd_repair(A: np.ndarray, floor: float) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    w = np.maximum(w, floor)
    return (V * w) @ V.T


def _max_step(Lam: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with diag(Lam) + alpha*D >= 0 (inf if unbounded)."""
    isq = 1.0 / np.sqrt(Lam)
    E = D * isq[:, None] * isq[None, :]
    if not np.all(np.isfinite(E)):
        return 0.0  # broken direction: no step
    lmin = np.linalg.eigvalsh(0.5 * (E + E.T))[0]
    return math.inf if lmin >= 0 else -1.0 / lmin


def solve(prob: SdpProblem, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False) -> SdpSolution:
    """Solve (P)/(D); see module docstring for the conventions."""
    if prob.m < 1:
        raise ValueError("SDP needs at least one constraint")
    if not (0 < tol <= 1e-2):
        raise ValueError("tol must lie in (0, 1e-2]")
    blocks = prob.blocks()
    m = prob.m
    b = prob.b
    C = [B.C for B in blocks]
    nb = len(blocks)
    ntot = sum(B.size for B in blocks)

    # -- initial point (scaled identities) ---------------------------------
    normA = np.zeros(m)
    for B in blocks:
        if len(B.u):
            w = np.where(B.p == B.q, 4.0 * B.u**2, 2.0 * (B.u**2))  # ||.||_F^2 contributions
            normA += np.bincount(B.con, weights=w, minlength=m)
    normA = np.sqrt(normA)
    normb = float(np.linalg.norm(b))
    normC = _fro(C)
    X, S = [], []
    for B in blocks:
        s = B.size
        xi = max(10.0, math.sqrt(s), s * float(np.max((1.0 + np.abs(b)) / (1.0 + normA))))
        eta = max(10.0, math.sqrt(s), float(np.max(normA)), float(np.linalg.norm(B.C)))
        X.append(xi * np.eye(s))
        S.append(eta * np.eye(s))
    y = np.zeros(m)

    trace: List[dict] = []
    status = ITERATION_LIMIT
    best = None
    it = 0
    for it in range(max_iter + 1):
        AX = prob.op_A(X)
        Aty = prob.op_At(y)
        rp = b - AX
        Rd = [C[k] - S[k] - Aty[k] for k in range(nb)]
        pobj = _inner(C, X)
        dobj = float(b @ y)
        mu = _inner(X, S) / ntot
        pinf = float(np.linalg.norm(rp)) / (1.0 + normb)
        dinf = _fro(Rd) / (1.0 + normC)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        trace.append(dict(it=it, pobj=pobj, dobj=dobj, pinf=pinf, dinf=dinf, gap=gap, mu=mu))
        if verbose:  # pragma: no cover
            print(f"{it:3d} p={pobj:+.8e} d={dobj:+.8e} pinf={pinf:.1e} dinf={dinf:.1e} gap={gap:.1e}")
        score = max(pinf, dinf, gap)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), [s_.copy() for s_ in S], pobj, dobj, pinf, dinf, gap)
        if pinf <= tol and dinf <= tol and gap <= tol:
            status = OPTIMAL
            break
        # infeasibility certificates: y/(b^T y) with A^T y <= 0, or
        # X/(-<C,X>) with A(X) = 0; both normalizations become exact as the
        # corresponding objective diverges.
        nRd = _fro(Rd)
        if dobj > 0 and (normC + nRd) / dobj < 1e-8:
            status = PRIMAL_INFEASIBLE
            break
        if pobj < 0 and (normb + float(np.linalg.norm(rp))) / (-pobj) < 1e-8:
            status = DUAL_INFEASIBLE
            break
        if it == max_iter:
            break

        # -- NT scaling per block ----------------------------------------------
        G, Ginv, Lam, W = [], [], [], []
        failed = False
        for k in range(nb):
            L = _chol(X[k])
            R = _chol(S[k])
            if L is None or R is None:
                failed = True
                break
            U, lam, Vt = np.linalg.svd(R.T @ L)
            lam = np.maximum(lam, 1e-300)
            isq = 1.0 / np.sqrt(lam)
            Gk = (L @ Vt.T) * isq[None, :]
            Gik = (U.T @ R.T) * isq[:, None]
            G.append(Gk)
            Ginv.append(Gik)
            Lam.append(lam)
            W.append(Gk @ Gk.T)
        if failed:
            status = NUMERICAL_FAILURE
            break

        # -- Schur complement ----------------------------------------------------
        M = np.zeros((m, m))
        for k, B in enumerate(blocks):
            _schur_block(B, W[k], m, M)
        if not np.all(np.isfinite(M)) or float(np.max(np.abs(M))) > 1e300:
            status = NUMERICAL_FAILURE  # scaling blew up; keep the best iterate
            break
        M = 0.5 * (M + M.T)
        fac = None
        reg = 0.0
        dmax = float(np.max(np.abs(np.diag(M)))) or 1.0
        for attempt in range(8):
            try:
                Mr = M + reg * np.eye(m) if reg else M
                fac = sla.cho_factor(Mr, lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = dmax * (1e-14 if reg == 0 else reg / dmax * 100)
        if fac is None:
            status = NUMERICAL_FAILURE
            break

        WRdW = [W[k] @ Rd[k] @ W[k] for k in range(nb)]

        def direction(Rc):
            rhs = rp - prob.op_A([Rc[k] - WRdW[k] for k in range(nb)])
            dy = sla.cho_solve(fac, rhs, check_finite=False)
            for _ in range(3):  # iterative refinement against the unregularized system
                res = rhs - M @ dy
                if not np.all(np.isfinite(res)):
                    break
                dy = dy + sla.cho_solve(fac, res, check_finite=False)
            Atdy = prob.op_At(dy)
            dS = [Rd[k] - Atdy[k] for k in range(nb)]
            dX = [Rc[k] - W[k] @ dS[k] @ W[k] for k in range(nb)]
            dX = [0.5 * (d + d.T) for d in dX]
            return dX, dy, dS

        def steps(dX, dS):
            ap = ad = math.inf
            sX, sS = [], []
            for k in range(nb):
                dXt = Ginv[k] @ dX[k] @ Ginv[k].T
                dSt = G[k].T @ dS[k] @ G[k]
                dXt = 0.5 * (dXt + dXt.T)
                dSt = 0.5 * (dSt + dSt.T)
                sX.append(dXt)
                sS.append(dSt)
                ap = min(ap, _max_step(Lam[k], dXt))
                ad = min(ad, _max_step(Lam[k], dSt))
            return ap, ad, sX, sS

        def finite(dX, dy, dS):
            return bool(np.all(np.isfinite(dy))) and all(
                np.all(np.isfinite(dX[k])) and np.all(np.isfinite(dS[k])) for k in range(nb))

        # predictor
        Rc = [-X[k] for k in range(nb)]
        dX, dy, dS = direction(Rc)
        if not finite(dX, dy, dS):
            status = NUMERICAL_FAILURE
            break
        ap, ad, sX, sS = steps(dX, dS)
        a_p, a_d = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(
            float(np.vdot(X[k] + a_p * dX[k], S[k] + a_d * dS[k])) for k in range(nb)
        ) / ntot
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector
        Rc = []
        for k in range(nb):
            lam = Lam[k]
            Q = sX[k] @ sS[k]
            rhs = 2.0 * sigma * mu * np.eye(len(lam)) - 2.0 * np.diag(lam**2) - (Q + Q.T)
            Dm = rhs / (lam[:, None] + lam[None, :])
            Rc.append(G[k] @ Dm @ G[k].T)
        dX, dy, dS = direction(Rc)
        if not finite(dX, dy, dS):
            status = NUMERICAL_FAILURE
            break
        ap, ad, _, _ = steps(dX, dS)
        a_p = min(1.0, 0.98 * ap)
        a_d = min(1.0, 0.98 * ad)

        X = [X[k] + a_p * dX[k] for k in range(nb)]
        S = [S[k] + a_d * dS[k] for k in range(nb)]
        y = y + a_d * dy
        X = [0.5 * (x + x.T) for x in X]
        S = [0.5 * (s_ + s_.T) for s_ in S]
        if max(a_p, a_d) < 1e-10:
            status = NUMERICAL_FAILURE
            break

    if status != OPTIMAL and best is not None and status in (NUMERICAL_FAILURE, ITERATION_LIMIT):
        _, X, y, S, pobj, dobj, pinf, dinf, gap = best
    return SdpSolution(X, y, S, pobj, dobj, pinf, dinf, gap, status, it, trace)


# -- SDPA sparse format -------------------------------------------------------
def write_sdpa(prob: SdpProblem) -> str:
    """Serialize in SDPA sparse format.

    SDPA's primal  min c^T x  s.t.  sum_i x_i F_i - F_0 >= 0  is our (D) with
    x = y, c = -b, F_0 = -C, F_i = -A_i.  Numbers use repr() so that reading
    the text back and writing again reproduces it exactly.
    """
    lines = [f"{prob.m}", f"{len(prob.block_sizes)}", " ".join(str(s) for s in prob.block_sizes)]
    lines.append(" ".join(repr(float(-v)) for v in prob.b))
    for blk, Cb in enumerate(prob.C):
        rr, cc = np.nonzero(np.triu(Cb))
        for r, c in zip(rr, cc):
            lines.append(f"0 {blk + 1} {r + 1} {c + 1} {repr(float(-Cb[r, c]))}")
    for blk in range(len(prob.block_sizes)):
        for (i, r, c), v in sorted(prob._trip[blk].items()):
            if v != 0.0:
                lines.append(f"{i + 1} {blk + 1} {r + 1} {c + 1} {repr(float(-v))}")
    return "\n".join(lines) + "\n"


def read_sdpa(text: str) -> SdpProblem:
    """Parse SDPA sparse format (comments starting with '"' or '*' allowed)."""
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and ln[0] not in '"*']
    clean = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ")
    m = int(clean(rows[0]).split()[0])
    nblocks = int(clean(rows[1]).split()[0])
    sizes = [abs(int(t)) for t in clean(rows[2]).split()[:nblocks]]
    bvals = [float(t) for t in clean(rows[3]).split()[:m]]
    prob = SdpProblem(sizes, m)
    prob.b = -np.array(bvals)
    for ln in rows[4:]:
        t = clean(ln).split()
        i, blk, r, c, v = int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        if i == 0:
            prob.set_cost(blk, r, c, -v)
        else:
            prob.add_entry(i - 1, blk, r, c, -v)
    return prob
