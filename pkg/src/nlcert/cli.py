"""Command-line front end: ``nlcert certify | minimize | bench | verify``.

Reports are JSON documents with schema ``nlcert/1``; everything that depends
on the machine's speed lives under the ``"timing"`` key so that two runs with
the same configuration produce identical reports once that key is removed.
Exit codes: 0 success (certified / converged), 1 inconclusive, 2 error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from . import expr as ex
from .errors import NlcertError, ParseError
from .expr import Problem, parse, parse_file
from .optim import OptimConfig, Precision, SubdivisionResult, minimize, subdivide_certify
from .sos import SCHEMA, SosCertificate, verify_certificate

EXIT_OK, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2

SUITES = ("mc", "swf", "flyspeck9922", "l1table")


# =============================================================================
# configuration
# =============================================================================
@dataclass
class RunConfig:
    """Validated command-line configuration."""

    file: str
    mode: str  # 'certify' | 'minimize'
    bound: Optional[float] = None
    order: int = 2
    approx: str = "maxplus"
    points: Dict[str, int] = field(default_factory=dict)
    degree: Dict[str, int] = field(default_factory=dict)
    reduce_lift: str = "none"
    nlift_max: int = 12
    max_boxes: int = 64
    iters: int = 3
    tol: float = 1e-8
    seed: int = 0
    gap: float = 1e-2
    workers: int = 1
    out: Optional[str] = None
    cert_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("certify", "minimize"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "certify" and self.bound is None:
            raise ValueError("certify needs --bound")
        if self.approx not in ("maxplus", "minimax", "interval"):
            raise ValueError(f"--approx must be maxplus, minimax or interval, not {self.approx!r}")
        if not (self.reduce_lift in ("none", "maxplus") or _is_l1(self.reduce_lift)):
            raise ValueError("--reduce-lift must be none, maxplus or l1:<d>")
        for name, v in [("--order", self.order), ("--max-boxes", self.max_boxes),
                        ("--iters", self.iters), ("--workers", self.workers)]:
            if v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.nlift_max < 0:
            raise ValueError("--nlift-max must be >= 0")
        if not (self.tol > 0):
            raise ValueError("--tol must be positive")
        for table in (self.points, self.degree):
            for fn, v in table.items():
                if v < 0 or (table is self.points and v < 1):
                    raise ValueError(f"bad precision {fn}={v}")

    def precision(self) -> Precision:
        return Precision(mode=self.approx, points=dict(self.points), degree=dict(self.degree),
                         reduce_lift=self.reduce_lift, nlift_max=self.nlift_max)

    def optim_config(self) -> OptimConfig:
        iters = self.iters
        if self.approx == "maxplus" and self.points:
            # the point budget bounds the number of refinement iterations
            iters = min(iters, max(self.points.values()))
        return OptimConfig(k=self.order, iter_max=iters, precision=self.precision(),
                           max_boxes=self.max_boxes, tol=self.tol, seed=self.seed,
                           workers=self.workers, gap=self.gap)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("cert_dir")
        d.pop("workers")
        return d


def _is_l1(s: str) -> bool:
    if not s.startswith("l1:"):
        return False
    try:
        return int(s[3:]) >= 1
    except ValueError:
        return False


def _assignments(items: Sequence[str], flag: str) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for item in items or ():
        for part in item.split(","):
            name, sep, val = part.partition("=")
            if not sep or not name.strip():
                raise ValueError(f"{flag} expects <fn>=<int>, got {part!r}")
            name = "arctan" if name.strip() == "atan" else name.strip()
            try:
                out[name] = int(val)
            except ValueError:
                raise ValueError(f"{flag} expects an integer in {part!r}") from None
    return out


# =============================================================================
# reports
# =============================================================================
def _frac(q: Fraction) -> str:
    return str(Fraction(q))


def _num(x: float):
    if x is None:
        return None
    x = float(x)
    return repr(x) if not math.isfinite(x) else x


def subdivision_report(res: SubdivisionResult, mode: str, cfg_echo: dict, problem: Problem,
                       cert_dir: Optional[Path]) -> dict:
    """JSON-ready report; certificates are written to ``cert_dir`` when given."""
    boxes = []
    for i, rec in enumerate(res.records):
        cert_name = None
        if rec.certificate is not None and cert_dir is not None:
            cert_name = f"box{i:04d}.json"
            (cert_dir / cert_name).write_text(rec.certificate.dumps() + "\n", encoding="utf-8")
        boxes.append({
            "box": [[_frac(a), _frac(b)] for a, b in rec.box],
            "m": _num(rec.m),
            "closed": rec.closed,
            "iterations": [_num(v) for v in rec.iterations],
            "status": rec.status,
            "certificate": cert_name,
        })
    return {
        "schema": SCHEMA,
        "kind": "report",
        "version": __version__,
        "mode": mode,
        "config": cfg_echo,
        "problem": {"nvars": problem.nvars, "names": problem.names,
                    "objective": ex.to_string(problem.objective, problem.names)},
        "status": res.status,
        "bound": _num(res.bound),
        "boxes": res.boxes,
        "x_best": None if res.x_best is None else [float(v) for v in res.x_best],
        "value_best": _num(res.value_best),
        "records": boxes,
        "timing": {"wall_seconds": res.time},
    }


def validate_report(d: dict) -> None:
    """Raise ValueError unless ``d`` has the nlcert/1 report shape."""
    need = {"schema": str, "kind": str, "mode": str, "config": dict, "problem": dict,
            "status": str, "boxes": int, "records": list, "timing": dict}
    for key, typ in need.items():
        if not isinstance(d.get(key), typ):
            raise ValueError(f"report field {key!r} missing or not {typ.__name__}")
    if d["schema"] != SCHEMA or d["kind"] != "report":
        raise ValueError("not an nlcert/1 report")
    for r in d["records"]:
        for key in ("box", "m", "closed", "iterations", "status", "certificate"):
            if key not in r:
                raise ValueError(f"box record lacks {key!r}")


def strip_timing(d: dict) -> dict:
    """Copy of a report without machine-dependent fields."""
    d = json.loads(json.dumps(d))
    d.pop("timing", None)
    for row in d.get("rows", []):
        row.pop("time", None)
    return d


def _dump(d: dict) -> str:
    return json.dumps(d, indent=1, sort_keys=True)


# =============================================================================
# commands
# =============================================================================
def load_problem(path: str) -> Problem:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("nlcert") / "problems" / path
        if bundled.is_file():
            return parse(bundled.read_text(encoding="utf-8"))
        raise FileNotFoundError(f"no such problem file: {path}")
    return parse_file(p)


def run(cfg: RunConfig) -> int:
    problem = load_problem(cfg.file)
    if problem.constraints:
        raise NlcertError("constraint declarations are not supported by the optimizer "
                          "(only box-constrained problems)")
    cert_dir = None
    if cfg.cert_dir:
        cert_dir = Path(cfg.cert_dir)
        cert_dir.mkdir(parents=True, exist_ok=True)
    oc = cfg.optim_config()
    if cfg.mode == "certify":
        res = subdivide_certify(problem.objective, problem.box, cfg.bound, oc)
        ok = res.status == "certified"
    else:
        res = minimize(problem.objective, problem.box, oc)
        ok = res.status == "converged"
    report = subdivision_report(res, cfg.mode, cfg.echo(), problem, cert_dir)
    if cfg.out:
        Path(cfg.out).write_text(_dump(report) + "\n", encoding="utf-8")
    print(f"{cfg.mode}: status={res.status} bound={res.bound:.6g} boxes={res.boxes} "
          f"time={res.time:.2f}s")
    return EXIT_OK if ok else EXIT_INCONCLUSIVE


# -- benchmark suites --------------------------------------------------------------
def swf_problem(n: int, eps: int = 0) -> Problem:
    """Schwefel problem on [1, 500]^n; with eps = 1 the coupled variant
    -sum_{i<n} (x_i + x_{i+1}) sin(sqrt(x_i))."""
    names = [f"x{i}" for i in range(1, n + 1)]
    if eps:
        terms = [f"(x{i} + {eps}*x{i + 1})*sin(sqrt(x{i}))" for i in range(1, n)]
    else:
        terms = [f"x{i}*sin(sqrt(x{i}))" for i in range(1, n + 1)]
    src = "".join(f"var {v} in [1, 500];\n" for v in names)
    src += "objective -(" + " + ".join(terms) + ");\n"
    return parse(src)


def bench(suite: str, args) -> dict:
    """Rows (bound, boxes, time) for one benchmark suite."""
    from .approx import l1_underapprox
    from .lift import max_sa, min_sa

    rows: List[dict] = []
    seed = args.seed
    if suite == "mc":
        p = load_problem("mc.prob")
        oc = OptimConfig(k=args.order or 2, iter_max=2, precision=Precision(points={"sin": 2}),
                         max_boxes=args.max_boxes or 64, seed=seed)
        t0 = time.perf_counter()
        r = subdivide_certify(p.objective, p.box, -1.92, oc)
        rows.append({"problem": "MC", "n": 2, "m0": -1.92, "p": "#s_sin=2", "k": oc.k,
                     "status": r.status, "bound": _num(r.bound), "boxes": r.boxes,
                     "time": time.perf_counter() - t0})
    elif suite == "swf":
        n = args.n or 2
        p = swf_problem(n, args.eps)
        oc = OptimConfig(k=args.order or 2, iter_max=args.iters or 3,
                         precision=Precision(points={"sin": args.iters or 3}),
                         max_boxes=args.max_boxes or 64, seed=seed, gap=args.gap)
        t0 = time.perf_counter()
        r = minimize(p.objective, p.box, oc)
        rows.append({"problem": "SWF", "n": n, "eps": args.eps, "k": oc.k, "status": r.status,
                     "bound": _num(r.bound), "value_best": _num(r.value_best), "boxes": r.boxes,
                     "time": time.perf_counter() - t0})
    elif suite == "flyspeck9922":
        p = load_problem("flyspeck9922_sa.prob")
        for k in (args.order,) if args.order else (2,):
            t0 = time.perf_counter()
            b = min_sa(p.objective, p.box, k)
            rows.append({"problem": "9922699028/sa", "k": k, "bound": _num(b),
                         "time": time.perf_counter() - t0})
        t0 = time.perf_counter()
        row = interval_baseline(k=args.order or 2)
        row["time"] = time.perf_counter() - t0
        rows.append(row)
    elif suite == "l1table":
        p = load_problem("flyspeck9922_sa.prob")
        for d in ((args.degree,) if args.degree else (2, 4)):
            k = args.order or 2
            t0 = time.perf_counter()
            r = l1_underapprox(p.objective, p.box, d, k, seed=seed)
            rows.append({"problem": "9922699028/sa", "d": d, "k": r.k, "mu": _num(r.mu),
                         "tightness": _num(r.tightness), "tightness_err": _num(r.tightness_err),
                         "time": time.perf_counter() - t0})
    else:
        raise ValueError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES)}")
    return {"schema": SCHEMA, "kind": "bench", "suite": suite, "rows": rows}


def interval_baseline(k: int = 2, arg_lower: Optional[float] = None) -> dict:
    """Interval-arithmetic lower bound of l + arctan(f) without subdivision.

    l is enclosed by interval arithmetic and arctan(f) by monotonicity from
    the certified lower bound min_sa(f); f is the argument in the sign of the
    semialgebraic benchmark (flyspeck9922_sa.prob), whose minimum is the
    binding one.  ``arg_lower`` reuses an already computed min_sa(f) at order k.
    """
    from .dictionary import ARCTAN
    from .expr import interval_eval
    from .interval import Interval, box_of
    from .lift import min_sa

    full = load_problem("flyspeck9922.prob")
    l = full.objective.args[0]  # objective = l + arctan(d4 / sqrt(4 x1 delta))
    f = load_problem("flyspeck9922_sa.prob").objective
    lI = interval_eval(l, box_of(full.box))
    m = min_sa(f, full.box, k) if arg_lower is None else arg_lower
    lower = lI.lo + ARCTAN.ext_f(Interval(m, m)).lo
    return {"problem": "9922699028/interval", "k": k, "l_lower": _num(lI.lo),
            "arg_lower": _num(m), "bound": _num(lower)}


# -- argument parsing -------------------------------------------------------------------
def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--file", required=True, help="problem file (or name of a bundled problem)")
    sp.add_argument("--order", type=int, default=2, help="relaxation order k")
    sp.add_argument("--approx", default="maxplus", choices=("maxplus", "minimax", "interval"))
    sp.add_argument("--points", action="append", default=[], metavar="FN=K",
                    help="maxplus point budget per function, e.g. sin=2")
    sp.add_argument("--degree", action="append", default=[], metavar="FN=D",
                    help="minimax degree per function, e.g. exp=4")
    sp.add_argument("--reduce-lift", default="none", help="none | maxplus | l1:<d>")
    sp.add_argument("--nlift-max", type=int, default=12)
    sp.add_argument("--max-boxes", type=int, default=64)
    sp.add_argument("--iters", type=int, default=3)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--gap", type=float, default=1e-2, help="relative gap for minimize")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", help="write the JSON report here")
    sp.add_argument("--cert-dir", help="write one certificate file per closed box here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlcert", description="Certified lower bounds of nonlinear "
                                 "functions by templates and sums of squares.")
    ap.add_argument("--version", action="version", version=f"nlcert {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("certify", help="prove objective >= BOUND on the box")
    _common(c)
    c.add_argument("--bound", type=float, required=True)
    m = sub.add_parser("minimize", help="certified lower bound of the objective")
    _common(m)
    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", choices=SUITES)
    b.add_argument("--order", type=int, default=None)
    b.add_argument("--max-boxes", type=int, default=None)
    b.add_argument("--iters", type=int, default=None)
    b.add_argument("--n", type=int, default=None, help="dimension (swf)")
    b.add_argument("--eps", type=int, default=0, choices=(0, 1), help="coupling (swf)")
    b.add_argument("--degree", type=int, default=None, help="polynomial degree (l1table)")
    b.add_argument("--gap", type=float, default=1e-2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    v = sub.add_parser("verify", help="re-check a certificate file")
    v.add_argument("certificate")
    v.add_argument("--tol", type=float, default=1e-8)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse reports its own message
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    try:
        if args.command == "bench":
            rep = bench(args.suite, args)
            text = _dump(rep)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            for row in rep["rows"]:
                print(json.dumps(row, sort_keys=True))
            return EXIT_OK
        if args.command == "verify":
            cert = SosCertificate.from_json(json.loads(Path(args.certificate).read_text()))
            rep = verify_certificate(cert, eps_res=1e3 * args.tol, raise_on_reject=False)
            print(f"verify: accepted={rep.accepted} bound={rep.bound:.9g} "
                  f"residual_l1={rep.residual_l1:.3g}")
            return EXIT_OK if rep.accepted else EXIT_INCONCLUSIVE
        cfg = RunConfig(
            file=args.file, mode=args.command, bound=getattr(args, "bound", None),
            order=args.order, approx=args.approx, points=_assignments(args.points, "--points"),
            degree=_assignments(args.degree, "--degree"), reduce_lift=args.reduce_lift,
            nlift_max=args.nlift_max, max_boxes=args.max_boxes, iters=args.iters, tol=args.tol,
            seed=args.seed, gap=args.gap, workers=args.workers, out=args.out,
            cert_dir=args.cert_dir)
        return run(cfg)
    except ParseError as e:
        print(f"nlcert: parse error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (NlcertError, ValueError, OSError) as e:
        print(f"nlcert: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
