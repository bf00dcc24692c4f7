"""Maxplus refinement on the Flyspeck inequality 9922699028.

Runs the template iteration from the reference point x1 and prints the
certified lower bound, the extracted minimizer and the control point added
at each iteration.

Usage: python3 scripts/flyspeck_maxplus.py [--iters 3] [--order 2]
"""

from __future__ import annotations

import argparse
import time

from nlcert.cli import load_problem
from nlcert.optim import Precision, template_optim

X1 = (4.8684, 4.0987, 4.0987, 7.8859, 4.0987, 4.0987)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--order", type=int, default=2)
    args = ap.parse_args()
    p = load_problem("flyspeck9922.prob")
    t0 = time.perf_counter()
    r = template_optim(p.objective, p.box, iter_max=args.iters, k=args.order,
                       p0=Precision(points={"arctan": args.iters}), x0=X1)
    for i, it in enumerate(r.iterations, 1):
        x = ", ".join(f"{v:.4f}" for v in it.x_opt)
        print(f"iteration {i}: m = {it.m:.5f}  x_opt = ({x})  t(x_opt) = {it.value:.5f}")
    points = [prec.points for prec in r.precision.nodes.values()]
    print(f"control points: {points}")
    print(f"time: {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
