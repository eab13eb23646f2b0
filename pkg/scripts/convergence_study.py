#!/usr/bin/env python3
"""Tree-solver convergence study on instances with closed-form values.

Writes a CSV of |y0(N) - exact| for a ladder of step counts and prints the
observed order (log2 of successive error ratios).

    python scripts/convergence_study.py --out convergence.csv
"""

import argparse
import math
import sys

from bsdelab import Generator, TerminalCondition, solve_tree

INSTANCES = [
    ("discounted_constant", "-y", "1", "implicit", math.exp(-1.0)),
    ("drift_change", "z", "w", "explicit", 1.0),
    ("quadratic_driver", "z^2 / 2", "min(w^2, 4)", "implicit", 1.8337572116654655),
]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, nargs="+", default=[50, 100, 200, 400, 800])
    parser.add_argument("--out", default=None, help="optional CSV path")
    args = parser.parse_args(argv)

    rows = [("instance", "steps", "y0", "error")]
    for name, g_src, xi_src, scheme, exact in INSTANCES:
        g = Generator.parse(g_src)
        xi = TerminalCondition.parse(xi_src)
        errors = []
        for steps in args.steps:
            sol = solve_tree(g, xi, steps, 1.0, scheme)
            err = abs(sol.y0 - exact)
            errors.append(err)
            rows.append((name, steps, repr(sol.y0), repr(err)))
        orders = [
            math.log2(a / b) if b > 0 else float("nan")
            for a, b in zip(errors, errors[1:])
        ]
        print(f"{name:22s} errors: " + "  ".join(f"{e:.2e}" for e in errors))
        print(f"{'':22s} orders: " + "  ".join(f"{o:+.2f}" for o in orders))

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(",".join(str(c) for c in row) for row in rows) + "\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
