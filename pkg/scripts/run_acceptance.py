#!/usr/bin/env python3
"""Run the shipped check suite through the CLI and summarise the outcome.

    python scripts/run_acceptance.py --out runs/suite
"""

import argparse
import sys

from bsdelab.cli import main as cli_main


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="suite_out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    cli_args = ["suite", "--out", args.out]
    if args.seed is not None:
        cli_args += ["--seed", str(args.seed)]
    if args.threads is not None:
        cli_args += ["--threads", str(args.threads)]
    code = cli_main(cli_args)
    print(f"suite exit code: {code} ({'all checks as expected' if code == 0 else 'failures'})")
    return code


if __name__ == "__main__":
    sys.exit(main())
