"""Run the inequality suites and print one line per verdict.

    python3 scripts/run_suite.py --count 200 --n 32 [--suite bernstein ...]
"""
import argparse
import time

from llb.inequalities import SUITES, FieldEnsembleSpec, run_suites


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suite", action="append", choices=SUITES)
    ap.add_argument("--no-doubling", action="store_true")
    args = ap.parse_args()

    spec = FieldEnsembleSpec(count=args.count, n=args.n, seed=args.seed)
    start = time.perf_counter()
    verdicts = run_suites(args.suite or ["all"], spec, doubling=not args.no_doubling)
    for v in verdicts:
        j = v.params.get("j", "")
        doubled = "" if v.doubled_constant is None else f" doubled={v.doubled_constant:.4g}"
        print(f"{v.name:<20} {j!s:>3} C={v.fitted_constant:.4g}{doubled} passed={v.passed} stable={v.stable}")
    print(f"{len(verdicts)} verdicts in {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
