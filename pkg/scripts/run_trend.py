#!/usr/bin/env python3
"""Run the seeded decoding-trend experiment and print the per-seed table.

Usage: python scripts/run_trend.py [--seeds N] [--tau T] [--num-test N]
"""

import argparse
import time

from lfmmi.experiments import TrendSpec, run_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--tau", type=float, default=TrendSpec.tau)
    ap.add_argument("--num-test", type=int, default=TrendSpec.num_test)
    ap.add_argument("--beam", type=int, default=TrendSpec.beam)
    args = ap.parse_args()
    spec = TrendSpec(
        seeds=tuple(range(args.seeds)),
        tau=args.tau,
        num_test=args.num_test,
        beam=args.beam,
    )
    t0 = time.time()
    result = run_trend(spec)
    print(result.summary())
    print(f"({time.time() - t0:.1f}s, {len(spec.seeds) * spec.num_test} utterances)")


if __name__ == "__main__":
    main()
