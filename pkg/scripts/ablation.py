"""Seed-averaged test mAP of prior and loss ablations on the ablation benchmark."""

import argparse
import logging

from adwsod.experiments import SEEDS, Benchmark

DEFAULT = ["full", "object_only", "action_only", "center", "grid", "mu_only", "sigma_only"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("variants", nargs="*", default=DEFAULT)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    ap.add_argument("-v", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.v else logging.WARNING, format="%(message)s")
    bench = Benchmark()
    for name in args.variants:
        maps = [bench.run(name, s) for s in args.seeds]
        print(f"{name:16s} mean {100 * sum(maps) / len(maps):6.2f}  per seed " + " ".join(f"{100 * m:6.2f}" for m in maps), flush=True)


if __name__ == "__main__":
    main()
