"""Test mAP as the fraction of box-annotated training samples grows, against a supervised-only run."""

import argparse
import logging

from adwsod.experiments import SEEDS, Benchmark

RUNS = ["full", "rho_0.1", "rho_0.5", "rho_1.0", "supervised_only"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    ap.add_argument("-v", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.v else logging.WARNING, format="%(message)s")
    bench = Benchmark()
    for name in RUNS:
        maps = [bench.run(name, s) for s in args.seeds]
        label = "rho_0.0" if name == "full" else name
        print(f"{label:16s} mean {100 * sum(maps) / len(maps):6.2f}  per seed " + " ".join(f"{100 * m:6.2f}" for m in maps), flush=True)


if __name__ == "__main__":
    main()
