"""PRR and accuracy against the number of anchors sharing one room.

    python3 scripts/anchor_sweep.py [--parallel]
"""

import argparse

from wiploc.simcore.metrics import sweep, sweep_table
from wiploc.simcore.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--parallel", action="store_true")
    ap.add_argument("--counts", default="1,2,3,4")
    args = ap.parse_args()
    sc = load_scenario("experiments/sc")
    counts = [int(c) for c in args.counts.split(",")]
    print(sweep_table(sweep(sc, "anchor_count", counts, parallel=args.parallel)), end="")


if __name__ == "__main__":
    main()
