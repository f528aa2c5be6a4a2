"""Per-position PRR along the line between two equal-power anchors, with and
without the spreading codec. Prints CSV suitable for plotting.

    python3 scripts/dead_zone.py [--seed N] > dz.csv
"""

import argparse

from wiploc.simcore.metrics import run
from wiploc.simcore.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    sc = load_scenario("experiments/dz").with_overrides(seed=args.seed)
    with_codec, traces = run(sc)
    raw, _ = run(sc.with_overrides(codec=False))
    multi = {}
    for row in traces:
        multi[row.position] = max(multi.get(row.position, 0), len(row.decoded))
    print("x,prr_raw,prr_codec,max_ids_decoded")
    for a, b in zip(raw.positions, with_codec.positions):
        print(f"{a.position[0]:.2f},{a.prr:.1f},{b.prr:.1f},{multi[b.index]}")


if __name__ == "__main__":
    main()
