"""Rerun the bundled experiments and print them next to the reference numbers.

    python3 scripts/reproduce_tables.py [--seed N]
"""

import argparse

from wiploc.energy import WPA_PROFILE, optimal_tc, tc_grid_search
from wiploc.simcore.metrics import run, simulate_mobile_round, simulate_wpa_window, sweep
from wiploc.simcore.scenario import load_scenario

ROOM_LEVEL = [("rl-1anchor", 100.0, 100.0), ("rl-2anchor", 99.3, 95.5), ("rl-3anchor", 89.6, 84.6)]
CELL_LEVEL = [("cl-room", 97.5, 59.9), ("cl-corridor", 100.0, 82.2)]


def table(rows, seed):
    print(f"{'scenario':<14}{'PRR sim':>9}{'PRR ref':>9}{'acc sim':>9}{'acc ref':>9}")
    for name, prr, acc in rows:
        sc = load_scenario(f"experiments/{name}")
        if seed is not None:
            sc = sc.with_overrides(seed=seed)
        rep, _ = run(sc)
        print(f"{name:<14}{rep.prr:9.1f}{prr:9.1f}{rep.accuracy:9.1f}{acc:9.1f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    print("== room-level localization")
    table(ROOM_LEVEL, args.seed)
    print("\n== cell-level localization")
    table(CELL_LEVEL, args.seed)

    print("\n== anchor-count sweep in one room")
    sc = load_scenario("experiments/sc")
    for r in sweep(sc, "anchor_count", [2, 3, 4]):
        print(f"anchors={r.sweep_value}  PRR={r.prr:.1f}  accuracy={r.accuracy:.1f}")

    print("\n== power budget (t_m = 1000 ms, t_c = 10 ms)")
    sim = simulate_wpa_window()
    led = sim.ledgers()[2]
    print(f"WPA   WFI {led.time_ms['WFI']:.2f} ms (ref 925.9)  average {led.average_mw(1000):.3f} mW (ref 0.49)")
    mob = simulate_mobile_round()
    print(f"mobile average {mob.average_mw(1000):.4f} mW (ref 0.19)")

    print("\n== ADC period")
    t_opt = optimal_tc(WPA_PROFILE, 1000.0)
    best, _ = tc_grid_search(WPA_PROFILE, 1000.0, [0.5 * k for k in range(1, 201)])
    print(f"closed form {t_opt:.3f} ms, grid minimiser {best:.1f} ms")


if __name__ == "__main__":
    main()
