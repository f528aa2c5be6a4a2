"""Command-line front end.

    wiploc run <scenario> [--seed N] [--out DIR] [--mode wiploc|wiploc++] [--no-codec]
    wiploc sweep <scenario> --param NAME --values V1,V2,... [--parallel]
    wiploc codec encode <id> | codec decode <hex>
    wiploc energy [--t-m MS] [profile overrides]

Exit status: 0 on success, 1 for scenario/validation errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import codec
from .energy import WPA_PROFILE, EnergyError, PowerProfile, optimal_tc, tc_grid_search
from .simcore.metrics import SWEEP_PARAMS, MetricsError, report_text, run, sweep, sweep_table, write_outputs
from .simcore.scenario import ScenarioError, load_scenario

log = logging.getLogger("wiploc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _load(args):
    sc = load_scenario(args.scenario)
    return sc.with_overrides(seed=args.seed, mode=args.mode, codec=False if args.no_codec else None)


def cmd_run(args) -> int:
    sc = _load(args)
    out = Path(args.out) if args.out else Path("out") / sc.name
    log.info("running %s (seed %d, mode %s)", sc.name, sc.seed, sc.mode.value)
    report, traces = run(sc)
    paths = write_outputs(report, traces, out)
    sys.stdout.write(report_text(report))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return 0


def _parse_values(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        v = float(tok)
        vals.append(int(v) if v.is_integer() else v)
    if not vals:
        raise ValueError("no values given")
    return vals


def cmd_sweep(args, parser) -> int:
    try:
        values = _parse_values(args.values)
    except ValueError as exc:
        parser.error(f"--values: {exc}")
    sc = _load(args)
    reports = sweep(sc, args.param, values, parallel=args.parallel)
    table = sweep_table(reports)
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(table)
    return 0


def cmd_codec(args, parser) -> int:
    orth, fec = codec.default_codebooks()
    if args.action == "encode":
        if not 0 <= args.value < len(orth.codes):
            parser.error(f"anchor id must be in [0, {len(orth.codes)})")
        print(codec.encode(args.value, orth, fec).hex())
        return 0
    text = args.hex.strip().lower()
    n = codec.payload_length(orth, fec) // 4
    if len(text) != n:
        parser.error(f"payload must be {n} hex characters, got {len(text)}")
    try:
        payload = codec.Payload.from_hex(text)
    except (ValueError, codec.CodecError) as exc:
        parser.error(f"bad hex payload: {exc}")
    for r in codec.decode(payload, orth, fec):
        print(f"{r.anchor_id} {r.d_c}")
    return 0


def cmd_energy(args, parser) -> int:
    if args.t_m <= 0:
        parser.error("--t-m must be positive")
    if args.step <= 0 or args.tc_max < args.step:
        parser.error("need 0 < --step <= --tc-max")
    try:
        profile = PowerProfile(
            p_tx=args.p_tx, p_rx=args.p_rx, p_adc=args.p_adc, p_wfi=args.p_wfi, t_tx=args.t_tx, t_adc=args.t_adc
        )
        best_closed = optimal_tc(profile, args.t_m)
        grid = np.round(np.arange(args.step, args.tc_max + args.step / 2, args.step), 6)
        best, table = tc_grid_search(profile, args.t_m, [float(g) for g in grid])
    except EnergyError as exc:
        parser.error(f"degenerate profile: {exc}")
    print(f"optimal_tc_ms: {best_closed:.4f}")
    print(f"grid_best_tc_ms: {best:.4f}")
    print("t_c_ms,avg_power_mw")
    for t_c, p in table:
        print(f"{t_c:g},{p:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wiploc", description="Collision-tolerant localization simulator")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(sp):
        sp.add_argument("scenario", help="scenario YAML path or bundled name (e.g. experiments/rl-3anchor)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--mode", choices=("wiploc", "wiploc++"), default=None)
        sp.add_argument("--no-codec", action="store_true", help="raw-ID payloads, CRC-only acceptance")
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("run", help="simulate a scenario and write trace/report/energy files")
    scenario_args(sp)

    sp = sub.add_parser("sweep", help="rerun a scenario over parameter values")
    scenario_args(sp)
    sp.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--parallel", action="store_true", help="one worker process per sweep point")

    sp = sub.add_parser("codec", help="encode an anchor id or decode a hex payload")
    csub = sp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    enc = csub.add_parser("encode")
    enc.add_argument("value", type=int, metavar="id")
    dec = csub.add_parser("decode")
    dec.add_argument("hex")

    sp = sub.add_parser("energy", help="optimal ADC period and power table for a WPA profile")
    sp.add_argument("--t-m", type=float, default=1000.0, help="localization period (ms)")
    for name in ("p_tx", "p_rx", "p_adc", "p_wfi", "t_tx", "t_adc"):
        sp.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=getattr(WPA_PROFILE, name))
    sp.add_argument("--step", type=float, default=0.5, help="t_c grid step (ms)")
    sp.add_argument("--tc-max", type=float, default=100.0, help="largest t_c in the table (ms)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        if args.command == "codec":
            return cmd_codec(args, parser)
        return cmd_energy(args, parser)
    except ScenarioError as exc:
        for problem in exc.problems:
            print(f"{exc.source}: {problem}", file=sys.stderr)
        return 1
    except (FileNotFoundError, MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
