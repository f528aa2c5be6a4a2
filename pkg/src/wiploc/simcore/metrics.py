"""Experiment execution, PRR/accuracy metrics, sweeps and output files.

PRR counts localization rounds: every round opens with one location-request,
and it counts as answered when the mobile decodes at least one known ID (an
anchor for room-level truth, a WPA for cell truth). Accuracy is taken over
answered rounds only. Aggregates are the mean of the per-position values.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..energy import MOBILE_PROFILE, WPA_PROFILE, DutyConfig, EnergyLedger, PowerProfile, PowerState, wpa_average_power
from ..phy import ChannelModel
from ..protocol import Mode, NodeSpec, Role
from .engine import Simulator
from .scenario import ExperimentConfig, Geometry, Room, Scenario

SWEEP_PARAMS = ("anchor_count", "t_c", "capture_threshold", "tx_power")

TRACE_COLUMNS = (
    "round",
    "position",
    "x",
    "y",
    "requests",
    "replied",
    "decoded",
    "estimate_room",
    "estimate_anchor",
    "estimate_cell",
    "wpa_decoded",
    "truth_room",
    "truth_voronoi",
    "truth_cell",
    "correct",
    "xi_dbm",
    "no_reply_flag",
    "mobile_radio_ms",
)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRow:
    round: int
    position: int
    x: float
    y: float
    requests: int
    replied: bool
    decoded: tuple
    estimate_room: object
    estimate_anchor: int | None
    estimate_cell: object
    wpa_decoded: tuple
    truth_room: object
    truth_voronoi: int | None
    truth_cell: object
    correct: bool
    xi_dbm: float | None
    no_reply_flag: bool
    mobile_radio_ms: float


@dataclass
class PositionMetrics:
    index: int
    position: tuple
    requests: int
    replies: int
    correct: int
    max_ids: int = 0  # most anchor IDs decoded from a single reply

    @property
    def prr(self) -> float:
        return 100.0 * self.replies / self.requests

    @property
    def accuracy(self) -> float | None:
        return None if self.replies == 0 else 100.0 * self.correct / self.replies


@dataclass
class MetricsReport:
    scenario: str
    mode: str
    codec: bool
    seed: int
    truth: str
    positions: list
    prr: float
    accuracy: float | None
    cell_accuracy: dict = field(default_factory=dict)
    ledgers: dict = field(default_factory=dict)
    roles: dict = field(default_factory=dict)
    wpa_status: dict = field(default_factory=dict)
    duration_ms: float = 0.0
    sweep_param: str | None = None
    sweep_value: float | None = None
    wpa_model_mw: float | None = None
    simulator: object = field(default=None, repr=False, compare=False)

    def average_power_mw(self, node_id: int) -> float:
        return self.ledgers[node_id].average_mw(self.duration_ms)

    @property
    def multi_id_positions(self) -> list[int]:
        return [p.index for p in self.positions if p.max_ids >= 2]


# ------------------------------------------------------------------ metrics


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return f"{v:.6f}"
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return ";".join(":".join(str(x) for x in t) for t in v)
    if isinstance(v, tuple):
        return "/".join(str(x) for x in v)
    return str(v)


def _correct(truth_mode: str, rec, truth) -> bool:
    est = rec.estimate
    if truth_mode == "single":
        return est.anchor_id is not None
    if truth_mode == "voronoi":
        return est.anchor_id is not None and est.anchor_id == truth.voronoi
    if truth_mode == "room":
        return est.anchor_id is not None and est.room == truth.room
    return est.cell is not None and est.cell == truth.cell


def _replied(truth_mode: str, rec) -> bool:
    if truth_mode == "cell":
        return rec.estimate.wpa_id is not None
    return rec.estimate.anchor_id is not None


def build_traces(sim: Simulator) -> list[TraceRow]:
    truth_mode = sim.scenario.experiment.truth
    rows = []
    for rec, truth, radio in zip(sim.records, sim.truths, sim.mobile_radio_ms):
        est = rec.estimate
        rows.append(
            TraceRow(
                round=rec.round_index,
                position=rec.position_index,
                x=float(rec.position[0]),
                y=float(rec.position[1]),
                requests=rec.requests_sent,
                replied=_replied(truth_mode, rec),
                decoded=rec.anchor_decoded,
                estimate_room=est.room,
                estimate_anchor=est.anchor_id,
                estimate_cell=est.cell,
                wpa_decoded=rec.wpa_decoded,
                truth_room=truth.room,
                truth_voronoi=truth.voronoi,
                truth_cell=truth.cell,
                correct=_correct(truth_mode, rec, truth),
                xi_dbm=rec.xi_dbm,
                no_reply_flag=rec.no_reply_flag,
                mobile_radio_ms=radio,
            )
        )
    return rows


def metrics(traces, scenario: Scenario) -> MetricsReport:
    """Per-position and aggregate PRR/accuracy from round traces."""
    if not traces:
        raise MetricsError("no localization requests in the traces; PRR is undefined")
    by_pos: dict[int, PositionMetrics] = {}
    cell_hits: dict = {}
    for row in traces:
        pm = by_pos.get(row.position)
        if pm is None:
            pm = by_pos[row.position] = PositionMetrics(row.position, (row.x, row.y), 0, 0, 0)
        pm.requests += 1
        if row.replied:
            pm.replies += 1
            pm.correct += int(row.correct)
            if row.truth_cell is not None:
                hit = cell_hits.setdefault(row.truth_cell, [0, 0])
                hit[0] += int(row.correct)
                hit[1] += 1
        pm.max_ids = max(pm.max_ids, len(row.decoded))
    positions = [by_pos[k] for k in sorted(by_pos)]
    if any(p.requests == 0 for p in positions):
        raise MetricsError("a test position has no requests")
    accs = [p.accuracy for p in positions if p.accuracy is not None]
    return MetricsReport(
        scenario=scenario.name,
        mode=scenario.mode.value,
        codec=scenario.codec,
        seed=scenario.seed,
        truth=scenario.experiment.truth,
        positions=positions,
        prr=sum(p.prr for p in positions) / len(positions),
        accuracy=sum(accs) / len(accs) if accs else None,
        cell_accuracy={c: 100.0 * h[0] / h[1] for c, h in sorted(cell_hits.items(), key=lambda kv: str(kv[0]))},
    )


def run(scenario: Scenario, record_timeline: bool = False):
    """Simulate every test position in order; returns ``(report, traces)``."""
    sim = Simulator(scenario, record_timeline=record_timeline).run()
    traces = build_traces(sim)
    report = metrics(traces, scenario)
    report.ledgers = sim.ledgers()
    report.roles = {n.id: n.role.value for n in scenario.nodes}
    report.wpa_status = sim.wpa_status
    report.duration_ms = sim.end_time
    report.simulator = sim
    return report, traces


# ------------------------------------------------------------------ sweeps


def with_parameter(scenario: Scenario, param: str, value) -> Scenario:
    if param == "anchor_count":
        k = int(value)
        anchors = scenario.anchors
        if not 1 <= k <= len(anchors):
            raise MetricsError(f"anchor_count must be in [1, {len(anchors)}], got {value}")
        keep = {a.id for a in anchors[:k]}
        nodes = tuple(
            n for n in scenario.nodes if n.role is not Role.ANCHOR or n.id in keep
        )
        nodes = tuple(n for n in nodes if n.role is not Role.WPA or n.anchor is None or n.anchor in keep)
        return replace(scenario, nodes=nodes)
    if param == "t_c":
        return replace(scenario, duty=DutyConfig(scenario.duty.t_m, float(value)))
    if param == "capture_threshold":
        return replace(scenario, channel=replace(scenario.channel, capture_threshold_db=float(value)))
    if param == "tx_power":
        return replace(scenario, nodes=tuple(replace(n, tx_power_dbm=float(value)) for n in scenario.nodes))
    raise MetricsError(f"unsupported sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


def _sweep_point(args):
    scenario, param, value, seed = args
    sc = replace(with_parameter(scenario, param, value), seed=seed)
    report, _ = run(sc)
    report.simulator = None
    report.sweep_param = param
    report.sweep_value = value
    if param == "t_c":
        report.wpa_model_mw = wpa_average_power(sc.duty, sc.wpa_profile)
    return report


def sweep(scenario: Scenario, param: str, values, parallel: bool = False, workers: int | None = None) -> list[MetricsReport]:
    """Independent runs per value; point ``i`` uses seed ``scenario.seed + i``."""
    if param not in SWEEP_PARAMS:
        raise MetricsError(f"unsupported sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    values = list(values)
    for v in values:
        with_parameter(scenario, param, v)  # fail fast on bad values
    jobs = [(scenario, param, v, scenario.seed + i) for i, v in enumerate(values)]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def power_curve(reports) -> list[tuple[float, float]]:
    """``(t_c, modelled WPA mW)`` pairs from a t_c sweep."""
    return [(r.sweep_value, r.wpa_model_mw) for r in reports if r.wpa_model_mw is not None]


# ------------------------------------------------------------------ reference windows


def _window_scenario(mode: Mode, t_m: float, t_c: float, mobile: PowerProfile, wpa: PowerProfile, phase, rounds=1):
    # anchor with its charger facing a WPA 1 m away; the mobile sits close
    # enough to read above the default threshold so the WPA's set is woken
    nodes = [
        NodeSpec(1, Role.ANCHOR, (0.0, 0.0), chargers=(0.0,)),
        NodeSpec(9, Role.MOBILE, (0.9, 0.3)),
    ]
    if mode is Mode.WIPLOC_PP:
        nodes.append(NodeSpec(2, Role.WPA, (1.0, 0.0), anchor=1, adc_phase_ms=phase))
    return Scenario(
        name="reference-window",
        mode=mode,
        geometry=Geometry((Room("lab", (-1.0, -2.0, 4.0, 2.0)),), (), 2.0),
        channel=ChannelModel(),
        duty=DutyConfig(t_m, t_c),
        mobile_profile=mobile,
        wpa_profile=wpa,
        nodes=tuple(nodes),
        experiment=ExperimentConfig(positions=((0.9, 0.3),), rounds=rounds, truth="single"),
    )


def wake_time_ms(mobile: PowerProfile = MOBILE_PROFILE) -> float:
    """Pulse start relative to the round start: ADC read, request, reply."""
    return mobile.t_adc + 2 * mobile.t_tx


def simulate_wpa_window(
    t_c: float = 10.0,
    sample_offset_ms: float = 3.31,
    t_m: float = 1000.0,
    wpa: PowerProfile = WPA_PROFILE,
    mobile: PowerProfile = MOBILE_PROFILE,
    record_timeline: bool = False,
):
    """One cell-level localization period seen by a single WPA.

    ``sample_offset_ms`` is the delay from the start of the charger pulse to
    the WPA's next ADC sample. Returns the finished simulator; the WPA has
    node id 2 and the mobile id 9.
    """
    if not 0 <= sample_offset_ms < t_c:
        raise ValueError("sample offset must lie in [0, t_c)")
    phase = (wake_time_ms(mobile) + sample_offset_ms) % t_c
    sc = _window_scenario(Mode.WIPLOC_PP, t_m, t_c, mobile, wpa, phase)
    return Simulator(sc, record_timeline=record_timeline).run()


def simulate_mobile_round(t_m: float = 1000.0, mobile: PowerProfile = MOBILE_PROFILE) -> EnergyLedger:
    """Ledger of one room-level round of a mobile answered by one anchor."""
    sc = _window_scenario(Mode.WIPLOC, t_m, 10.0, mobile, WPA_PROFILE, None)
    sim = Simulator(sc).run()
    return sim.ledgers()[9]


# ------------------------------------------------------------------ outputs


def trace_csv(traces) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in traces:
        w.writerow([_fmt(getattr(row, c)) for c in TRACE_COLUMNS])
    return buf.getvalue()


def energy_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("node_id", "role", "state", "time_ms", "energy_uj"))
    for nid in sorted(report.ledgers):
        for node_id, state, t, e in report.ledgers[nid].rows(nid):
            w.writerow((node_id, report.roles.get(nid, ""), state, f"{t:.6f}", f"{e:.6f}"))
    return buf.getvalue()


def report_text(report: MetricsReport) -> str:
    acc = "n/a" if report.accuracy is None else f"{report.accuracy:.2f}"
    lines = [
        f"scenario: {report.scenario}",
        f"mode: {report.mode}",
        f"codec: {'on' if report.codec else 'off'}",
        f"seed: {report.seed}",
        f"truth: {report.truth}",
        f"prr_percent: {report.prr:.2f}",
        f"accuracy_percent: {acc}",
        "positions:",
    ]
    for p in report.positions:
        pa = "n/a" if p.accuracy is None else f"{p.accuracy:.2f}"
        lines.append(
            f"  - index: {p.index} x: {p.position[0]:.3f} y: {p.position[1]:.3f} "
            f"requests: {p.requests} replies: {p.replies} prr: {p.prr:.2f} accuracy: {pa}"
        )
    if report.cell_accuracy:
        lines.append("cell_accuracy:")
        for c, a in report.cell_accuracy.items():
            lines.append(f"  - cell: {_fmt(c)} accuracy: {a:.2f}")
    if report.ledgers and report.duration_ms > 0:
        lines.append("average_power_mw:")
        for nid in sorted(report.ledgers):
            lines.append(f"  - node: {nid} role: {report.roles.get(nid, '')} mw: {report.average_power_mw(nid):.4f}")
    if report.wpa_status:
        lines.append("wpa_energy:")
        for wid, st in sorted(report.wpa_status.items()):
            lines.append(
                f"  - node: {wid} anchor: {st['anchor']} harvested_mw: {st['harvested_mw']:.4f} "
                f"demand_mw: {st['average_mw']:.4f} feasible: {'yes' if st['active'] else 'no'}"
            )
    return "\n".join(lines) + "\n"


def write_outputs(report: MetricsReport, traces, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / "trace.csv", "report": out / "report.txt", "energy": out / "energy.csv"}
    paths["trace"].write_text(trace_csv(traces))
    paths["report"].write_text(report_text(report))
    paths["energy"].write_text(energy_csv(report))
    return paths


def sweep_table(reports) -> str:
    lines = ["param,value,seed,prr_percent,accuracy_percent,wpa_model_mw"]
    for r in reports:
        acc = "" if r.accuracy is None else f"{r.accuracy:.2f}"
        model = "" if r.wpa_model_mw is None else f"{r.wpa_model_mw:.4f}"
        lines.append(f"{r.sweep_param},{r.sweep_value},{r.seed},{r.prr:.2f},{acc},{model}")
    return "\n".join(lines) + "\n"


def ledger_state_ms(ledger: EnergyLedger, state: str) -> float:
    return ledger.time_ms[PowerState(state)]
