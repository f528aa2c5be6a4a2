"""Deterministic discrete-event engine.

Events are ordered by ``(time, kind priority, node id, sequence)`` with the
kind priorities charger < tx-end < tx-start < adc < timer. All randomness comes
from the scenario seed through named sub-streams, so a replay is
bit-identical.

A receiver locks onto the first packet that starts while it is listening;
packets starting within the preamble window of that first one join the
collision set, later ones are ignored. The set is resolved when its last
packet ends.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .. import phy
from ..energy import EnergyLedger, PowerState, feasibility, wpa_average_power
from ..protocol import (
    AdcReading,
    AnchorState,
    ChargerPulse,
    Listen,
    MobileState,
    Mode,
    PacketReceived,
    ProtocolConfig,
    Role,
    RoundDone,
    RxTimeout,
    SampleAdc,
    Sleep,
    StartTimer,
    Transmit,
    WpaState,
    anchor_on_packet,
    classify_cells,
    mobile_on_adc,
    mobile_on_reception,
    mobile_on_rx_timeout,
    mobile_on_timer,
    mobile_round,
    wpa_step,
)
from .scenario import Scenario, ground_truth, wpa_cell_map

CHARGER, TX_END, TX_START, ADC, TIMER = range(5)

TIME_DECIMALS = 9

# sub-stream tags
_COLLISION, _PHASE = 1, 2


@dataclass
class _Lock:
    start: float
    receptions: list
    end: float


class _Node:
    def __init__(self, spec, profile, proto, t_m, record_timeline):
        self.spec = spec
        self.id = spec.id
        self.role = spec.role
        self.profile = profile
        self.proto = proto
        self.position = spec.position
        self.radio = PowerState.RX if spec.role is Role.ANCHOR else PowerState.WFI
        self.since = 0.0
        self.ledger = EnergyLedger(t_m)
        self.lock: _Lock | None = None
        self.rx_token = 0
        self.active = True
        self.timeline = [] if record_timeline else None


class Simulator:
    def __init__(self, scenario: Scenario, record_timeline: bool = False, rounds: int | None = None):
        scenario.validate()
        self.scenario = scenario
        exp = scenario.experiment
        self.cfg = ProtocolConfig(
            mode=scenario.mode,
            group_id=exp.group_id,
            t_m=scenario.duty.t_m,
            t_c=scenario.duty.t_c,
            t_tx=scenario.mobile_profile.t_tx,
            t_adc=scenario.wpa_profile.t_adc,
            rx_window_ms=exp.rx_window_ms,
            theta_dbm=exp.theta_dbm,
            pulse_drop_db=exp.pulse_drop_db,
            codec=scenario.codec,
        )
        self.channel = scenario.channel
        self.walls = scenario.geometry.walls
        self.total_rounds = rounds if rounds is not None else exp.rounds * len(exp.positions)
        self.end_time = self.total_rounds * self.cfg.t_m
        self._queue: list = []
        self._seq = itertools.count()
        self._rngs: dict = {}
        self._gain_cache: dict = {}
        self.round = -1
        self.truths: list = []
        self.mobile_radio_ms: list = []
        self.events_processed = 0
        self.charger_log: list = []
        self.tx_log: list = []

        anchors = scenario.anchors
        self.anchor_rooms = {a.id: (a.room if a.room is not None else a.id) for a in anchors}
        self.charger_on = {a.id: True for a in anchors}
        self.nodes: dict[int, _Node] = {}
        for spec in scenario.nodes:
            if spec.role is Role.ANCHOR:
                proto = AnchorState(spec, self.cfg)
                profile = scenario.wpa_profile
            elif spec.role is Role.WPA:
                proto = WpaState(spec, self.cfg)
                profile = scenario.wpa_profile
            else:
                proto = MobileState(spec, self.cfg, dict(self.anchor_rooms))
                profile = scenario.mobile_profile
            self.nodes[spec.id] = _Node(spec, profile, proto, self.cfg.t_m, record_timeline)
        self.mobile = self.nodes[scenario.mobile.id]
        self._setup_wpas()

    # ------------------------------------------------------------ setup

    def _harvest_from(self, anchor_spec, pos) -> float:
        wpt = self.scenario.wpt
        return sum(
            phy.harvested_power_mw(phy.Charger(anchor_spec.position, o), pos, self.walls, wpt)
            for o in anchor_spec.chargers
        )

    def harvested_mw(self, pos) -> float:
        return sum(self._harvest_from(a, pos) for a in self.scenario.anchors if self.charger_on[a.id])

    def _setup_wpas(self):
        sc = self.scenario
        self.wpa_status = {}
        cells = wpa_cell_map(sc)
        self.mobile.proto.wpa_cells = cells if sc.mode is Mode.WIPLOC_PP else {}
        by_anchor: dict[int, dict] = {a.id: {} for a in sc.anchors}
        wpa_avg = wpa_average_power(sc.duty, sc.wpa_profile) if sc.wpas else 0.0
        for w in sc.wpas:
            node = self.nodes[w.id]
            owner = w.anchor
            if owner is None:
                owner = max(sc.anchors, key=lambda a: (self._harvest_from(a, w.position), -a.id)).id
            owner_spec = next(a for a in sc.anchors if a.id == owner)
            mu = phy.adc_reading_dbm(self._harvest_from(owner_spec, w.position))
            by_anchor[owner][w.id] = mu
            total = self.harvested_mw(w.position)
            node.proto.baseline_dbm = phy.adc_reading_dbm(total)
            feas = feasibility(wpa_avg, total)
            node.active = sc.mode is Mode.WIPLOC_PP and feas.feasible
            phase = w.adc_phase_ms
            if phase is None:
                phase = float(np.random.default_rng([sc.seed, _PHASE, w.id]).uniform(0, self.cfg.t_c))
            node.phase = phase % self.cfg.t_c
            self.wpa_status[w.id] = {
                "anchor": owner,
                "mu_dbm": mu,
                "harvested_mw": total,
                "average_mw": wpa_avg,
                "margin_mw": feas.margin_mw,
                "active": node.active,
                "phase_ms": node.phase,
            }
        for a in sc.anchors:
            if by_anchor[a.id]:
                self.nodes[a.id].proto.partition = classify_cells(by_anchor[a.id], self.cfg.theta_dbm)

    # ------------------------------------------------------------ queue

    def _push(self, t, prio, node_id, kind, data=None):
        # snap to a 1 ps grid so times reached along different arithmetic
        # paths (pulse + delays vs. reply end + delays) compare equal
        t = round(t, TIME_DECIMALS)
        heapq.heappush(self._queue, (t, prio, node_id, next(self._seq), kind, data))

    def _rng(self, node_id) -> np.random.Generator:
        key = (self.round, node_id)
        g = self._rngs.get(key)
        if g is None:
            g = self._rngs[key] = np.random.default_rng([self.scenario.seed, _COLLISION, max(self.round, 0), node_id])
        return g

    def _set_radio(self, node: _Node, state: PowerState, now: float):
        if node.radio is state:
            return
        self._flush(node, now)
        if node.radio is PowerState.RX:
            node.lock = None
        node.radio = state
        node.since = now

    def _link_dbm(self, sender: _Node, receiver: _Node) -> float:
        key = (sender.id, receiver.id, sender.position, receiver.position)
        p = self._gain_cache.get(key)
        if p is None:
            p = phy.rx_power_dbm(sender.spec.tx_power_dbm, sender.position, receiver.position, self.walls, self.channel)
            self._gain_cache[key] = p
        return p

    # ------------------------------------------------------------ run

    def run(self):
        for k in range(self.total_rounds):
            self._push(k * self.cfg.t_m, TIMER, self.mobile.id, "round", k)
        for node in self.nodes.values():
            if node.role is Role.WPA and node.active:
                self._push(node.phase, ADC, node.id, "adc_tick")
        while self._queue:
            t, _, node_id, _, kind, data = heapq.heappop(self._queue)
            if t >= self.end_time:
                break
            self.events_processed += 1
            getattr(self, f"_on_{kind}")(self.nodes[node_id], t, data)
        self._close_round(self.end_time)
        for node in self.nodes.values():
            self._flush(node, self.end_time)
        return self

    def _flush(self, node: _Node, now):
        node.ledger.accumulate(node.radio, now - node.since, node.profile)
        if node.timeline is not None and now > node.since:
            node.timeline.append((node.since, now, node.radio))
        node.since = now

    def _close_round(self, now):
        if self.round >= 0:
            led = self.mobile.ledger
            snap = led.time_ms[PowerState.TX] + led.time_ms[PowerState.RX]
            if self.mobile.radio in (PowerState.TX, PowerState.RX):
                snap += now - self.mobile.since
            self.mobile_radio_ms.append(snap - self._radio_at_round_start)

    # ------------------------------------------------------------ handlers

    def _on_round(self, node: _Node, now, k):
        self._close_round(now)
        led = node.ledger
        self._radio_at_round_start = led.time_ms[PowerState.TX] + led.time_ms[PowerState.RX]
        self.round = k
        self._rngs.clear()
        exp = self.scenario.experiment
        pos_index = min(k // exp.rounds, len(exp.positions) - 1)
        pos = exp.positions[pos_index]
        if node.radio is not PowerState.WFI:
            self._apply(node, [Sleep()], now)
        node.position = pos
        self.truths.append(ground_truth(self.scenario, pos))
        self._apply(node, mobile_round(node.proto, now, pos_index, pos), now)

    def _on_adc_tick(self, node: _Node, now, _):
        if node.radio is PowerState.WFI:
            self._start_adc(node, now)
        nxt = now + self.cfg.t_c
        if nxt < self.end_time:
            self._push(nxt, ADC, node.id, "adc_tick")

    def _start_adc(self, node: _Node, now):
        self._set_radio(node, PowerState.ADC, now)
        reading = phy.adc_reading_dbm(self.harvested_mw(node.position))
        self._push(now + node.profile.t_adc, ADC, node.id, "adc_end", reading)

    def _on_adc_end(self, node: _Node, now, reading):
        if node.radio is PowerState.ADC:
            self._set_radio(node, PowerState.WFI, now)
        if node.role is Role.WPA:
            actions = wpa_step(node.proto, AdcReading(reading), now)
        else:
            actions = mobile_on_adc(node.proto, reading, now)
        self._apply(node, actions, now)

    def _on_charger_off(self, node: _Node, now, _):
        self.charger_on[node.id] = False
        self.charger_log.append((now, node.id, "off"))

    def _on_charger_on(self, node: _Node, now, _):
        self.charger_on[node.id] = True
        self.charger_log.append((now, node.id, "on"))

    def _on_tx_start(self, node: _Node, now, data):
        packet, then, listen = data
        if node.radio is PowerState.TX:
            raise RuntimeError(f"node {node.id} asked to transmit while transmitting at {now}")
        self._set_radio(node, PowerState.TX, now)
        tx = phy.Transmission(
            node.id, packet.payload, node.spec.tx_power_dbm, now, node.profile.t_tx, self.channel.preamble_ms, packet
        )
        end = round(tx.end_ms, TIME_DECIMALS)
        self.tx_log.append((self.round, now, node.id, type(packet).__name__))
        for other in self.nodes.values():
            if other is node or other.radio is not PowerState.RX:
                continue
            p = self._link_dbm(node, other)
            if p < self.channel.sensitivity_dbm:
                continue
            lock = other.lock
            if lock is None:
                other.lock = _Lock(now, [(tx, p)], end)
            elif now - lock.start <= self.channel.preamble_ms:
                lock.receptions.append((tx, p))
                lock.end = max(lock.end, end)
        self._push(end, TX_END, node.id, "tx_end", (tx, then, listen))

    def _on_tx_end(self, node: _Node, now, data):
        tx, then, listen = data
        self._set_radio(node, PowerState.RX if then == "rx" else PowerState.WFI, now)
        if then == "rx":
            self._apply(node, [Listen(listen)], now)
        for other in sorted(self.nodes.values(), key=lambda n: n.id):
            lock = other.lock
            if lock is None or now < lock.end:
                continue
            if any(r[0] is tx for r in lock.receptions):
                other.lock = None
                self._deliver(other, lock, now)

    def _deliver(self, node: _Node, lock: _Lock, now):
        outcome = phy.resolve_collision(lock.receptions, self._rng(node.id), self.channel)
        if node.role is Role.MOBILE:
            actions = mobile_on_reception(node.proto, outcome, now)
        elif outcome is None or not outcome.crc_ok:
            return
        elif node.role is Role.ANCHOR:
            actions = anchor_on_packet(node.proto, outcome.packet, now)
        else:
            actions = wpa_step(node.proto, PacketReceived(outcome.packet), now)
        self._apply(node, actions, now)

    def _on_rx_timeout(self, node: _Node, now, token):
        if token != node.rx_token or node.radio is not PowerState.RX:
            return
        if node.lock is not None:
            # finish the packet in flight first
            self._push(node.lock.end, TIMER, node.id, "rx_timeout", token)
            return
        if node.role is Role.MOBILE:
            actions = mobile_on_rx_timeout(node.proto, now)
        else:
            actions = wpa_step(node.proto, RxTimeout(), now)
        self._apply(node, actions, now)

    def _on_timer(self, node: _Node, now, tag):
        self._apply(node, mobile_on_timer(node.proto, tag, now), now)

    # ------------------------------------------------------------ actions

    def _apply(self, node: _Node, actions, now):
        for a in actions:
            if isinstance(a, Transmit):
                self._push(max(a.at, now), TX_START, node.id, "tx_start", (a.packet, a.then, a.listen_ms))
            elif isinstance(a, Listen):
                if node.radio is not PowerState.TX:
                    self._set_radio(node, PowerState.RX, now)
                node.rx_token += 1
                if a.timeout_ms is not None:
                    self._push(now + a.timeout_ms, TIMER, node.id, "rx_timeout", node.rx_token)
            elif isinstance(a, Sleep):
                node.rx_token += 1
                node.lock = None
                if node.radio is PowerState.RX:
                    self._set_radio(node, PowerState.WFI, now)
            elif isinstance(a, ChargerPulse):
                self._push(a.at, CHARGER, node.id, "charger_off")
                self._push(a.at + a.duration_ms, CHARGER, node.id, "charger_on")
            elif isinstance(a, StartTimer):
                self._push(a.at, TIMER, node.id, "timer", a.tag)
            elif isinstance(a, SampleAdc):
                if node.radio is not PowerState.WFI:
                    raise RuntimeError(f"node {node.id} cannot sample while {node.radio.value}")
                self._start_adc(node, now)
            elif isinstance(a, RoundDone):
                pass
            else:
                raise TypeError(f"unknown action {a!r}")

    # ------------------------------------------------------------ results

    @property
    def records(self):
        return self.mobile.proto.records

    def ledgers(self) -> dict[int, EnergyLedger]:
        return {n.id: n.ledger for n in self.nodes.values()}

    def timeline(self, node_id: int) -> list:
        return self.nodes[node_id].timeline
