"""Node state machines for room-level (WiPLoc) and cell-level (WiPLoc++)
localization.

Handlers are plain functions over mutable per-node state objects. They never
touch time or radios directly; they return a list of actions which the event
engine executes. This keeps each handler unit-testable without the engine.

Cell-level round, relative to the anchor's reply end ``P``::

    P                 charger off (wakeup pulse, lasts t_c)
    P + t_c           charger back on
    P + t_c + t_adc   anchor broadcasts the sleep-command
    P + t_c + t_adc + t_tx
                      mobile sends the second request, awake WPAs reply

Every WPA sampler lands in the off window, finishes its conversion by
``P + t_c + t_adc`` and so hears both the sleep-command and the request.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import codec
from .codec import DecodeResult, Payload
from .phy import BELOW_FLOOR, Point


class Role(str, enum.Enum):
    ANCHOR = "anchor"
    WPA = "wpa"
    MOBILE = "mobile"


class Mode(str, enum.Enum):
    WIPLOC = "wiploc"
    WIPLOC_PP = "wiploc++"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    role: Role
    position: Point | None = None
    tx_power_dbm: float = 4.0
    group_id: int = 0x5750
    room: object = None  # anchors: room label they stand for
    chargers: tuple[float, ...] = ()  # anchors: charger cone orientations (deg)
    anchor: int | None = None  # WPAs: anchor whose charger wakes them
    adc_phase_ms: float | None = None  # WPAs: sampler phase, None -> seeded random


@dataclass(frozen=True)
class ProtocolConfig:
    mode: Mode = Mode.WIPLOC
    group_id: int = 0x5750
    t_m: float = 1000.0
    t_c: float = 10.0
    t_tx: float = 0.80
    t_adc: float = 0.65
    rx_window_ms: float = 2.5
    theta_dbm: float = 3.7
    pulse_drop_db: float = 3.0
    codec: bool = True

    @property
    def pulse_ms(self) -> float:
        return self.t_c

    @property
    def sleep_command_delay(self) -> float:
        """From pulse start to the sleep-command broadcast."""
        return self.t_c + self.t_adc

    @property
    def second_request_delay(self) -> float:
        """From pulse start to the mobile's request to the WPAs."""
        return self.t_c + self.t_adc + self.t_tx

    @property
    def wpa_listen_ms(self) -> float:
        # covers the earliest possible wake-up through the end of the second request
        return self.t_c + self.t_adc + 2 * self.t_tx


# ---------------------------------------------------------------- packets


def _control_payload(*fields: int) -> Payload:
    body = b"".join(struct.pack(">H", f & 0xFFFF) for f in fields)
    return Payload.from_bytes(body + bytes(30 - len(body)))


@dataclass(frozen=True)
class LocationRequest:
    sender: int
    group_id: int
    stage: int = 1  # 1: anchors answer, 2: awake WPAs answer
    xi_dbm: float | None = None
    no_reply: bool = False
    previous: tuple | None = None  # last round's (room, cell), for the sniffer path

    @property
    def payload(self) -> Payload:
        xi = 0 if self.xi_dbm is None or math.isinf(self.xi_dbm) else int(round(self.xi_dbm * 100))
        return _control_payload(self.group_id, 1, self.sender, self.stage, xi, int(self.no_reply))


@dataclass(frozen=True)
class LocationReply:
    sender: int
    payload: Payload

    def __post_init__(self):
        if len(self.payload) != 240:
            raise codec.MalformedPayloadError("location-reply payload must be 30 bytes")


@dataclass(frozen=True)
class SleepCommand:
    sender: int
    targets: frozenset

    @property
    def payload(self) -> Payload:
        return _control_payload(2, self.sender, *sorted(self.targets))


# ---------------------------------------------------------------- actions


@dataclass(frozen=True)
class Transmit:
    packet: object
    at: float
    then: str = "wfi"  # radio state after the packet: "wfi" | "rx"
    listen_ms: float | None = None  # RX timeout after the packet, None = stay in RX


@dataclass(frozen=True)
class Listen:
    timeout_ms: float | None = None


@dataclass(frozen=True)
class Sleep:
    pass


@dataclass(frozen=True)
class ChargerPulse:
    at: float
    duration_ms: float


@dataclass(frozen=True)
class StartTimer:
    at: float
    tag: str


@dataclass(frozen=True)
class SampleAdc:
    pass


@dataclass(frozen=True)
class RoundDone:
    pass


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class CellPartition:
    """Close/far split of WPA cells by their harvested-power readings.

    Cells are identified by the ID of the WPA they belong to.
    """

    close: frozenset
    far: frozenset
    theta_dbm: float
    mu: Mapping[int, float] = field(default_factory=dict)

    @property
    def cells(self) -> frozenset:
        return self.close | self.far

    def first_choice(self, xi_dbm: float) -> frozenset:
        """Cells woken for a request carrying reading ``xi_dbm``."""
        return self.far if xi_dbm <= self.theta_dbm else self.close

    def retry_set(self, xi_dbm: float) -> frozenset:
        """Complementary set woken after the first choice got no reply."""
        return self.cells - self.first_choice(xi_dbm)

    def sleep_targets(self, xi_dbm: float, no_reply: bool = False) -> frozenset:
        woken = self.retry_set(xi_dbm) if no_reply else self.first_choice(xi_dbm)
        return self.cells - woken


def classify_cells(mu: Mapping[int, float], theta_dbm: float) -> CellPartition:
    close = frozenset(i for i, m in mu.items() if m >= theta_dbm)
    far = frozenset(mu) - close
    return CellPartition(close, far, theta_dbm, dict(mu))


# ---------------------------------------------------------------- decisions


@dataclass
class LocationEstimate:
    room: object = None
    cell: object = None
    anchor_id: int | None = None
    wpa_id: int | None = None
    decoded: tuple = ()
    wpa_decoded: tuple = ()
    round_index: int = -1


def choose_id(decoded: Sequence) -> int | None:
    """Smallest d_c wins, then the lowest ID."""
    best = min(decoded, key=lambda r: (r[1], r[0]), default=None)
    return None if best is None else int(best[0])


def decide_location(
    decoded: Sequence,
    rooms: Mapping[int, object] | None = None,
    cells: Mapping[int, object] | None = None,
    round_index: int = -1,
) -> LocationEstimate:
    """Room estimate from ``(anchor_id, d_c)`` pairs.

    ``rooms`` maps anchor ID to room (defaults to the ID itself). When
    ``cells`` is given the same rule is applied to WPA decodes instead.
    """
    pairs = tuple(sorted((int(r[0]), int(r[1])) for r in decoded))
    chosen = choose_id(pairs)
    if cells is not None:
        return LocationEstimate(
            cell=None if chosen is None else cells.get(chosen, chosen),
            wpa_id=chosen,
            wpa_decoded=pairs,
            round_index=round_index,
        )
    room = None if chosen is None else (rooms or {}).get(chosen, chosen)
    return LocationEstimate(room=room, anchor_id=chosen, decoded=pairs, round_index=round_index)


def decode_reception(outcome, use_codec: bool, known_ids) -> list[DecodeResult]:
    """IDs recovered from one reception, restricted to the node's ID table."""
    if outcome is None:
        return []
    if use_codec:
        orth, fec = codec.default_codebooks()
        found = codec.decode(Payload(outcome.chips), orth, fec)
    elif outcome.crc_ok:
        found = [DecodeResult(codec.raw_id(Payload(outcome.chips)), 0)]
    else:
        found = []
    return [r for r in found if r.anchor_id in known_ids]


def reply_payload(node_id: int, use_codec: bool) -> Payload:
    if use_codec:
        orth, fec = codec.default_codebooks()
        return codec.encode(node_id, orth, fec)
    return codec.raw_payload(node_id)


# ---------------------------------------------------------------- anchor


@dataclass
class AnchorState:
    node: NodeSpec
    cfg: ProtocolConfig
    partition: CellPartition | None = None
    replies_sent: int = 0
    pulses: int = 0
    last_sleep_targets: frozenset | None = None


def anchor_on_packet(state: AnchorState, packet, now: float) -> list:
    """Answer a first-stage location request; in cell-level mode also pulse
    the charger and prune WPAs with a sleep-command."""
    if not isinstance(packet, LocationRequest) or packet.group_id != state.node.group_id or packet.stage != 1:
        return []
    cfg = state.cfg
    reply = LocationReply(state.node.id, reply_payload(state.node.id, cfg.codec))
    actions: list = [Transmit(reply, now, then="rx")]
    state.replies_sent += 1
    if cfg.mode is Mode.WIPLOC_PP and state.partition is not None:
        pulse_at = now + cfg.t_tx
        xi = BELOW_FLOOR if packet.xi_dbm is None else packet.xi_dbm
        targets = state.partition.sleep_targets(xi, packet.no_reply)
        state.pulses += 1
        state.last_sleep_targets = targets
        actions.append(ChargerPulse(pulse_at, cfg.pulse_ms))
        actions.append(Transmit(SleepCommand(state.node.id, targets), pulse_at + cfg.sleep_command_delay, then="rx"))
    return actions


# ---------------------------------------------------------------- mobile


@dataclass
class RoundRecord:
    round_index: int
    position_index: int = -1
    position: Point | None = None
    xi_dbm: float | None = None
    no_reply_flag: bool = False
    anchor_decoded: tuple = ()
    anchor_crc_ok: bool = False
    wpa_decoded: tuple = ()
    wpa_attempted: bool = False
    estimate: LocationEstimate = field(default_factory=LocationEstimate)
    requests_sent: int = 0
    done: bool = False

    @property
    def replied(self) -> bool:
        return self.estimate.anchor_id is not None


@dataclass
class MobileState:
    node: NodeSpec
    cfg: ProtocolConfig
    anchor_rooms: dict = field(default_factory=dict)
    wpa_cells: dict = field(default_factory=dict)
    stage: int = 0
    no_reply_pending: bool = False
    records: list = field(default_factory=list)

    @property
    def current(self) -> RoundRecord:
        return self.records[-1]


def _request(state: MobileState, stage: int, xi: float | None = None) -> LocationRequest:
    rec = state.current
    prev = None
    if len(state.records) > 1:
        est = state.records[-2].estimate
        prev = (est.room, est.cell)
    return LocationRequest(
        state.node.id, state.node.group_id, stage, xi_dbm=xi, no_reply=rec.no_reply_flag if stage == 1 else False,
        previous=prev,
    )


def mobile_round(state: MobileState, now: float, position_index: int = -1, position: Point | None = None) -> list:
    """Start a localization round (timer fired)."""
    rec = RoundRecord(len(state.records), position_index, position)
    rec.estimate.round_index = rec.round_index
    state.records.append(rec)
    state.stage = 1
    if state.cfg.mode is Mode.WIPLOC_PP:
        rec.no_reply_flag = state.no_reply_pending
        state.no_reply_pending = False
        return [SampleAdc()]
    rec.requests_sent += 1
    return [Transmit(_request(state, 1), now, then="rx", listen_ms=state.cfg.rx_window_ms)]


def mobile_on_adc(state: MobileState, reading_dbm: float, now: float) -> list:
    """ADC reading taken just before a cell-level request."""
    rec = state.current
    rec.xi_dbm = reading_dbm
    rec.requests_sent += 1
    return [Transmit(_request(state, 1, reading_dbm), now, then="rx", listen_ms=state.cfg.rx_window_ms)]


def mobile_on_reception(state: MobileState, outcome, now: float) -> list:
    rec = state.current
    cfg = state.cfg
    if state.stage == 1:
        found = decode_reception(outcome, cfg.codec, state.anchor_rooms)
        rec.anchor_decoded = tuple((r.anchor_id, r.d_c) for r in found)
        rec.anchor_crc_ok = bool(outcome is not None and outcome.crc_ok)
        if not found:
            # keep listening until the window closes
            return []
        est = decide_location(rec.anchor_decoded, state.anchor_rooms, round_index=rec.round_index)
        rec.estimate.room, rec.estimate.anchor_id, rec.estimate.decoded = est.room, est.anchor_id, est.decoded
        if cfg.mode is Mode.WIPLOC_PP and state.wpa_cells:
            state.stage = 2
            # the anchor starts its pulse as its reply ends, i.e. now
            return [Sleep(), StartTimer(now + cfg.second_request_delay, "second-request")]
        return _finish(state)
    if state.stage == 2:
        found = decode_reception(outcome, cfg.codec, state.wpa_cells)
        if not found:
            return []
        rec.wpa_decoded = tuple((r.anchor_id, r.d_c) for r in found)
        est = decide_location(rec.wpa_decoded, cells=state.wpa_cells, round_index=rec.round_index)
        rec.estimate.cell, rec.estimate.wpa_id, rec.estimate.wpa_decoded = est.cell, est.wpa_id, est.wpa_decoded
        return _finish(state)
    return []


def mobile_on_timer(state: MobileState, tag: str, now: float) -> list:
    if tag == "second-request" and state.stage == 2:
        rec = state.current
        rec.wpa_attempted = True
        rec.requests_sent += 1
        return [Transmit(_request(state, 2), now, then="rx", listen_ms=state.cfg.rx_window_ms)]
    return []


def mobile_on_rx_timeout(state: MobileState, now: float) -> list:
    if state.stage == 2:
        # no WPA answered: the next request asks for the other cell set
        state.no_reply_pending = True
    return _finish(state)


def _finish(state: MobileState) -> list:
    state.stage = 0
    state.current.done = True
    return [Sleep(), RoundDone()]


# ---------------------------------------------------------------- WPA


@dataclass(frozen=True)
class AdcReading:
    dbm: float


@dataclass(frozen=True)
class PacketReceived:
    packet: object


@dataclass(frozen=True)
class RxTimeout:
    pass


@dataclass
class WpaState:
    node: NodeSpec
    cfg: ProtocolConfig
    baseline_dbm: float = BELOW_FLOOR
    listening: bool = False
    wakeups: int = 0
    replies_sent: int = 0
    slept_by_command: int = 0


def wpa_step(state: WpaState, event, now: float) -> list:
    cfg = state.cfg
    if isinstance(event, AdcReading):
        if state.listening or math.isinf(state.baseline_dbm):
            return []
        if event.dbm <= state.baseline_dbm - cfg.pulse_drop_db:
            state.listening = True
            state.wakeups += 1
            return [Listen(cfg.wpa_listen_ms)]
        return []
    if isinstance(event, RxTimeout):
        state.listening = False
        return [Sleep()]
    if isinstance(event, PacketReceived) and state.listening:
        pkt = event.packet
        if isinstance(pkt, SleepCommand) and state.node.id in pkt.targets:
            state.listening = False
            state.slept_by_command += 1
            return [Sleep()]
        if isinstance(pkt, LocationRequest) and pkt.stage == 2 and pkt.group_id == state.node.group_id:
            state.listening = False
            state.replies_sent += 1
            reply = LocationReply(state.node.id, reply_payload(state.node.id, cfg.codec))
            return [Transmit(reply, now, then="wfi")]
    return []
