"""Radio and wireless-power-transfer channel models.

Communication links use a log-distance path loss with a fixed attenuation per
wall crossed. Collisions are resolved at chip level: a clear power advantage
captures the receiver, otherwise chips on which the near-equal contributors
disagree become fair coin flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codec import Payload

Point = tuple[float, float]
Wall = tuple[Point, Point]

BELOW_FLOOR = float("-inf")
# harvested power is never evaluated closer than this to a charger
MIN_WPT_DISTANCE_M = 0.1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelModel:
    ref_loss_db: float = 40.0
    exponent: float = 2.0
    wall_loss_db: float = 5.0
    capture_threshold_db: float = 4.0
    sensitivity_dbm: float = -90.0
    preamble_ms: float = 0.008

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.capture_threshold_db < 0:
            raise ValueError("capture threshold must be non-negative")
        if self.wall_loss_db < 0:
            raise ValueError("wall loss must be non-negative")


@dataclass(frozen=True)
class WptModel:
    """Harvested power vs distance, interpolated log-log through calibration
    points, inside a cone of half-angle ``beam_halfangle_deg``."""

    points: tuple[tuple[float, float], ...] = ((1.0, 3.2), (3.0, 0.79), (4.0, 0.158))
    beam_halfangle_deg: float = 30.0
    floor_mw: float = 0.05
    wall_loss_db: float = 5.0

    def __post_init__(self):
        pts = tuple((float(d), float(p)) for d, p in self.points)
        if len(pts) < 2:
            raise ValueError("need at least two calibration points")
        for (d0, p0), (d1, p1) in zip(pts, pts[1:]):
            if not (d1 > d0 > 0 and p0 > p1 > 0):
                raise ValueError("calibration points must be strictly decreasing in power with distance")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Charger:
    position: Point
    orientation_deg: float


@dataclass(frozen=True)
class Transmission:
    sender: int
    payload: Payload
    tx_power_dbm: float
    start_ms: float
    airtime_ms: float
    preamble_ms: float = 0.008
    packet: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.airtime_ms <= 0:
            raise ValueError("airtime must be positive")
        if self.preamble_ms > self.airtime_ms:
            raise ValueError("preamble window cannot exceed airtime")

    @property
    def end_ms(self) -> float:
        return self.start_ms + self.airtime_ms


@dataclass(frozen=True, eq=False)
class ReceptionOutcome:
    chips: np.ndarray
    crc_ok: bool
    contributors: tuple[int, ...]
    packet: object = None  # the winner's packet when crc_ok

    @property
    def payload(self) -> Payload:
        return Payload(self.chips)


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a: Point, b: Point, p: Point) -> bool:
    return min(a[0], b[0]) - 1e-12 <= p[0] <= max(a[0], b[0]) + 1e-12 and min(a[1], b[1]) - 1e-12 <= p[1] <= max(
        a[1], b[1]
    ) + 1e-12


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1))
        or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1))
        or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def walls_crossed(a: Point, b: Point, walls: Sequence[Wall]) -> int:
    return sum(1 for w in walls if segments_intersect(a, b, w[0], w[1]))


def distance(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def path_loss_db(tx: Point, rx: Point, walls: Sequence[Wall] = (), channel: ChannelModel = ChannelModel()) -> float:
    d = distance(tx, rx)
    if d == 0:
        raise GeometryError(f"transmitter and receiver coincide at {tx}")
    return channel.ref_loss_db + 10 * channel.exponent * math.log10(d) + channel.wall_loss_db * walls_crossed(tx, rx, walls)


def rx_power_dbm(
    tx_power_dbm: float, tx: Point, rx: Point, walls: Sequence[Wall] = (), channel: ChannelModel = ChannelModel()
) -> float:
    return tx_power_dbm - path_loss_db(tx, rx, walls, channel)


def resolve_collision(receptions, rng: np.random.Generator, channel: ChannelModel = ChannelModel()):
    """Outcome of a set of synchronized transmissions at one receiver.

    ``receptions`` is a sequence of ``(Transmission, rx_power_dbm)``. Returns
    ``None`` when nothing is above sensitivity.
    """
    heard = [(tx, p) for tx, p in receptions if p >= channel.sensitivity_dbm]
    if not heard:
        return None
    heard.sort(key=lambda r: (-r[1], r[0].sender))
    strongest, p0 = heard[0]
    if len(heard) == 1 or p0 - heard[1][1] >= channel.capture_threshold_db:
        return ReceptionOutcome(strongest.payload.chips, True, (strongest.sender,), strongest.packet)

    near = [tx for tx, p in heard if p0 - p < channel.capture_threshold_db]
    stack = np.stack([tx.payload.chips for tx in near])
    agree = np.all(stack == stack[0], axis=0)
    # draw a coin for every chip so the stream consumption does not depend on the payloads
    coins = rng.integers(0, 2, size=stack.shape[1], dtype=np.uint8)
    chips = np.where(agree, stack[0], coins).astype(np.uint8)
    return ReceptionOutcome(chips, False, tuple(tx.sender for tx in near))


def in_beam(charger: Charger, node: Point, halfangle_deg: float) -> bool:
    dx, dy = node[0] - charger.position[0], node[1] - charger.position[1]
    if dx == 0 and dy == 0:
        return True
    angle = math.degrees(math.atan2(dy, dx)) - charger.orientation_deg
    angle = (angle + 180.0) % 360.0 - 180.0
    return abs(angle) <= halfangle_deg + 1e-9


def harvest_curve_mw(distance_m: float, wpt: WptModel = WptModel()) -> float:
    """Log-log interpolation through the calibration points; the end segments
    are extended with their own slope."""
    d = max(distance_m, MIN_WPT_DISTANCE_M)
    pts = wpt.points
    for dk, pk in pts:
        if d == dk:
            return pk
    if d < pts[0][0]:
        (d0, p0), (d1, p1) = pts[0], pts[1]
    elif d > pts[-1][0]:
        (d0, p0), (d1, p1) = pts[-2], pts[-1]
    else:
        i = next(j for j in range(len(pts) - 1) if pts[j][0] < d < pts[j + 1][0])
        (d0, p0), (d1, p1) = pts[i], pts[i + 1]
    slope = math.log(p1 / p0) / math.log(d1 / d0)
    return p0 * math.exp(slope * math.log(d / d0))


def harvested_power_mw(charger: Charger, node: Point, walls: Sequence[Wall] = (), wpt: WptModel = WptModel()) -> float:
    if not in_beam(charger, node, wpt.beam_halfangle_deg):
        return 0.0
    p = harvest_curve_mw(distance(charger.position, node), wpt)
    n_walls = walls_crossed(charger.position, node, walls)
    if n_walls:
        p *= 10 ** (-wpt.wall_loss_db * n_walls / 10)
    return p if p >= wpt.floor_mw else 0.0


def adc_reading_dbm(harvested_mw: float) -> float:
    if harvested_mw < 0:
        raise ValueError("harvested power cannot be negative")
    if harvested_mw == 0:
        return BELOW_FLOOR
    return 10 * math.log10(harvested_mw)
