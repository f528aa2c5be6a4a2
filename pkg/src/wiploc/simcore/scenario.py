"""Scenario description, YAML loading/validation and ground truth.

Scenario files have the top-level sections ``geometry``, ``channel``,
``wpt``, ``duty``, ``profiles``, ``nodes`` and ``experiment``; see the README
for every key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from ..energy import MOBILE_PROFILE, WPA_PROFILE, DutyConfig, EnergyError, PowerProfile
from ..phy import ChannelModel, Point, Wall, WptModel, distance
from ..protocol import Mode, NodeSpec, Role

TRUTH_MODES = ("single", "voronoi", "room", "cell")
BUNDLED_DIR = Path(__file__).resolve().parent.parent / "experiments"


class ScenarioError(ValueError):
    """Scenario failed to parse or validate; ``problems`` lists every violation."""

    def __init__(self, problems: list[str], source: str | None = None):
        self.problems = list(problems)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(self.problems))


@dataclass(frozen=True)
class Room:
    id: Any
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1

    def contains(self, p: Point) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


@dataclass(frozen=True)
class Geometry:
    rooms: tuple[Room, ...] = ()
    walls: tuple[Wall, ...] = ()
    cell_size: float = 2.0

    def room_of(self, p: Point):
        for r in self.rooms:
            if r.contains(p):
                return r
        return None

    def cell_of(self, p: Point):
        """Grid cell ``(room id, ix, iy)`` of a point, cells anchored at each
        room's lower-left corner."""
        room = self.room_of(p)
        if room is None:
            return None
        x0, y0, x1, y1 = room.rect
        nx = max(1, math.ceil((x1 - x0) / self.cell_size - 1e-9))
        ny = max(1, math.ceil((y1 - y0) / self.cell_size - 1e-9))
        ix = min(int((p[0] - x0) // self.cell_size), nx - 1)
        iy = min(int((p[1] - y0) // self.cell_size), ny - 1)
        return (room.id, ix, iy)


@dataclass(frozen=True)
class ExperimentConfig:
    positions: tuple[Point, ...] = ()
    rounds: int = 50
    truth: str = "room"
    theta_dbm: float = 3.7
    rx_window_ms: float = 2.5
    pulse_drop_db: float = 3.0
    group_id: int = 0x5750


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    mode: Mode = Mode.WIPLOC
    codec: bool = True
    seed: int = 0
    geometry: Geometry = field(default_factory=Geometry)
    channel: ChannelModel = field(default_factory=ChannelModel)
    wpt: WptModel = field(default_factory=WptModel)
    duty: DutyConfig = field(default_factory=DutyConfig)
    mobile_profile: PowerProfile = MOBILE_PROFILE
    wpa_profile: PowerProfile = WPA_PROFILE
    nodes: tuple[NodeSpec, ...] = ()
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @property
    def anchors(self) -> list[NodeSpec]:
        return [n for n in self.nodes if n.role is Role.ANCHOR]

    @property
    def wpas(self) -> list[NodeSpec]:
        return [n for n in self.nodes if n.role is Role.WPA]

    @property
    def mobile(self) -> NodeSpec:
        return next(n for n in self.nodes if n.role is Role.MOBILE)

    def with_overrides(self, seed=None, mode=None, codec=None) -> "Scenario":
        s = self
        if seed is not None:
            s = replace(s, seed=int(seed))
        if mode is not None:
            s = replace(s, mode=Mode(mode))
        if codec is not None:
            s = replace(s, codec=bool(codec))
        return s

    def validate(self) -> None:
        problems = validation_problems(self)
        if problems:
            raise ScenarioError(problems, self.name)


def validation_problems(s: Scenario) -> list[str]:
    problems = []
    ids = [n.id for n in s.nodes]
    if len(set(ids)) != len(ids):
        problems.append("nodes: duplicate node ids")
    if not s.anchors:
        problems.append("nodes: at least one anchor is required")
    mobiles = [n for n in s.nodes if n.role is Role.MOBILE]
    if len(mobiles) != 1:
        problems.append(f"nodes: exactly one mobile node is required, found {len(mobiles)}")
    for n in s.nodes:
        if n.role in (Role.ANCHOR, Role.WPA):
            if not 0 <= n.id < 16:
                problems.append(f"nodes: {n.role.value} id {n.id} outside the codec range [0, 16)")
            if n.position is None:
                problems.append(f"nodes: {n.role.value} {n.id} has no position")
        if n.role is Role.WPA and n.anchor is not None and n.anchor not in {a.id for a in s.anchors}:
            problems.append(f"nodes: wpa {n.id} refers to unknown anchor {n.anchor}")
    if s.experiment.rounds < 1:
        problems.append("experiment.rounds: must be at least 1")
    if not s.experiment.positions:
        problems.append("experiment.positions: no test positions")
    if s.experiment.truth not in TRUTH_MODES:
        problems.append(f"experiment.truth: must be one of {', '.join(TRUTH_MODES)}")
    if s.experiment.truth == "cell" and s.mode is not Mode.WIPLOC_PP:
        problems.append("experiment.truth: cell truth needs mode wiploc++")
    if s.mode is Mode.WIPLOC_PP and not s.wpas:
        problems.append("mode: wiploc++ needs at least one wpa node")
    if s.geometry.rooms:
        for i, p in enumerate(s.experiment.positions):
            if s.geometry.room_of(p) is None:
                problems.append(f"experiment.positions[{i}]: {tuple(p)} lies outside every room")
    if s.mode is Mode.WIPLOC_PP:
        p = s.wpa_profile
        round_ms = 2 * p.t_adc + 3 * p.t_tx + s.duty.t_c + s.experiment.rx_window_ms
        if round_ms >= s.duty.t_m:
            problems.append(f"duty.t_c: a cell-level round ({round_ms:.2f} ms) does not fit in t_m")
    return problems


# ---------------------------------------------------------------- ground truth


@dataclass(frozen=True)
class GroundTruth:
    room: Any
    voronoi: int | None
    cell: Any
    wpa: int | None


def voronoi_owner(anchors, p: Point) -> int | None:
    best = min(anchors, key=lambda a: (round(distance(a.position, p), 9), a.id), default=None)
    return None if best is None else best.id


def ground_truth(scenario: Scenario, position: Point) -> GroundTruth:
    geom = scenario.geometry
    room = geom.room_of(position)
    if geom.rooms and room is None:
        raise ValueError(f"position {tuple(position)} is outside the scenario geometry")
    cell = geom.cell_of(position)
    wpa = next((w.id for w in scenario.wpas if cell is not None and geom.cell_of(w.position) == cell), None)
    return GroundTruth(None if room is None else room.id, voronoi_owner(scenario.anchors, position), cell, wpa)


def wpa_cell_map(scenario: Scenario) -> dict:
    return {w.id: scenario.geometry.cell_of(w.position) for w in scenario.wpas}


# ---------------------------------------------------------------- loading


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths to 1-based source lines."""
    index: dict[tuple, int] = {}

    def walk(node, path):
        index.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = (*path, k.value)
                index[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, (*path, i))

    root = yaml.compose(text)
    if root is not None:
        walk(root, ())
    return index


class _Reader:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines
        self.problems: list[str] = []

    def where(self, path) -> str:
        probe = tuple(path)
        while probe and probe not in self.lines:
            probe = probe[:-1]
        line = self.lines.get(probe)
        key = ".".join(str(p) for p in path)
        return f"line {line}: {key}" if line else key

    def fail(self, path, msg):
        self.problems.append(f"{self.where(path)}: {msg}")

    def section(self, data, key, known):
        sec = data.get(key, {}) or {}
        if not isinstance(sec, dict):
            self.fail((key,), "expected a mapping")
            return {}
        for k in sec:
            if k not in known:
                self.fail((key, k), f"unknown key '{k}'")
        return sec

    def number(self, sec, path, default, positive=False, allow_none=False):
        key = path[-1]
        if key not in sec:
            return default
        v = sec[key]
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
            return default
        if positive and v <= 0:
            self.fail(path, f"must be positive, got {v}")
            return default
        return float(v)

    def point(self, v, path):
        if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in v
        ):
            return (float(v[0]), float(v[1]))
        self.fail(path, f"expected [x, y], got {v!r}")
        return None


_CHANNEL_KEYS = ("ref_loss_db", "exponent", "wall_loss_db", "capture_threshold_db", "sensitivity_dbm", "preamble_ms")
_WPT_KEYS = ("points", "beam_halfangle_deg", "floor_mw", "wall_loss_db")
_PROFILE_KEYS = ("p_tx", "p_rx", "p_adc", "p_wfi", "t_tx", "t_adc", "t_rx")
_NODE_KEYS = ("id", "role", "pos", "tx_power_dbm", "room", "chargers", "anchor", "adc_phase_ms", "group_id")
_EXP_KEYS = ("positions", "rounds", "truth", "theta_dbm", "rx_window_ms", "pulse_drop_db", "group_id")
_TOP_KEYS = ("name", "mode", "codec", "seed", "geometry", "channel", "wpt", "duty", "profiles", "nodes", "experiment")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = yaml.safe_load(text)
        lines = _line_index(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ScenarioError([f"{where}YAML parse error: {getattr(exc, 'problem', exc)}"], source) from None
    if not isinstance(data, dict):
        raise ScenarioError(["top level must be a mapping"], source)
    r = _Reader(source, lines)
    for k in data:
        if k not in _TOP_KEYS:
            r.fail((k,), f"unknown key '{k}'")

    try:
        mode = Mode(str(data.get("mode", "wiploc")).lower())
    except ValueError:
        r.fail(("mode",), f"must be 'wiploc' or 'wiploc++', got {data.get('mode')!r}")
        mode = Mode.WIPLOC
    use_codec = data.get("codec", True)
    if not isinstance(use_codec, bool):
        r.fail(("codec",), "expected true or false")
        use_codec = True
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        r.fail(("seed",), f"expected a non-negative integer, got {seed!r}")
        seed = 0

    # geometry
    g = r.section(data, "geometry", ("rooms", "walls", "cell_size"))
    rooms = []
    for i, room in enumerate(g.get("rooms", []) or []):
        path = ("geometry", "rooms", i)
        if not isinstance(room, dict) or "id" not in room or "rect" not in room:
            r.fail(path, "each room needs 'id' and 'rect'")
            continue
        rect = room["rect"]
        if not (isinstance(rect, list) and len(rect) == 4 and all(isinstance(c, (int, float)) for c in rect)):
            r.fail((*path, "rect"), "expected [x0, y0, x1, y1]")
            continue
        x0, y0, x1, y1 = map(float, rect)
        if x1 <= x0 or y1 <= y0:
            r.fail((*path, "rect"), "rectangle must have positive size")
            continue
        rooms.append(Room(room["id"], (x0, y0, x1, y1)))
    walls = []
    for i, w in enumerate(g.get("walls", []) or []):
        path = ("geometry", "walls", i)
        if not (isinstance(w, list) and len(w) == 2):
            r.fail(path, "expected [[x0, y0], [x1, y1]]")
            continue
        a, b = r.point(w[0], (*path, 0)), r.point(w[1], (*path, 1))
        if a and b:
            walls.append((a, b))
    cell_size = r.number(g, ("geometry", "cell_size"), 2.0, positive=True)
    geometry = Geometry(tuple(rooms), tuple(walls), cell_size)

    # channel
    c = r.section(data, "channel", _CHANNEL_KEYS)
    ch_kwargs = {k: r.number(c, ("channel", k), getattr(ChannelModel, k)) for k in _CHANNEL_KEYS}
    try:
        channel = ChannelModel(**ch_kwargs)
    except ValueError as exc:
        r.fail(("channel",), str(exc))
        channel = ChannelModel()

    # wpt
    w = r.section(data, "wpt", _WPT_KEYS)
    wpt_kwargs = {k: r.number(w, ("wpt", k), getattr(WptModel, k)) for k in _WPT_KEYS if k != "points"}
    if "points" in w:
        pts = []
        for i, p in enumerate(w["points"] or []):
            pt = r.point(p, ("wpt", "points", i))
            if pt:
                pts.append(pt)
        wpt_kwargs["points"] = tuple(pts)
    try:
        wpt = WptModel(**wpt_kwargs)
    except ValueError as exc:
        r.fail(("wpt", "points"), str(exc))
        wpt = WptModel()

    # duty
    d = r.section(data, "duty", ("t_m", "t_c"))
    t_m = r.number(d, ("duty", "t_m"), 1000.0, positive=True)
    t_c = r.number(d, ("duty", "t_c"), 10.0, positive=True)
    try:
        duty = DutyConfig(t_m, t_c)
    except EnergyError as exc:
        r.fail(("duty", "t_c"), str(exc))
        duty = DutyConfig()

    # profiles
    prof = r.section(data, "profiles", ("mobile", "wpa"))
    profiles = {}
    for role, base in (("mobile", MOBILE_PROFILE), ("wpa", WPA_PROFILE)):
        over = prof.get(role, {}) or {}
        if not isinstance(over, dict):
            r.fail(("profiles", role), "expected a mapping")
            over = {}
        for k in over:
            if k not in _PROFILE_KEYS:
                r.fail(("profiles", role, k), f"unknown key '{k}'")
        kw = {k: r.number(over, ("profiles", role, k), getattr(base, k), positive=True) for k in _PROFILE_KEYS}
        try:
            profiles[role] = PowerProfile(**kw)
        except EnergyError as exc:
            r.fail(("profiles", role), str(exc))
            profiles[role] = base

    # experiment
    e = r.section(data, "experiment", _EXP_KEYS)
    positions = []
    for i, p in enumerate(e.get("positions", []) or []):
        pt = r.point(p, ("experiment", "positions", i))
        if pt:
            positions.append(pt)
    rounds = e.get("rounds", 50)
    if isinstance(rounds, bool) or not isinstance(rounds, int):
        r.fail(("experiment", "rounds"), f"expected an integer, got {rounds!r}")
        rounds = 50
    group_id = e.get("group_id", 0x5750)
    if isinstance(group_id, bool) or not isinstance(group_id, int) or not 0 <= group_id <= 0xFFFF:
        r.fail(("experiment", "group_id"), "expected a 16-bit integer")
        group_id = 0x5750
    experiment = ExperimentConfig(
        positions=tuple(positions),
        rounds=rounds,
        truth=str(e.get("truth", "room")),
        theta_dbm=r.number(e, ("experiment", "theta_dbm"), 3.7),
        rx_window_ms=r.number(e, ("experiment", "rx_window_ms"), 2.5, positive=True),
        pulse_drop_db=r.number(e, ("experiment", "pulse_drop_db"), 3.0, positive=True),
        group_id=group_id,
    )

    # nodes
    nodes = []
    raw_nodes = data.get("nodes", []) or []
    if not isinstance(raw_nodes, list):
        r.fail(("nodes",), "expected a list")
        raw_nodes = []
    for i, n in enumerate(raw_nodes):
        path = ("nodes", i)
        if not isinstance(n, dict):
            r.fail(path, "expected a mapping")
            continue
        for k in n:
            if k not in _NODE_KEYS:
                r.fail((*path, k), f"unknown key '{k}'")
        try:
            role = Role(str(n.get("role", "")).lower())
        except ValueError:
            r.fail((*path, "role"), f"must be anchor, wpa or mobile, got {n.get('role')!r}")
            continue
        nid = n.get("id")
        if isinstance(nid, bool) or not isinstance(nid, int):
            r.fail((*path, "id"), f"expected an integer id, got {nid!r}")
            continue
        pos = r.point(n["pos"], (*path, "pos")) if "pos" in n else None
        chargers = n.get("chargers", [])
        if isinstance(chargers, (int, float)):
            chargers = [chargers]
        if not isinstance(chargers, list) or not all(isinstance(x, (int, float)) for x in chargers):
            r.fail((*path, "chargers"), "expected a list of orientations in degrees")
            chargers = []
        nodes.append(
            NodeSpec(
                id=nid,
                role=role,
                position=pos,
                tx_power_dbm=r.number(n, (*path, "tx_power_dbm"), 4.0),
                group_id=n.get("group_id", group_id),
                room=n.get("room"),
                chargers=tuple(float(x) for x in chargers),
                anchor=n.get("anchor"),
                adc_phase_ms=r.number(n, (*path, "adc_phase_ms"), None, allow_none=True),
            )
        )

    scenario = Scenario(
        name=str(data.get("name", Path(source).stem)),
        mode=mode,
        codec=use_codec,
        seed=seed,
        geometry=geometry,
        channel=channel,
        wpt=wpt,
        duty=duty,
        mobile_profile=profiles["mobile"],
        wpa_profile=profiles["wpa"],
        nodes=tuple(nodes),
        experiment=experiment,
    )
    for msg in validation_problems(scenario):
        key, _, rest = msg.partition(": ")
        path = tuple(int(p) if p.isdigit() else p for p in key.replace("[", ".").replace("]", "").split("."))
        r.fail(path, rest)
    if r.problems:
        raise ScenarioError(r.problems, source)
    return scenario


def resolve_path(name: str | Path) -> Path:
    """A scenario path, or the name of a bundled scenario (``experiments/dz``)."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.yaml"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no scenario file at {name}")


def load_scenario(name: str | Path) -> Scenario:
    path = resolve_path(name)
    return parse_scenario(path.read_text(), str(path))


def bundled_scenarios() -> list[Path]:
    return sorted(BUNDLED_DIR.glob("*.yaml"))
