import textwrap

import pytest

from wiploc.protocol import Mode, Role
from wiploc.simcore.scenario import (
    Geometry,
    Room,
    ScenarioError,
    bundled_scenarios,
    ground_truth,
    load_scenario,
    parse_scenario,
    resolve_path,
    wpa_cell_map,
)

MINIMAL = """
name: tiny
seed: 3
geometry:
  rooms:
    - {id: r1, rect: [0, 0, 4, 4]}
nodes:
  - {id: 1, role: anchor, pos: [1, 1], room: r1}
  - {id: 2, role: anchor, pos: [3, 1], room: r1}
  - {id: 100, role: mobile}
experiment:
  truth: voronoi
  positions: [[2, 2], [0.5, 0.5]]
  rounds: 4
"""


def test_parse_minimal():
    sc = parse_scenario(MINIMAL)
    assert sc.name == "tiny" and sc.seed == 3 and sc.mode is Mode.WIPLOC and sc.codec
    assert [a.id for a in sc.anchors] == [1, 2] and sc.mobile.id == 100
    assert sc.experiment.positions == ((2.0, 2.0), (0.5, 0.5))
    assert sc.channel.exponent == 2.0  # default
    assert sc.duty.t_c == 10.0


def test_overrides():
    sc = parse_scenario(MINIMAL).with_overrides(seed=9, codec=False)
    assert sc.seed == 9 and not sc.codec


@pytest.mark.parametrize("path", bundled_scenarios(), ids=lambda p: p.stem)
def test_bundled_scenarios_validate(path):
    sc = load_scenario(path)
    sc.validate()
    assert sc.anchors


def test_resolve_bundled_name():
    assert resolve_path("experiments/rl-3anchor").name == "rl-3anchor.yaml"
    with pytest.raises(FileNotFoundError):
        resolve_path("experiments/nope")


def _problems(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(textwrap.dedent(text), "bad.yaml")
    return info.value.problems


def test_unknown_key_reported_with_line():
    probs = _problems(MINIMAL.replace("  truth: voronoi", "  truth: voronoi\n  roundz: 3"))
    assert any("roundz" in p and "line" in p for p in probs)


def test_all_problems_collected():
    text = MINIMAL.replace("[2, 2]", "[9, 9]").replace("rounds: 4", "rounds: 0").replace("id: 2,", "id: 1,")
    probs = _problems(text)
    joined = "\n".join(probs)
    assert "duplicate" in joined and "rounds" in joined and "outside every room" in joined
    assert len(probs) >= 3


@pytest.mark.parametrize(
    "edit,needle",
    [
        (("role: anchor, pos: [1, 1]", "role: beacon, pos: [1, 1]"), "role"),
        (("seed: 3", "seed: -1"), "seed"),
        (("name: tiny", "name: tiny\nmode: fancy"), "mode"),
        (("{id: 100, role: mobile}", "{id: 100, role: anchor, pos: [2, 3]}"), "mobile"),
        (("id: 2, role: anchor", "id: 20, role: anchor"), "codec range"),
        (("truth: voronoi", "truth: cell"), "wiploc++"),
        (("rect: [0, 0, 4, 4]", "rect: [0, 0, -4, 4]"), "rect"),
        (("name: tiny", "name: tiny\nchannel: {exponent: 0}"), "exponent"),
        (("name: tiny", "name: tiny\nduty: {t_m: 10, t_c: 20}"), "t_c"),
        (("name: tiny", "name: tiny\nwpt: {points: [[1, 1], [2, 3]]}"), "points"),
    ],
)
def test_validation_messages(edit, needle):
    probs = _problems(MINIMAL.replace(*edit))
    assert any(needle in p for p in probs), probs


def test_yaml_syntax_error():
    probs = _problems("name: [unclosed\n")
    assert "YAML" in probs[0]


def test_ground_truth_examples():
    sc = parse_scenario(MINIMAL)
    gt = ground_truth(sc, (2.0, 2.0))
    assert gt.room == "r1"
    # equidistant from both anchors: lowest ID wins
    assert gt.voronoi == 1
    assert ground_truth(sc, (2.9, 1.0)).voronoi == 2
    with pytest.raises(ValueError):
        ground_truth(sc, (10.0, 10.0))


def test_cell_grid_arithmetic():
    g = Geometry((Room("a", (0, 0, 4, 4)), Room("b", (4, 0, 8, 2))), cell_size=2)
    assert g.cell_of((0.5, 0.5)) == ("a", 0, 0)
    assert g.cell_of((3.9, 2.1)) == ("a", 1, 1)
    assert g.cell_of((4.0, 4.0)) == ("a", 1, 1)  # boundary clamps into the room
    assert g.cell_of((7.0, 1.0)) == ("b", 1, 0)
    assert g.cell_of((9.0, 1.0)) is None


def test_wpa_cells_bundled():
    sc = load_scenario("experiments/cl-room")
    cells = wpa_cell_map(sc)
    assert len(set(cells.values())) == len(cells) == 4
    for w in sc.wpas:
        assert w.role is Role.WPA and ground_truth(sc, w.position).wpa == w.id
