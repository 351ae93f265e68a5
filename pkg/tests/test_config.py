import pytest
from hypothesis import given, strategies as st

from pound.config import ConfigError, dump_config, load_config, parse_config, preset_names

BASE = """\
kind: bench
seed: 3
topology:
  nodes: 3
  rate_bps: 6e6
flows:
  - {name: a, message_size: 1024, period_us: 20000, count: 10, priority: 7, dst: 2}
  - name: b
    message_size: 65536
    period_us: 150000
    count: 5
"""


def test_parse_and_builders():
    cfg = parse_config(BASE)
    assert cfg.topology.rate_bps == 6e6  # numeric string accepted
    specs = cfg.flow_specs()
    assert [(s.name, s.flow_id, s.dst) for s in specs] == [("a", 1, 2), ("b", 2, 1)]
    assert cfg.topology_model().n == 3
    assert cfg.session_config().max_fragment_payload == 1448


@pytest.mark.parametrize("name", preset_names())
def test_presets_parse_and_round_trip(name):
    cfg = load_config(name)
    assert parse_config(dump_config(cfg)) == cfg


def test_expected_presets_present():
    assert {"laser_image_2node", "laser_image_3node", "bwsweep_2node", "control_rlc",
            "resilience_2node", "resilience_3node"} <= set(preset_names())


def test_load_from_file(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text(BASE)
    assert load_config(p) == parse_config(BASE)
    with pytest.raises(ConfigError, match="no such file or preset"):
        load_config(tmp_path / "missing.yaml")


def error_for(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "t.yaml")
    return info.value


def test_unknown_key_reports_line_and_field():
    e = error_for(BASE.replace("    count: 5\n", "    count: 5\n    colour: red\n"))
    assert (e.line, e.field) == (12, "flows[1].colour")
    assert str(e).startswith("t.yaml:12: flows[1].colour: unknown key")


def test_unknown_top_level_key():
    e = error_for("kind: bench\nflows: []\nbogus: 1\n")
    assert (e.line, e.field) == (3, "bogus")


def test_missing_required_flow_key():
    e = error_for(BASE.replace("    count: 5\n", ""))
    assert e.field == "flows[1]" and "count" in str(e) and e.line == 8


@pytest.mark.parametrize("edit, field", [
    (("rate_bps: 6e6", "rate_bps: fast"), "topology.rate_bps"),
    (("nodes: 3", "nodes: 2"), "flows[0].dst"),
    (("priority: 7", "priority: 300"), "flows[0]"),
    (("count: 10", "count: 10.5"), "flows[0].count"),
    (("kind: bench", "kind: party"), "kind"),
    (("seed: 3", "seed: -1"), "seed"),
    (("name: b", "name: a"), "flows[1].name"),
    (("period_us: 150000", "period_us: 150000\n    transport: tcp"), "flows[1].transport"),
])
def test_invalid_values(edit, field):
    e = error_for(BASE.replace(*edit))
    assert e.field == field and e.line is not None


def test_yaml_syntax_error_has_line():
    e = error_for("kind: bench\nflows: [\n")
    assert e.line is not None


def test_kind_specific_requirements():
    assert "needs at least one flow" in str(error_for("kind: bench\n"))
    assert error_for("kind: resilience\nflows: []\n").field == "outage"
    assert error_for("kind: control\ntopology: {nodes: 3}\n").field == "topology.nodes"
    assert error_for("kind: control\ncontrol: {perturbing: nope}\n").field == "control.perturbing"
    assert error_for("kind: control\ncontrol: {L: 0}\n").field == "control"


@given(st.integers(0, 2**31), st.integers(1, 10), st.floats(0, 1), st.booleans())
def test_round_trip_property(seed, prio, loss, shared):
    text = BASE + f"  - {{name: c, message_size: 10, period_us: 1000, count: 1, priority: {prio}}}\n"
    cfg = parse_config(text)
    cfg.seed, cfg.topology.loss_prob, cfg.topology.shared_medium = seed, loss, shared
    assert parse_config(dump_config(cfg)) == cfg
