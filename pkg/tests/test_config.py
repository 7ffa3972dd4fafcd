import json
import math

import pytest
from helpers import mini_config

from wingcrack.config import (
    config_from_dict,
    hours_to_seconds,
    load_preset,
    parse_config,
    preset_names,
    serialize_config,
    to_scenario,
)
from wingcrack.errors import ConfigError


def test_hours_suffix_converts_recursively():
    out = hours_to_seconds({"a_h": 2, "b": [{"start_h": 0.5}], "c": 1})
    assert out == {"a": 7200.0, "b": [{"start": 1800.0}], "c": 1}
    with pytest.raises(ConfigError):
        hours_to_seconds({"t_end": 1.0, "t_end_h": 1.0})
    with pytest.raises(ConfigError):
        hours_to_seconds({"t_end_h": "3"})


def test_mini_config_translates():
    cfg = config_from_dict(mini_config())
    assert cfg.stop.t_end == 3 * 3600.0
    assert cfg.numerics.dt == 3600.0
    sc = to_scenario(cfg)
    assert sc.schedule.entries[0].t_end == 21 * 3600.0
    assert sc.props.psi == pytest.approx(math.radians(1.0))
    assert sc.K_IC is None


@pytest.mark.parametrize(
    "patch, where",
    [
        ({"bogus": 1}, "bogus"),
        ({"material": {"E": 40e9, "nu": 0.2, "alpha": 0.8, "phi": 0.01, "c_p": 4e-10, "perm": 5e-20, "mu": 1e-4, "x": 1}}, "material.x"),
        ({"numerics": {"dH": -1.0}}, "dH"),
        ({"injection": [{"fracture": 3, "rate": 1e-9, "start_h": 0, "end_h": 1}]}, "fracture 3"),
        ({"probes": {"C": [5.0, 1.0]}}, "outside"),
        ({"stop": {"t_end_h": 3, "wing_tip": "Z", "wing_length": 0.1}}, "Z"),
        ({"boundary": {"left": {"kind": "glue"}}}, "boundary.left.kind"),
        ({"fractures": [{"points": [[0.5, 1.0], [2.5, 1.0]]}]}, "domain"),
    ],
)
def test_invalid_configs_name_the_problem(patch, where):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(mini_config(**patch))
    assert where in str(exc.value)


def test_parse_config_errors_include_path(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="bad.json: invalid JSON at line 1"):
        parse_config(bad)
    with pytest.raises(ConfigError, match="missing.json"):
        parse_config(tmp_path / "missing.json")
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps(mini_config(extra=1)))
    with pytest.raises(ConfigError, match="ok.json: extra"):
        parse_config(ok)


def test_serialize_round_trip(tmp_path):
    cfg = config_from_dict(mini_config(K_IC=0.7e6))
    p = tmp_path / "c.json"
    p.write_text(serialize_config(cfg))
    back = parse_config(p)
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert config_from_dict(mini_config(K_IC=0.8e6)).config_hash() != cfg.config_hash()


def test_presets_shipped():
    assert preset_names() == ["onset_5_1", "three_frac_5_3", "wingcrack_5_2"]
    with pytest.raises(ConfigError):
        load_preset("nope")


def test_preset_material_table():
    for name in preset_names():
        m = load_preset(name).material
        assert (m.E, m.nu, m.alpha, m.phi, m.c_p, m.perm, m.mu) == (40e9, 0.2, 0.8, 0.01, 4e-10, 5e-20, 1e-4)
        fp = load_preset(name).fracture_props
        assert (fp.a0, fp.mu_s, fp.psi_deg) == (1e-3, 0.5, 1.0)


def test_onset_preset():
    cfg = load_preset("onset_5_1")
    inj = cfg.injection[0]
    assert (inj.start, inj.end, inj.rate) == (6 * 3600.0, 21 * 3600.0, 5e-9)
    assert cfg.K_IC is None
    b = cfg.boundary
    assert (b.right.normal, b.top.normal) == (-20e6, -10e6)
    p = cfg.fractures[0].points
    assert math.dist(p[0], p[1]) == pytest.approx(0.1)
    assert math.degrees(math.atan2(p[1][1] - p[0][1], p[1][0] - p[0][0])) == pytest.approx(45.0)


def test_propagation_presets():
    c52 = load_preset("wingcrack_5_2")
    assert c52.K_IC == 0.7e6 and c52.stop.wing_length == 0.25
    c53 = load_preset("three_frac_5_3")
    pts = [f.points for f in c53.fractures]
    assert [tuple(q) for q in pts[0]] == [(0.751, 1.208), (0.849, 1.192)]
    assert [tuple(q) for q in pts[2]] == [(1.144, 0.78), (1.256, 0.831)]
    assert c53.injection[0].fracture == 1
    n = c53.numerics
    assert (n.l, n.dH, n.eps_m, n.eps_p, n.dt) == (0.5, 0.02, 0.5, 0.5, 3600.0)
