import hashlib

import numpy as np
import pytest

from ifsim.config import (ScenarioFile, load_scenario, parse_point,
                          resolve_scenario_path)
from ifsim.errors import ScenarioInvalid
from ifsim.measure import BoxPartition, RadiusPartition

PI = np.pi

BASE = """\
[scenario]
name = "t"
chart = "polar2d"
box = [[1.0, 2.0], [0.0, "2 * pi"]]

[flow]
kind = "exact_rotation"

[section]
s = "sin(th)"
c = "cos(th)"
crossing = "ascending"

[impulse]
forward = "(1 + r) / 2; pi"
inverse = "2 * r - 1; 0"
"""


def write(tmp_path, extra="", base=BASE):
    p = tmp_path / "sc.toml"
    p.write_text(base + extra)
    return p


def load(tmp_path, extra="", base=BASE):
    return load_scenario(write(tmp_path, extra, base))


# --- happy paths ---------------------------------------------------------

def test_minimal_file_loads(tmp_path):
    sf = load(tmp_path)
    assert isinstance(sf, ScenarioFile)
    assert sf.scenario.name == "t"
    assert sf.scenario.box[1][1] == 2 * PI
    assert sf.experiments == {}
    assert sf.expected == {}


def test_sha256_is_of_raw_bytes(tmp_path):
    p = write(tmp_path)
    sf = load_scenario(p)
    assert sf.sha256 == hashlib.sha256(p.read_bytes()).hexdigest()
    assert load_scenario(p).sha256 == sf.sha256


def test_shipped_scenarios_load():
    for name in ("example21", "example22", "zeno", "corrupted_impulse"):
        sf = load_scenario(resolve_scenario_path(name))
        assert sf.scenario.chart == "polar2d"


def test_resolver_prefers_real_paths(tmp_path):
    p = write(tmp_path)
    assert resolve_scenario_path(str(p)) == str(p)
    assert resolve_scenario_path("example21.toml").endswith("example21.toml")
    with pytest.raises(ScenarioInvalid, match="no shipped scenario"):
        resolve_scenario_path("nonexistent_scenario_xyz")


def test_example21_experiment_blocks():
    sf = load_scenario(resolve_scenario_path("example21"))
    om = sf.experiment("omega", "omega")
    assert om["grid"] == (200, 200)
    assert om["params"].horizon == 57.0
    me = sf.experiment("measure", "measure")
    assert me["x0"] == (1.0, PI)
    assert me["times"][2] == PI
    assert isinstance(me["partition"], BoxPartition)
    assert sf.expected["tau_d_continuous"] is True
    assert sf.expected["omega_cap_d_empty"] is False


def test_example22_experiment_blocks():
    sf = load_scenario(resolve_scenario_path("example22"))
    me = sf.experiment("measure", "measure")
    assert me["source"] == "circle"
    assert me["n"] == 1024
    assert me["radius"] == 1.0
    assert isinstance(me["partition"], RadiusPartition)
    assert sf.experiment("taud", "taud")["horizon"] == 30.0
    assert sf.expected["modulus_min"] == 6.1


def test_gluing_table_reaches_scenario(tmp_path):
    sf = load(tmp_path, """
[gluing]
forward = "(1 + r) / 2; pi"
inverse = "2 * r - 1; 0"
""", base=BASE.replace('inverse = "2 * r - 1; 0"\n', ""))
    sc = sf.scenario
    assert sc.impulse.inverse is None
    assert sc.gluing is not None
    assert sc.effective_gluing() is sc.gluing


def test_knobs_table(tmp_path):
    sf = load(tmp_path, """
[knobs]
hit_bisection_tol = 1e-11
zeno_max_impulses = 500
""")
    assert sf.scenario.knobs.hit_bisection_tol == 1e-11
    assert sf.scenario.knobs.zeno_max_impulses == 500
    assert sf.scenario.knobs.tau_min == 1e-9


def test_kind_key_overrides_block_name(tmp_path):
    sf = load(tmp_path, """
[experiments.coarse]
kind = "omega"
grid = [10, 10]
""")
    assert sf.experiment("coarse", "omega")["grid"] == (10, 10)


def test_numeric_flow_field(tmp_path):
    sf = load(tmp_path, base=BASE.replace(
        'kind = "exact_rotation"', 'kind = "numeric"\nfield = "0; 1"\nh = 0.002'))
    assert sf.scenario.flow.kind == "numeric"
    assert sf.scenario.flow.h == 0.002


def test_parse_point():
    assert parse_point("1,pi", "polar2d") == (1.0, PI)
    assert parse_point(" 1.5 , 2 * pi ", "polar2d") == (1.5, 2 * PI)
    with pytest.raises(ScenarioInvalid, match="two comma-separated"):
        parse_point("1", "polar2d")
    with pytest.raises(ScenarioInvalid, match="constant"):
        parse_point("1,r", "polar2d")


# --- rejection paths -----------------------------------------------------

def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ScenarioInvalid, match="unknown key 'extra'"):
        load(tmp_path, "\n[extra]\nx = 1\n")


def test_unknown_scenario_key(tmp_path):
    with pytest.raises(ScenarioInvalid, match="scenario: unknown key 'nmae'"):
        load(tmp_path, base=BASE.replace('name = "t"', 'nmae = "t"'))


def test_unknown_experiment_key_is_path_qualified(tmp_path):
    with pytest.raises(ScenarioInvalid,
                       match="experiments.omega: unknown key 'grdi'"):
        load(tmp_path, "\n[experiments.omega]\ngrdi = [10, 10]\n")


def test_unknown_experiment_kind(tmp_path):
    with pytest.raises(ScenarioInvalid, match="unknown experiment kind"):
        load(tmp_path, "\n[experiments.wobble]\n")


def test_unknown_expected_key(tmp_path):
    with pytest.raises(ScenarioInvalid, match="expected: unknown key"):
        load(tmp_path, "\n[expected]\ntau_continuous = true\n")


def test_expected_types_enforced(tmp_path):
    with pytest.raises(ScenarioInvalid, match="must be true or false"):
        load(tmp_path, "\n[expected]\ntau_d_continuous = 1\n")
    with pytest.raises(ScenarioInvalid, match="must be a number"):
        load(tmp_path, "\n[expected]\nmodulus_max = true\n")


def test_missing_crossing(tmp_path):
    with pytest.raises(ScenarioInvalid, match="section: missing required key"):
        load(tmp_path, base=BASE.replace('crossing = "ascending"\n', ""))


def test_bad_crossing_value(tmp_path):
    with pytest.raises(ScenarioInvalid, match="section.crossing"):
        load(tmp_path, base=BASE.replace('"ascending"', '"sideways"'))


def test_bad_flow_kind(tmp_path):
    with pytest.raises(ScenarioInvalid, match="flow.kind"):
        load(tmp_path, base=BASE.replace('"exact_rotation"', '"spline"'))


def test_field_rejected_for_exact_kind(tmp_path):
    with pytest.raises(ScenarioInvalid, match="only the numeric kind"):
        load(tmp_path, base=BASE.replace(
            'kind = "exact_rotation"', 'kind = "exact_rotation"\nfield = "0; 1"'))


def test_numeric_kind_requires_field(tmp_path):
    with pytest.raises(ScenarioInvalid, match="flow: missing required key"):
        load(tmp_path, base=BASE.replace('"exact_rotation"', '"numeric"'))


def test_bad_expression_is_reported_with_path(tmp_path):
    with pytest.raises(ScenarioInvalid, match="section.s: bad expression"):
        load(tmp_path, base=BASE.replace('s = "sin(th)"', 's = "sin(th"'))


def test_wrong_component_count(tmp_path):
    with pytest.raises(ScenarioInvalid, match="impulse.forward"):
        load(tmp_path, base=BASE.replace(
            'forward = "(1 + r) / 2; pi"', 'forward = "(1 + r) / 2"'))


def test_non_constant_box_entry(tmp_path):
    with pytest.raises(ScenarioInvalid, match="must be constant"):
        load(tmp_path, base=BASE.replace('"2 * pi"', '"2 * th"'))


def test_taud_requires_scale(tmp_path):
    with pytest.raises(ScenarioInvalid,
                       match="experiments.taud: missing required key 'scale'"):
        load(tmp_path, "\n[experiments.taud]\n")


def test_kb_requires_walk_parameters(tmp_path):
    with pytest.raises(ScenarioInvalid, match="missing required key 'x0'"):
        load(tmp_path, '\n[experiments.measure]\nsource = "kb"\n')


def test_circle_rejects_kb_keys(tmp_path):
    with pytest.raises(ScenarioInvalid, match="belong to the kb source"):
        load(tmp_path,
             '\n[experiments.measure]\nsource = "circle"\nn = 8\ndelta = 0.1\n')


def test_bad_partition_kind(tmp_path):
    with pytest.raises(ScenarioInvalid, match="partition.kind"):
        load(tmp_path, """
[experiments.measure]
source = "circle"
n = 8

[experiments.measure.partition]
kind = "hex"
""")


def test_partition_key_mismatch(tmp_path):
    with pytest.raises(ScenarioInvalid, match="only the box kind takes m"):
        load(tmp_path, """
[experiments.measure]
source = "circle"
n = 8

[experiments.measure.partition]
kind = "radius"
thresholds = [1.0]
m = 32
""")


def test_grid_type_checked(tmp_path):
    with pytest.raises(ScenarioInvalid, match="must be an integer"):
        load(tmp_path, "\n[experiments.omega]\ngrid = [10.5, 10]\n")
    with pytest.raises(ScenarioInvalid, match=">= 1"):
        load(tmp_path, "\n[experiments.omega]\ngrid = [0, 10]\n")


def test_bool_is_not_a_number(tmp_path):
    with pytest.raises(ScenarioInvalid, match="flow.h: must be a number"):
        load(tmp_path, base=BASE.replace(
            'kind = "exact_rotation"', 'kind = "exact_rotation"\nh = true'))


def test_knob_ranges_still_enforced(tmp_path):
    with pytest.raises(ScenarioInvalid):
        load(tmp_path, "\n[knobs]\ntau_min = 0.1\nzeno_min_gap = 1e-6\n")


def test_not_toml(tmp_path):
    p = tmp_path / "sc.toml"
    p.write_text("scenario = [unbalanced")
    with pytest.raises(ScenarioInvalid, match="not valid TOML"):
        load_scenario(p)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioInvalid, match="cannot read"):
        load_scenario(tmp_path / "absent.toml")


def test_experiment_accessor_errors(tmp_path):
    sf = load(tmp_path, "\n[experiments.omega]\ngrid = [10, 10]\n")
    with pytest.raises(ScenarioInvalid, match="no such experiment"):
        sf.experiment("taud", "taud")
    with pytest.raises(ScenarioInvalid, match="expected 'taud'"):
        sf.experiment("omega", "taud")
