import json
import math

import numpy as np
import pytest

from impulsive_geodesics import config, io, scenarios
from impulsive_geodesics.cli import main
from impulsive_geodesics.errors import ConfigError

FLAT_TOML = """
id = "flat-min"
profile = "x^2 - y^2"
T = 1.0
eps = 0.01

[manifold]
name = "euclidean:2"

[data]
x0 = [1.0, 0.0]
xdot0 = [0.0, 0.0]
"""


@pytest.fixture
def flat_toml(tmp_path):
    path = tmp_path / "flat.toml"
    path.write_text(FLAT_TOML)
    return path


def run(*argv):
    return main([str(a) for a in argv])


# configuration

def test_toml_file_resolves(flat_toml):
    sc = config.load(flat_toml)
    assert sc.id == "flat-min" and sc.manifold.dim == 2
    assert sc.eps == 0.01 and sc.eps_grid == [0.01]
    assert sc.raw["net"] == "bump" and sc.raw["kink_rule"] == "printed"
    np.testing.assert_array_equal(sc.data[2], [1.0, 0.0])


def test_json_and_toml_agree(flat_toml, tmp_path):
    raw = config.load_raw(flat_toml)
    jpath = tmp_path / "flat.json"
    jpath.write_text(json.dumps(raw))
    assert config.load(jpath).digest() == config.load(flat_toml).digest()


@pytest.mark.parametrize("change, key", [
    ({"data": {"x0": [1.0, 0.0, 0.0], "xdot0": [0.0, 0.0]}}, "data.x0"),
    ({"data": {"x0": [1.0, 0.0], "xdot0": [0.0]}}, "data.xdot0"),
    ({"data": {"xdot0": [0.0, 0.0]}}, "data.x0"),
    ({"eps": 2.0}, "eps"),
    ({"eps": 1e-7}, "eps"),
    ({"eps_grid": [0.1, 0.0]}, "eps_grid[1]"),
    ({"eps_grid": [0.1, 1e-7]}, "eps_grid"),
    ({"profile": True}, "profile"),
    ({"net": "gaussian"}, "net"),
    ({"profile": "x^2 + z"}, "profile"),
    ({"manifold": {"name": "torus"}}, "manifold.name"),
    ({"kink_rule": "both"}, "kink_rule"),
    ({"integrator": {"rel_tol": -1}}, "integrator.rel_tol"),
    ({"colour": "red"}, "colour"),
    ({"integrator": {"rtol": 1e-8}}, "integrator.rtol"),
    ({"data": {"x0": [1.0, 0.0], "xdot0": [0.0, 0.0], "u0": -0.01}, "eps": 0.1}, "data.u0"),
    ({"jobs": 0}, "jobs"),
])
def test_config_errors_name_the_key(change, key):
    raw = scenarios.get("flat-quadratic")
    raw.update(change)
    with pytest.raises(ConfigError) as info:
        config.resolve(raw)
    assert info.value.key == key
    assert key in str(info.value)


def test_sphere_point_outside_chart():
    raw = scenarios.get("sphere-cos")
    raw["data"]["x0"] = [0.0, 0.0]
    with pytest.raises(ConfigError, match="data.x0"):
        config.resolve(raw)


@pytest.mark.parametrize("text, expected", [
    ("1e-1:1e-4:4", [0.1, 0.01, 0.001, 1e-4]),
    ("0.5:0.5:1", [0.5]),
])
def test_parse_eps_grid(text, expected):
    assert config.parse_eps_grid(text) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("text", ["1e-1:1e-4", "a:b:3", "0.1:0.01:0", "0:0.1:3"])
def test_parse_eps_grid_rejects(text):
    with pytest.raises(ConfigError):
        config.parse_eps_grid(text)


def test_apply_override_parses_values():
    raw = scenarios.get("flat-quadratic")
    config.apply_override(raw, "integrator.rel_tol=1e-9")
    config.apply_override(raw, "kink_rule=ode")
    config.apply_override(raw, "data.x0=[2.0, 0.5]")
    assert raw["integrator"]["rel_tol"] == 1e-9
    assert raw["kink_rule"] == "ode"
    assert raw["data"]["x0"] == [2.0, 0.5]
    with pytest.raises(ConfigError):
        config.apply_override(raw, "no-equals-sign")


def test_data_translated_to_minus_one():
    raw = scenarios.get("flat-crossing")
    raw["data"] = {"v0": 0.0, "vdot0": 2.0, "x0": [-0.5, 0.0], "xdot0": [1.0, 0.0], "u0": -0.5}
    sc = config.resolve(raw)
    v0, vdot0, x0, xdot0 = sc.data
    assert v0 == pytest.approx(-1.0) and vdot0 == 2.0
    np.testing.assert_allclose(x0, [-1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(xdot0, [1.0, 0.0], atol=1e-12)


def test_digest_depends_on_content():
    a = config.resolve(scenarios.get("flat-quadratic"))
    b = config.resolve(scenarios.get("flat-quadratic"))
    raw = scenarios.get("flat-quadratic")
    raw["seed"] = 1
    assert a.digest() == b.digest() != config.resolve(raw).digest()


def test_custom_manifold_from_toml(tmp_path):
    path = tmp_path / "custom.toml"
    path.write_text("""
id = "custom-hp"
profile = "x"
[manifold]
name = "custom"
coords = ["x", "y"]
metric = [["1/y^2", "0"], ["0", "1/y^2"]]
bounds = [[nan, nan], [0.0, inf]]
[data]
x0 = [0.0, 1.0]
xdot0 = [1.0, 0.0]
""")
    assert run("limit", "--config", path, "--out", tmp_path) == 0
    ref = json.loads((tmp_path / "custom-hp" / "reports" / "limit.json").read_text())
    run("limit", "--config", "half-plane-linear", "--out", tmp_path)
    hp = json.loads((tmp_path / "half-plane-linear" / "reports" / "limit.json").read_text())
    assert ref["broken_geodesic"]["jump"] == pytest.approx(hp["broken_geodesic"]["jump"], abs=1e-7)
    with pytest.raises(ConfigError, match="data.x0"):
        raw = config.load_raw(path)
        raw["data"]["x0"] = [0.0, -1.0]
        config.resolve(raw)


@pytest.mark.parametrize("name", sorted(scenarios.SCENARIOS))
def test_shipped_scenarios_resolve(name):
    assert config.resolve(scenarios.get(name)).id == name


# command line

def test_simulate_single_eps_csv(flat_toml, tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--config", flat_toml, "--out", out) == 0
    files = sorted((out / "flat-min" / "trajectories").iterdir())
    assert [f.name for f in files] == ["eps_1.000e-02.csv"]
    header, rows = io.read_csv(files[0])
    assert ",".join(header) == "u,v,vdot,x1,x2,xdot1,xdot2"
    assert rows[0, 0] == -1.0 and rows[-1, 0] == 1.0
    # free motion after the pulse towards the limit point (2, 0) at u = 1
    np.testing.assert_allclose(rows[-1, 3:5], [2.0, 0.0], atol=0.02)


def test_simulate_grid_writes_index(flat_toml, tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--config", flat_toml, "--out", out, "--eps-grid", "1e-1:1e-3:3",
               "--format", "json") == 0
    tdir = out / "flat-min" / "trajectories"
    names = sorted(p.name for p in tdir.iterdir())
    assert names == ["eps_1.000e-01.json", "eps_1.000e-02.json", "eps_1.000e-03.json", "index.json"]
    index = json.loads((tdir / "index.json").read_text())
    assert index["schema"] == "impulsive-geodesics/trajectory-index/1"
    assert [e["eps"] for e in index["trajectories"]] == pytest.approx([0.1, 0.01, 0.001])
    one = json.loads((tdir / "eps_1.000e-03.json").read_text())
    assert one["columns"] == ["u", "v", "vdot", "x1", "x2", "xdot1", "xdot2"]
    assert one["provenance"]["scenario"] == "flat-min"


def test_simulate_config_error_exit(flat_toml, tmp_path, capsys):
    code = run("simulate", "--config", flat_toml, "--out", tmp_path, "--set", "data.x0=[1.0, 0.0, 0.0]")
    assert code == 2
    assert "data.x0" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert run("limit", "--config", tmp_path / "nope.toml") == 2
    assert run("limit") == 2


def test_engine_error_exit(tmp_path, caplog):
    # a pole-bound geodesic leaves the sphere chart before T
    code = run("simulate", "--config", "sphere-cos", "--out", tmp_path,
               "--set", "data.x0=[0.3, 0.0]", "--set", "data.xdot0=[-1.0, 0.0]")
    assert code == 3
    assert "ChartExitError" in caplog.text
    assert not (tmp_path / "sphere-cos" / "trajectories").exists()


def test_engine_error_in_limit(tmp_path, capsys):
    code = run("limit", "--config", "sphere-cos", "--out", tmp_path,
               "--set", "data.x0=[0.3, 0.0]", "--set", "data.xdot0=[-1.0, 0.0]")
    assert code == 3
    assert "ChartExitError" in capsys.readouterr().err


def test_limit_zero_profile(tmp_path):
    assert run("limit", "--config", "flat-quadratic", "--out", tmp_path, "--set", "profile=0") == 0
    rep = json.loads((tmp_path / "flat-quadratic" / "reports" / "limit.json").read_text())
    assert rep["broken_geodesic"]["jump"] == 0.0
    assert rep["broken_geodesic"]["kink_slope"] == 0.0
    assert rep["config"]["profile"] == "0"


def test_validate_net_exit_codes(tmp_path, capsys):
    assert run("validate-net", "--config", "flat-quadratic", "--out", tmp_path) == 0
    assert run("validate-net", "--config", "flat-quadratic", "--out", tmp_path, "--set", "net=bump-mass2") == 1
    rep = json.loads((tmp_path / "flat-quadratic" / "reports" / "validation.json").read_text())
    assert rep["validation"]["failed_axioms"] == ["mass"]
    assert (tmp_path / "flat-quadratic" / "plotdata" / "l1_norm.dat").exists()


def test_sweep_exit_follows_kink_rule(tmp_path, capsys):
    base = ("sweep", "--config", "flat-quadratic", "--out", tmp_path)
    # with the kink slope as printed, v misses the limit after the pulse
    assert run(*base) == 1
    text = capsys.readouterr().out
    assert "FAIL  v_association" in text and "PASS  x_association" in text
    assert run(*base, "--set", "kink_rule=ode") == 0
    root = tmp_path / "flat-quadratic"
    rep = json.loads((root / "reports" / "sweep.json").read_text())
    assert rep["passed"] and rep["config"]["kink_rule"] == "ode"
    header = (root / "reports" / "sweep_errors.csv").read_text().splitlines()[0]
    assert header == "eps,sup_x_err,v_err_at_-0.5,v_err_at_0.5,v_err_at_1,jump_err"
    dat = (root / "plotdata" / "sup_x_err.dat").read_text().splitlines()
    assert len(dat) == 5 and dat[1].split()[0] == repr(math.log10(0.1))
    assert (root / "plotdata" / "pairing_bump.dat").exists()


def test_reports_are_byte_identical(tmp_path):
    args = ("sweep", "--config", "flat-crossing", "--eps-grid", "1e-1:1e-3:3")
    run(*args, "--out", tmp_path / "a")
    run(*args, "--out", tmp_path / "b")
    a = (tmp_path / "a" / "flat-crossing" / "reports" / "sweep.json").read_text()
    b = (tmp_path / "b" / "flat-crossing" / "reports" / "sweep.json").read_text()
    assert a.replace(str(tmp_path / "a"), "") == b.replace(str(tmp_path / "b"), "")


def test_parallel_run_matches_serial(tmp_path):
    args = ("sweep", "--config", "flat-crossing", "--eps-grid", "1e-1:1e-3:3", "--out", tmp_path)
    run(*args, "--jobs", "1")
    serial = json.loads((tmp_path / "flat-crossing" / "reports" / "sweep.json").read_text())
    run(*args, "--jobs", "2")
    para = json.loads((tmp_path / "flat-crossing" / "reports" / "sweep.json").read_text())
    assert para["config"].pop("jobs") == 2 and serial["config"].pop("jobs") == 1
    assert para == serial


def test_embedded_config_reproduces_report(tmp_path):
    run("sweep", "--config", "flat-crossing", "--eps-grid", "1e-1:1e-3:3", "--out", tmp_path)
    path = tmp_path / "flat-crossing" / "reports" / "sweep.json"
    first = path.read_text()
    embedded = tmp_path / "embedded.json"
    embedded.write_text(json.dumps(json.loads(first)["config"]))
    run("sweep", "--config", embedded)
    assert path.read_text() == first
