import json

import pytest
import yaml

from alignflow.artifacts import canonical_json, manifest_hash
from alignflow.cli import main
from alignflow.config import build_scenario, load_config, parse_config
from alignflow.errors import ConfigError

ORACLE = {"scenario": {"builder": "oracle", "params": {"n_labels": 32}},
          "integrator": {"method": "rk45", "rtol": 1e-10, "atol": 1e-14, "tol_align": 1e-10},
          "analysis": {"n_pairs": 50}}


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return str(p)


def test_defaults_filled():
    cfg = parse_config({"scenario": {"builder": "oracle"}})
    assert cfg.integrator().method == "rk4"
    assert cfg.analysis["n_pairs"] == 1000
    assert cfg.output["dir"] == "out"
    assert "workers" not in cfg.resolved["integrator"]


@pytest.mark.parametrize("data, path", [
    ({"scenario": {"builder": "nope"}}, "scenario.builder"),
    ({"scenario": {"builder": "oracle"}, "integrator": {"rtol": -1}}, "integrator.rtol"),
    ({"scenario": {"builder": "oracle"}, "extra": 1}, "<root>"),
    ({"scenario": {"builder": "oracle"}, "analysis": {"dimension": {"kind": "x"}}},
     "analysis.dimension.kind"),
])
def test_schema_errors_name_the_field(data, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        parse_config(data)


def test_empty_config_rejected():
    with pytest.raises(ConfigError):
        parse_config({})


def test_kernel_block_restrictions():
    with pytest.raises(ConfigError):
        build_scenario(parse_config({"scenario": {"builder": "oracle"},
                                     "kernel": {"family": "constant"}}))
    with pytest.raises(ConfigError):
        build_scenario(parse_config({"scenario": {"builder": "expression",
                                                  "params": {"u0_expr": "a", "rho0_expr": "1",
                                                             "box": [0, 1], "n_labels": 4}}}))
    with pytest.raises(ConfigError):
        build_scenario(parse_config({"scenario": {"builder": "oracle",
                                                  "params": {"bogus": 1}}}))


def test_yaml_and_json_agree(tmp_path):
    a = load_config(_write(tmp_path, ORACLE, "a.yaml"))
    b = load_config(_write(tmp_path, ORACLE, "b.json"))
    assert a.resolved == b.resolved


def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["simulate"]) == 2
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert main(["simulate", "--config", str(empty)]) == 2
    bad = _write(tmp_path, {"scenario": {"builder": "oracle"}, "kernel": {"family": "x"}})
    assert main(["simulate", "--config", bad]) == 2
    assert "kernel.family" in capsys.readouterr().err


def test_cli_limit_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    assert main(["limit", "--config", _write(tmp_path, ORACLE), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    h = man["manifest_hash"]
    assert h == manifest_hash(man["manifest"])
    rep = json.loads((out / "limit_report.json").read_text())
    assert rep["manifest_hash"] == h and rep["passed"]
    assert (out / "trajectory.csv").read_text().startswith(f"# manifest_hash={h}\n")


def test_cli_output_independent_of_workers(tmp_path):
    cfg = _write(tmp_path, ORACLE)
    outs = []
    for w in (1, 3):
        out = tmp_path / f"w{w}"
        assert main(["limit", "--config", cfg, "--out", str(out), "--workers", str(w)]) == 0
        outs.append(out)
    for name in ("manifest.json", "diagnostics.json", "limit_report.json", "trajectory.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_cli_supercritical(tmp_path, capsys):
    data = {"scenario": {"builder": "supercritical", "params": {"n_labels": 50}},
            "integrator": {"breakdown": True, "dt": 0.01}}
    cfg = _write(tmp_path, data)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert "breakdown at t = 0.69" in capsys.readouterr().out
    assert main(["limit", "--config", cfg, "--out", str(tmp_path / "l")]) == 1


def test_cli_dimension_powerlaw(tmp_path):
    data = {"scenario": {"builder": "powerlaw", "params": {"p": 2.0, "n_labels": 1024}},
            "integrator": {"method": "rk45", "rtol": 1e-10, "atol": 1e-14,
                           "tol_align": 1e-10},
            "analysis": {"n_pairs": 50, "dimension": {"kind": "local", "x": 0.0,
                                                      "radii": [1e-2, 5e-3, 2.5e-3,
                                                                1.25e-3, 6.25e-4]}}}
    out = tmp_path / "d"
    assert main(["dimension", "--config", _write(tmp_path, data), "--out", str(out)]) == 0
    est = json.loads((out / "dimension.json").read_text())
    assert est["slope"] == pytest.approx(0.5, abs=0.05)


def test_canonical_json_maps_nonfinite_to_null():
    assert canonical_json({"x": float("nan"), "y": [1, 2]}) == \
        '{\n  "x": null,\n  "y": [\n    1,\n    2\n  ]\n}\n'
