import json

import pytest

import pandas as pd

from config.settings import OutputConfig
from flows.suite import CHECKS
from main import ConfigError, build_parser, load_config, main


def _write_config(tmp_path, name="run.json", **overrides):
    data = {"model": {"spectrum": [1.0, 0.5]}, "weight": {"kind": "unit"},
            "fields": {"p": {"kind": "polynomial", "constant": 0.5, "linear": [1.0, 0.3]}},
            "params": {"ibp": {"field": "p"}}, "suite": ["ibp"], "method": "gh", "budget": 1000,
            "output": str(tmp_path / "out")}
    data.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_list_checks():
    assert main(["list-checks"]) == 0


def test_describe(capsys):
    assert main(["describe", "gauss_green_sphere"]) == 0
    out = capsys.readouterr().out
    assert CHECKS["gauss_green_sphere"].anchor in out
    assert main(["describe", "nope"]) == 2


def test_run_from_json(tmp_path):
    path = _write_config(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "out" / OutputConfig.LEDGER_NAME).exists()


def test_run_out_override(tmp_path):
    path = _write_config(tmp_path)
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "elsewhere")]) == 0
    assert (tmp_path / "elsewhere" / OutputConfig.LEDGER_NAME).exists()


def test_run_from_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        "model:\n  spectrum: {family: 2^-n, n: 3}\n"
        "suite: [ibp]\n"
        "method: gh\n"
        f"output: {tmp_path / 'out'}\n"
        "fields:\n  p: {kind: linear, linear: [1.0, -2.0]}\n"
        "params:\n  ibp: {field: p}\n"
    )
    assert main(["run", "--config", str(path)]) == 0


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"model": {"spectrum": [1.0,]}}')
    with pytest.raises(ConfigError, match=r"bad\.json:1:\d+"):
        load_config(str(path))
    assert main(["run", "--config", str(path)]) == 2


def test_invalid_config_lists_fields(tmp_path):
    path = _write_config(tmp_path, budget=10)
    with pytest.raises(ConfigError, match="budget"):
        load_config(str(path))
    assert main(["run", "--config", str(path)]) == 2


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2


def test_bad_override_is_config_error(tmp_path):
    path = _write_config(tmp_path)
    assert main(["run", "--config", str(path), "--budget", "5"]) == 2


def test_check_group_must_be_known():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["check", "nope", "--config", "x.json"])


def test_check_divergence_without_config(tmp_path):
    out = tmp_path / "div"
    status = main(["check", "divergence", "--weight", "gaussian_type:0.05", "--field", "coordinate:1",
                   "--budget", "20000", "--method", "gh", "--out", str(out)])
    assert status in (0, 1)
    ledger = pd.read_csv(out / OutputConfig.LEDGER_NAME)
    assert {"bilinear", "energy", "adjointness", "l2_bound", "condition_41"} <= set(ledger["identity_id"])
    detail = json.loads((out / "bilinear.json").read_text())
    assert detail["reports"][0]["config"]["f"] == "y1"
    assert detail["reports"][0]["config"]["weight"] == "w_lambda(lambda=0.05)"


@pytest.mark.parametrize("argv", [
    ["check", "divergence", "--weight", "unit:3"],
    ["check", "divergence", "--weight", "nope"],
    ["check", "divergence", "--spectrum", "1,a"],
    ["check", "divergence", "--field", "nope", "--budget", "1000"],
    ["run"],
])
def test_config_free_options_are_validated(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path)]) == 2
