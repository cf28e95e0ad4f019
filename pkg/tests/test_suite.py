import json
import math
from pathlib import Path

import pandas as pd
import pytest

from config.settings import CheckConfig, OutputConfig
from engine.fields import gaussian_bump
from engine.gaussian_core import GaussianModel, spectrum_brownian_kl
from engine.integrate import Estimator
from engine.weights import gaussian_type_weight, sup_norm_kl_weight
from flows.suite import CHECKS, EXIT_CONFIG, EXIT_FAILED, EXIT_INFRA, EXIT_OK, check_ibp, run_suite
from main import load_config
from models.schemas import RunConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
POLY = {"kind": "polynomial", "constant": 0.5, "linear": [1.0, 0.3], "quadratic": [[0.2]]}


def _config(tmp_path, **overrides) -> RunConfig:
    data = {"model": {"spectrum": [1.0, 0.5]}, "weight": {"kind": "unit"}, "fields": {"p": POLY},
            "params": {"ibp": {"field": "p"}}, "suite": ["ibp"], "method": "gh", "budget": 1000,
            "output": str(tmp_path)}
    data.update(overrides)
    return RunConfig.model_validate(data)


def _ledger(path):
    return pd.read_csv(path / OutputConfig.LEDGER_NAME)


def test_registry_lists_every_runner():
    assert len(CHECKS) == 20
    for check_id, spec in CHECKS.items():
        assert spec.check_id == check_id
        assert spec.anchor and spec.formula


def test_ibp_suite_passes(tmp_path):
    assert run_suite(_config(tmp_path), echo=False) == EXIT_OK
    ledger = _ledger(tmp_path)
    assert tuple(ledger.columns) == OutputConfig.LEDGER_COLUMNS
    assert len(ledger) == 2
    assert ledger["identity_id"].eq("ibp").all()
    assert ledger["pass"].all()
    detail = json.loads((tmp_path / "ibp.json").read_text())
    assert detail["check_id"] == "ibp"
    assert len(detail["reports"]) == 2
    assert (tmp_path / OutputConfig.LOG_NAME).exists()


def test_same_seed_gives_identical_ledger(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        status = run_suite(_config(out, method="mc", budget=20_000, seed=9), echo=False)
        assert status in (EXIT_OK, EXIT_FAILED)
    assert (a / OutputConfig.LEDGER_NAME).read_bytes() == (b / OutputConfig.LEDGER_NAME).read_bytes()


def test_append_adds_rows(tmp_path):
    run_suite(_config(tmp_path), echo=False)
    run_suite(_config(tmp_path), echo=False, append=True)
    assert len(_ledger(tmp_path)) == 4


def test_unknown_check_id(tmp_path):
    assert run_suite(_config(tmp_path, suite=["ibp", "nope"]), echo=False) == EXIT_CONFIG
    assert not (tmp_path / OutputConfig.LEDGER_NAME).exists()


def test_bad_surface_is_a_config_error(tmp_path):
    config = _config(tmp_path, surface={"kind": "hyperplane", "normal": [1.0, 0.0, 0.0]})
    assert run_suite(config, echo=False) == EXIT_CONFIG


def test_failed_identity_sets_exit_status(tmp_path):
    config = _config(tmp_path, model={"spectrum": [1.0]}, weight={"kind": "gaussian_type", "lambda": 0.4},
                     suite=["hypothesis1"], method="mc", budget=50_000, seed=11)
    assert run_suite(config, echo=False) == EXIT_FAILED
    assert not _ledger(tmp_path)["pass"].all()


def test_runner_exception_is_infrastructure_failure(tmp_path):
    config = _config(tmp_path, suite=["ibp", "surface_measure_hyperplane"])
    assert run_suite(config, echo=False) == EXIT_INFRA
    ledger = _ledger(tmp_path)
    assert len(ledger) == 2
    assert ledger["identity_id"].eq("ibp").all()


def test_duplicate_suite_entries_rejected(tmp_path):
    with pytest.raises(ValueError):
        _config(tmp_path, suite=["ibp", "ibp"])


def _assert_verdicts_follow_delta(ledger):
    assert len(ledger) > 0
    mismatched = ledger[(ledger["delta"] <= ledger["tol"]) != ledger["pass"]]
    assert mismatched.empty, mismatched[["identity_id", "delta", "tol", "pass"]].to_string()


def test_ledger_pass_column_matches_delta_and_tol(tmp_path):
    suite = ["ibp", "bilinear", "energy", "adjointness", "l2_bound", "condition_41", "hypothesis1", "hypothesis2",
             "gradient_calculus", "lq_moments", "embedding", "surface_measure_hyperplane"]
    config = _config(tmp_path, model={"spectrum": [1.0, 0.5, 0.25, 0.125]},
                     weight={"kind": "gaussian_type", "lambda": 0.05}, fields={}, params={
                         "surface_measure_hyperplane": {"shell": False}}, suite=suite, budget=20_000)
    assert run_suite(config, echo=False) in (EXIT_OK, EXIT_FAILED)
    ledger = _ledger(tmp_path)
    assert set(suite) <= {i.split(":")[0] for i in ledger["identity_id"]}
    _assert_verdicts_follow_delta(ledger)


def test_square_norm_violations_fail_only_with_positive_slack(tmp_path):
    config = _config(tmp_path, model={"spectrum": [1.0, 0.5, 0.25]}, weight={"kind": "square_norm"}, fields={},
                     params={}, suite=["condition_41"], budget=20_000)
    run_suite(config, echo=False)
    ledger = _ledger(tmp_path)
    _assert_verdicts_follow_delta(ledger)
    assert (ledger["pass"] == (ledger["lhs"] < 0.0)).all()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["sphere.yaml", "fernique.yaml"])
def test_example_configs_keep_verdicts_consistent(tmp_path, name):
    base = load_config(str(CONFIGS / name))
    config = RunConfig.model_validate({**base.model_dump(by_alias=True), "budget": 400_000,
                                       "output": str(tmp_path)})
    assert run_suite(config, echo=False) in (EXIT_OK, EXIT_FAILED)
    _assert_verdicts_follow_delta(_ledger(tmp_path))


def test_ledger_rows_carry_check_anchor(tmp_path):
    run_suite(_config(tmp_path), echo=False)
    assert _ledger(tmp_path)["anchor"].eq(CHECKS["ibp"].anchor).all()


@pytest.mark.slow
def test_rho_monotonicity_over_nested_instances(tmp_path):
    config = _config(tmp_path, model={"spectrum": [1.0, 0.5, 0.25, 0.125]}, fields={}, params={},
                     surface={"kind": "sphere", "radius": 1.0}, suite=["rho_monotonicity"], method="mc",
                     budget=200_000)
    assert run_suite(config, echo=False) == EXIT_OK
    ledger = _ledger(tmp_path)
    assert len(ledger) == 5
    assert (ledger["lhs"] <= ledger["rhs"] + ledger["tol"]).all()


@pytest.mark.parametrize("h", [1, 2, 3, 4])
def test_ibp_gaussian_type_weight_by_gauss_hermite(h):
    model = GaussianModel((1.0, 0.5, 0.25, 0.125))
    report = check_ibp(model, gaussian_type_weight(model, 0.05), gaussian_bump((0.25,), 1.2), h,
                       estimator=Estimator.make("gh"))
    assert report.abs_delta <= 1e-8, (report.lhs.value, report.rhs.value)
    assert report.passed


@pytest.mark.slow
def test_ibp_sup_norm_kl_weight_by_monte_carlo():
    model = GaussianModel(tuple(spectrum_brownian_kl(3)))
    report = check_ibp(model, sup_norm_kl_weight(model, grid_size=128), gaussian_bump((0.25,), 1.2), 1,
                       budget=100_000, seed=13, method="mc")
    assert report.config["method"] == "mc"
    spread = CheckConfig.SIGMA_MULTIPLIER * math.hypot(report.lhs.stderr, report.rhs.stderr)
    assert report.tolerance == pytest.approx(max(spread, CheckConfig.ABS_FLOOR))
    assert report.passed, (report.lhs.value, report.rhs.value)
