# test/test_data_module.py
import pandas as pd
import pytest
import yaml
from pydantic import ValidationError

from app import data_module, detection_sim
from app.config import settings
from app.errors import ConfigError
from app.models import FitResult, RunManifest


def _write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_config_yaml_round_trip(tmp_path, make_config):
    config = make_config(source={"p": 0.02, "eta_w": 0.3}, memory={"mode": "storage", "t_B": 1.5})
    path = data_module.save_scenario_config(config, tmp_path / "scenario.yaml")
    loaded = data_module.load_scenario_config(path)
    assert loaded == config
    assert detection_sim.scenario_hash(loaded) == detection_sim.scenario_hash(config)


def test_unknown_key_is_reported_with_its_path(tmp_path):
    path = _write_yaml(tmp_path / "bad.yaml", {"scenario_id": "bad", "source": {"p": 0.1, "bogus": 1}})
    with pytest.raises(ConfigError) as err:
        data_module.load_scenario_config(path)
    assert any(line.startswith("source.bogus") for line in err.value.field_errors)


def test_out_of_range_probability_rejected(tmp_path):
    path = _write_yaml(tmp_path / "bad.yaml", {"source": {"p": 1.5}})
    with pytest.raises(ConfigError) as err:
        data_module.load_scenario_config(path)
    assert any(line.startswith("source.p") for line in err.value.field_errors)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        data_module.load_scenario_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        data_module.load_scenario_config(tmp_path / "list.yaml")
    (tmp_path / "broken.yaml").write_text("source: {p: [\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        data_module.load_scenario_config(tmp_path / "broken.yaml")


def test_empty_file_gives_defaults(tmp_path):
    (tmp_path / "empty.yaml").write_text("", encoding="utf-8")
    config = data_module.load_scenario_config(tmp_path / "empty.yaml")
    assert config.source.p == pytest.approx(0.01)


def test_stream_round_trip(tmp_path, make_config):
    stream = detection_sim.run_trials(make_config(n_trials=3000, source={"p": 0.1}))
    path = data_module.write_stream(stream, tmp_path / "streams" / "direct.csv")
    assert data_module.sidecar_path(path).is_file()
    loaded = data_module.read_stream(path)
    pd.testing.assert_frame_equal(loaded.tags, stream.tags, check_exact=False)
    assert loaded.metadata() == stream.metadata()


def test_stream_without_sidecar_rejected(tmp_path, make_config):
    stream = detection_sim.run_trials(make_config(n_trials=100))
    path = data_module.write_stream(stream, tmp_path / "s.csv")
    data_module.sidecar_path(path).unlink()
    with pytest.raises(ConfigError):
        data_module.read_stream(path)


def test_manifest_detects_tampering(tmp_path):
    data = tmp_path / "estimates.csv"
    data.write_text("quantity,value\np_w,0.1\n", encoding="utf-8")
    manifest = RunManifest(scenario_id="t", config={}, config_hash="0" * 64, seed=1, n_trials=10,
                           files={"estimates.csv": data_module.file_sha256(data)})
    path = data_module.write_manifest(manifest, tmp_path)
    assert data_module.verify_manifest(path) == {"estimates.csv": True}
    data.write_text("quantity,value\np_w,0.2\n", encoding="utf-8")
    assert data_module.verify_manifest(path) == {"estimates.csv": False}
    data.unlink()
    assert data_module.verify_manifest(path) == {"estimates.csv": False}


def test_fit_problem_with_external_data(tmp_path):
    problem_path = _write_yaml(tmp_path / "fit.yaml", {"model_id": "gaussian_line", "fixed": ["center"]})
    pd.DataFrame({"x": [-1.0, 0.0, 1.0], "y": [0.6, 1.0, 0.6], "sigma_y": [0.1, 0.1, 0.1]}).to_csv(
        tmp_path / "data.csv", index=False)
    problem = data_module.load_fit_problem(problem_path, tmp_path / "data.csv")
    assert [p.x for p in problem.data] == [-1.0, 0.0, 1.0]
    assert all(p.exposure == 1.0 for p in problem.data)
    with pytest.raises(ConfigError):
        data_module.load_fit_problem(problem_path)


def test_fit_data_requires_columns(tmp_path):
    pd.DataFrame({"x": [0.0], "y": [1.0]}).to_csv(tmp_path / "data.csv", index=False)
    with pytest.raises(ConfigError):
        data_module.read_fit_data(tmp_path / "data.csv")


def test_fit_result_round_trip(tmp_path):
    result = FitResult(model_id="saturation", params={"n_max": 68.0, "t_lin": 0.0044},
                       uncertainties={"n_max": 3.0, "t_lin": 1e-4}, free_params=["n_max", "t_lin"],
                       chi_square=12.5, n_dof=13, converged=True)
    path = data_module.write_fit_result(result, tmp_path / "fit_result.yaml")
    assert data_module.read_fit_result(path) == result


@pytest.mark.parametrize("measurement,fit,field", [
    ("hbt_read", {"quantity": "g2_wr"}, "fit.quantity"),
    ("direct", {"quantity": "g2_typo"}, "fit.quantity"),
    ("hbt_write", {"quantity": "g2_ww", "x": "p_w"}, "fit.x"),
])
def test_fit_must_match_measurement_estimates(tmp_path, measurement, fit, field):
    doc = {"measurement": measurement, "sweep": {"variable": "source.p", "values": [0.01, 0.02]},
           "fit": {"model_id": "g2_vs_pw", **fit}}
    with pytest.raises(ConfigError) as err:
        data_module.load_scenario_config(_write_yaml(tmp_path / "fit.yaml", doc))
    assert field in str(err.value)


def test_fit_with_estimated_quantity_is_accepted(make_config):
    config = make_config(measurement="hbt_read", sweep={"variable": "source.p", "values": [0.01, 0.02]},
                         fit={"model_id": "g2_vs_pw", "quantity": "alpha", "x": "p_w"})
    assert config.fit.quantity == "alpha"
    with pytest.raises(ValidationError):
        make_config(measurement="hbt_write", sweep={"variable": "source.p", "values": [0.01]},
                    fit={"model_id": "g2_vs_pw", "quantity": "g2_wr"})


def test_csv_keeps_small_probabilities_precise(tmp_path):
    values = [0.0004, 3.1234567891e-7, 1.0 / 3.0]
    path = data_module.write_csv(pd.DataFrame({"value": values}), tmp_path / "estimates.csv")
    loaded = pd.read_csv(path)["value"].tolist()
    assert loaded == pytest.approx(values, rel=1e-9)


def test_relative_scenario_name_found_in_scenario_dir(tmp_path, monkeypatch, make_config):
    monkeypatch.setattr(settings, "SCENARIO_DIR", tmp_path / "scenarios")
    monkeypatch.chdir(tmp_path)
    config = make_config(source={"p": 0.03})
    data_module.save_scenario_config(config, tmp_path / "scenarios" / "low_p.yaml")
    assert data_module.load_scenario_config("low_p.yaml") == config
    with pytest.raises(ConfigError):
        data_module.load_scenario_config("absent.yaml")
