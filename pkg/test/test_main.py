# test/test_main.py
import json

import pandas as pd
import pytest
import yaml

from app import data_module
from app.main import EXIT_CONFIG, EXIT_OK, EXIT_STATISTICS, create_cli_parser, main


@pytest.fixture
def scenario_file(tmp_path, make_config):
    def factory(name="scenario.yaml", **updates):
        config = make_config(**{"n_trials": 3000, "source": {"p": 0.1, "eta_w": 0.5, "eta_r": 0.5}, **updates})
        return data_module.save_scenario_config(config, tmp_path / name)
    return factory


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        create_cli_parser().parse_args([])


def test_validate_config_prints_hash(scenario_file, capsys):
    assert main(["validate-config", str(scenario_file())]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is True
    assert len(report["config_hash"]) == 64


def test_validate_config_rejects_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"source": {"p": 0.1, "bogus": 2}}), encoding="utf-8")
    assert main(["validate-config", str(bad)]) == EXIT_CONFIG
    assert "source.bogus" in capsys.readouterr().err


def test_validate_config_rejects_gate_outside_trial(scenario_file):
    path = scenario_file(timing={"trial_period": 0.5})
    assert main(["validate-config", str(path)]) == EXIT_CONFIG


def test_simulate_writes_manifest(scenario_file, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = main(["simulate", str(scenario_file()), "--out-dir", str(out_dir), "--seed", "5", "--trials", "2000"])
    assert code == EXIT_OK
    assert capsys.readouterr().out.strip() == str(out_dir / "manifest.json")
    manifest = data_module.read_manifest(out_dir / "manifest.json")
    assert manifest.seed == 5
    assert manifest.n_trials == 2000


def test_simulate_strict_reports_insufficient_statistics(tmp_path, make_config):
    config = make_config(n_trials=2000, source={"eta_r": 0.0})
    path = data_module.save_scenario_config(config, tmp_path / "dark.yaml")
    assert main(["simulate", str(path), "--strict", "--out-dir", str(tmp_path / "o")]) == EXIT_STATISTICS


def test_invalid_thread_count(scenario_file, tmp_path):
    assert main(["simulate", str(scenario_file()), "--threads", "0", "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_analyze_existing_stream(scenario_file, tmp_path):
    config_path = scenario_file()
    assert main(["simulate", str(config_path), "--out-dir", str(tmp_path / "run")]) == EXIT_OK
    out = tmp_path / "estimates.csv"
    assert main(["analyze", str(config_path), str(tmp_path / "run" / "stream_0.csv"), "--output", str(out)]) == EXIT_OK
    assert list(pd.read_csv(out)["quantity"]) == ["p_w", "p_r", "g2_wr", "p_r_given_w"]


def test_fit_command_with_profile(tmp_path, capsys):
    problem = tmp_path / "fit.yaml"
    problem.write_text(yaml.safe_dump({"model_id": "gaussian_line", "fixed": ["sigma", "center"]}), encoding="utf-8")
    pd.DataFrame({"x": [-1.0, 0.0, 1.0, 2.0], "y": [0.62, 1.01, 0.59, 0.14],
                  "sigma_y": [0.05, 0.05, 0.05, 0.05]}).to_csv(tmp_path / "data.csv", index=False)
    code = main(["fit", str(problem), "--data", str(tmp_path / "data.csv"), "--profile",
                 "--out-dir", str(tmp_path / "fit")])
    assert code == EXIT_OK
    assert "amplitude =" in capsys.readouterr().out
    assert (tmp_path / "fit" / "fit_gaussian_line.yaml").is_file()
    intervals = data_module.read_json(tmp_path / "fit" / "fit_gaussian_line_profile.json")
    assert [iv["param"] for iv in intervals] == ["amplitude"]


def test_reproduce_list_and_unknown(tmp_path, capsys):
    assert main(["reproduce", "--list"]) == EXIT_OK
    assert "fig5" in capsys.readouterr().out
    assert main(["reproduce"]) == EXIT_CONFIG
    assert main(["reproduce", "fig9", "--out-dir", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "Available presets" in capsys.readouterr().err


def test_reproduce_saturation(tmp_path, capsys):
    assert main(["reproduce", "fig5", "--out-dir", str(tmp_path / "fig5")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == str(tmp_path / "fig5" / "fig5.csv")
    assert (tmp_path / "fig5" / "manifest.json").is_file()


def _hbt_fit_scenario(path, quantity="g2_wr", x="sweep"):
    doc = {"scenario_id": "hbt", "measurement": "hbt_read", "n_trials": 2000,
           "sweep": {"variable": "source.p", "values": [0.01, 0.02]},
           "fit": {"model_id": "g2_vs_pw", "quantity": quantity, "x": x}}
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


def test_validate_config_rejects_fit_quantity_of_other_measurement(tmp_path, capsys):
    path = _hbt_fit_scenario(tmp_path / "hbt.yaml")
    assert main(["validate-config", str(path)]) == EXIT_CONFIG
    assert "fit.quantity" in capsys.readouterr().err


def test_simulate_rejects_fit_quantity_before_writing_streams(tmp_path):
    path = _hbt_fit_scenario(tmp_path / "hbt.yaml")
    out_dir = tmp_path / "out"
    assert main(["simulate", str(path), "--out-dir", str(out_dir)]) == EXIT_CONFIG
    assert not out_dir.exists()
