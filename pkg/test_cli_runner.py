import json
import pathlib

import pandas as pd
import pytest

import array_builder as ab
import cli_runner
import clt_simulator as sim
import stable_core


def run(tmp_path, *args):
    return cli_runner.main([*args, "--output-dir", str(tmp_path)])


def test_defaults_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[options]\nalpha = 1.5\nn_grid = 1024, 256\nreplicas = 50\n\n[tower]\nk_max = 2\n")
    config = cli_runner.load_config(cfg, {"options": {"replicas": "70"}})
    assert config.alpha == 1.5 and config.n_grid == (256, 1024), "file values are read and n_grid sorted"
    assert config.replicas == 70, "flags override the file"
    assert config.variant is ab.Variant.Z and config.mode is sim.Mode.COUPLED, "built-in defaults fill the rest"
    assert config.tower.k_max == 2 and config.bounds.replicas == 1000
    assert config.target_sigma is None


def test_shipped_config_matches_defaults():
    shipped = cli_runner.load_config(pathlib.Path(cli_runner.__file__).parent / cli_runner.CONFIG_FILE)
    assert shipped == cli_runner.load_config(None)


def test_config_errors_name_the_key(tmp_path):
    with pytest.raises(cli_runner.ConfigError, match="variant"):
        cli_runner.load_config(None, {"options": {"variant": "W"}})
    with pytest.raises(cli_runner.ConfigError, match="replicas"):
        cli_runner.load_config(None, {"options": {"replicas": "0"}})
    with pytest.raises(cli_runner.ConfigError, match="alpha"):
        cli_runner.load_config(None, {"options": {"alpha": "2.5"}})
    with pytest.raises(cli_runner.ConfigError, match="logging_level"):
        cli_runner.load_config(None, {"options": {"logging_level": "LOUD"}})
    broken = tmp_path / "broken.cfg"
    broken.write_text("[options]\nthis line has no separator\n")
    with pytest.raises(cli_runner.ConfigError, match="line 2"):
        cli_runner.load_config(broken)
    with pytest.raises(cli_runner.ConfigError, match="not found"):
        cli_runner.load_config(tmp_path / "missing.cfg")


def test_to_dict_leaves_out_workers_and_output_dir():
    data = cli_runner.load_config(None, {"options": {"workers": "4"}}).to_dict()
    assert "workers" not in data and "output_dir" not in data
    assert data["variant"] == "Z" and data["n_grid"] == [256, 4096]
    json.dumps(data)


def test_zero_replicas_is_a_config_error(tmp_path):
    assert run(tmp_path, "simulate", "--replicas", "0") == cli_runner.EXIT_CONSTRUCTION


def test_budget_refusal(tmp_path, capsys):
    code = run(tmp_path, "simulate", "--n", "256", "--replicas", "10", "--budget-draws", "1000")
    assert code == cli_runner.EXIT_BUDGET
    assert "draws" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists(), "nothing is written before the budget check"


def test_degenerate_alphabet(tmp_path):
    assert run(tmp_path, "tower", "--alphabet-cap", "1") == cli_runner.EXIT_CONSTRUCTION


def test_simulate_is_byte_identical_across_workers(tmp_path):
    args = ["simulate", "--alpha", "1.0", "--n", "64", "256", "--replicas", "20", "--seed", "42"]
    one, many = tmp_path / "one", tmp_path / "many"
    assert cli_runner.main([*args, "--workers", "1", "--output-dir", str(one)]) == cli_runner.EXIT_PASS
    assert cli_runner.main([*args, "--workers", "3", "--output-dir", str(many)]) == cli_runner.EXIT_PASS
    for name in ("report.json", "samples_64.csv", "samples_256.csv"):
        assert (one / name).read_bytes() == (many / name).read_bytes(), f"{name} depends on worker count"

    report = json.loads((one / "report.json").read_text())
    assert [r["n"] for r in report["runs"]] == [64, 256]
    first = report["runs"][0]
    assert first["invariant_violations"] == {"total_identity": 0, "zy_gap": 0, "quantizer": 0}
    assert first["limit_sigma_alpha"] == pytest.approx(1.386294, abs=1e-6)
    assert first["sigma_n_alpha"] == pytest.approx(sim.theoretical_sigma_n(1.0, 64))
    assert report["tail_certificate"]["alpha"] == 1.0
    assert report["variance_certificate"]["c"] >= report["variance_certificate"]["asymptotic_c"] > 0
    samples = pd.read_csv(one / "samples_64.csv")
    assert list(samples.columns) == ["replica", "total", "part_S", "part_M", "part_L"] and len(samples) == 20


def test_gof_reads_simulate_output(tmp_path):
    common = ["--n", "64", "--replicas", "30", "--seed", "3"]
    assert run(tmp_path, "simulate", *common) == cli_runner.EXIT_PASS
    code = run(tmp_path, "gof", *common)
    assert code in (cli_runner.EXIT_PASS, cli_runner.EXIT_VERDICT_FAILED)
    gof = json.loads((tmp_path / "gof.json").read_text())
    assert gof["reports"]["64"]["sample_count"] == 30
    assert (tmp_path / "qq_64.csv").exists() and (tmp_path / "ecf_64.csv").exists()


def test_gof_without_samples(tmp_path):
    assert run(tmp_path, "gof", "--n", "64") == cli_runner.EXIT_CONSTRUCTION


def test_default_tower_run_passes(tmp_path):
    assert run(tmp_path, "tower") == cli_runner.EXIT_PASS
    tower = json.loads((tmp_path / "tower.json").read_text())
    assert tower["pass"] is True and tower["orbit_oracle_ks"] <= cli_runner.TOWER_KS_LIMIT
    assert tower["system"]["heights"] == [1, 4, 13, 40, 121, 364, 1093, 3280]
    assert tower["stages"] == {"1": 2, "2": 3, "3": 5}
    assert tower["laws"][0]["collapsed"] is True, "Z_1 is 0 at alpha=1"
    assert len(pd.read_csv(tmp_path / "orbits.csv")) == 1000


def test_default_bounds_run_passes(tmp_path):
    assert run(tmp_path, "bounds") == cli_runner.EXIT_PASS
    bounds = json.loads((tmp_path / "bounds.json").read_text())
    names = {v["name"] for v in bounds["verdicts"]}
    assert {"tail_bound", "cauchy_tail", "variance_bound", "split_identity", "quantizer", "v_under_trend"} <= names
    assert bounds["pass"] is True and all(v["pass"] for v in bounds["verdicts"])


def test_quadrature_failure_is_a_construction_error(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise stable_core.QuadratureError("tail integral did not converge", 1.0)

    monkeypatch.setattr(stable_core, "calibrate_tail_constant", fail)
    assert run(tmp_path, "simulate", "--n", "64", "--replicas", "5") == cli_runner.EXIT_CONSTRUCTION


def test_progressbar_yields_everything(capsys):
    assert list(cli_runner.progressbar([1, 2, 3], prefix="x ")) == [1, 2, 3]
    assert "3/3" in capsys.readouterr().out
