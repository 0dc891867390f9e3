import json

import numpy as np
import pytest

from conftest import make_scalar_arch
from layersynth.cli import main
from layersynth.systems import serialize


@pytest.fixture()
def scalar_config(tmp_path):
    arch = make_scalar_arch(trials=6, horizon=10)
    path = tmp_path / "config.json"
    path.write_text(serialize(arch), encoding="utf-8")
    return path


@pytest.fixture()
def scalar_design(tmp_path, scalar_config):
    out = tmp_path / "design.json"
    code = main(["synth", "--config", str(scalar_config), "--out", str(out)])
    assert code == 0
    return out


class TestSynth:
    def test_writes_design_and_prints_summary(self, tmp_path, scalar_config, capsys):
        out = tmp_path / "d.json"
        code = main(["synth", "--config", str(scalar_config), "--out", str(out)])
        assert code == 0
        assert out.exists()
        printed = capsys.readouterr().out
        for token in ("lambda=", "rho=", "alpha=", "epsilon="):
            assert token in printed
        doc = json.loads(out.read_text())
        for key in ("P", "Q", "R", "K", "M", "lambda", "rho", "alpha",
                    "trace_S", "epsilon", "L1", "L2", "Sigma_e1", "Sigma_e2", "meta"):
            assert key in doc

    def test_invalid_config_exits_2(self, tmp_path):
        arch = make_scalar_arch()
        doc = json.loads(serialize(arch))
        doc["upper"]["Sigma_w"] = [[-1.0]]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["synth", "--config", str(bad), "--out", str(tmp_path / "d.json")])
        assert code == 2

    def test_missing_file_exits_2(self, tmp_path):
        code = main(
            ["synth", "--config", str(tmp_path / "absent.json"),
             "--out", str(tmp_path / "d.json")]
        )
        assert code == 2

    def test_incompatible_layers_exit_3(self, tmp_path):
        arch = make_scalar_arch()
        doc = json.loads(serialize(arch))
        doc["lower"]["C"] = [[0.0]]  # no P can satisfy C2 P = C1
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d.json")])
        assert code == 3

    def test_lambda_grid_override(self, tmp_path, scalar_config):
        out = tmp_path / "d.json"
        code = main(
            ["synth", "--config", str(scalar_config), "--out", str(out),
             "--lambda-grid", "0.3,0.5"]
        )
        assert code == 0
        meta = json.loads(out.read_text())["meta"]
        assert meta["lambda_grid_used"] == [0.3, 0.5]


class TestSim:
    def test_runs_and_writes_csv(self, tmp_path, scalar_config, scalar_design):
        out = tmp_path / "summary.csv"
        code = main(
            ["sim", "--config", str(scalar_config), "--design", str(scalar_design),
             "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t,mean_dist,std_dist,ci95,mean_V,epsilon"
        assert len(lines) == 1 + 11

    def test_traces_dir(self, tmp_path, scalar_config, scalar_design):
        traces = tmp_path / "traces"
        code = main(
            ["sim", "--config", str(scalar_config), "--design", str(scalar_design),
             "--out", str(tmp_path / "s.csv"), "--traces", str(traces)]
        )
        assert code == 0
        assert (traces / "trials.csv").exists()

    def test_seed_override_changes_values(self, tmp_path, scalar_config, scalar_design):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["sim", "--config", str(scalar_config), "--design",
                     str(scalar_design), "--out", str(out1), "--seed", "1"]) == 0
        assert main(["sim", "--config", str(scalar_config), "--design",
                     str(scalar_design), "--out", str(out2), "--seed", "2"]) == 0
        assert out1.read_text() != out2.read_text()

    def test_mismatched_design_exits_2(self, tmp_path, scalar_config, scalar_design):
        doc = json.loads(scalar_design.read_text())
        doc["P"] = [[1.0, 0.0], [0.0, 1.0]]
        bad = tmp_path / "bad_design.json"
        bad.write_text(json.dumps(doc), encoding="utf-8")
        code = main(
            ["sim", "--config", str(scalar_config), "--design", str(bad),
             "--out", str(tmp_path / "s.csv")]
        )
        assert code == 2


class TestCheck:
    def test_fresh_design_passes(self, scalar_config, scalar_design, capsys):
        code = main(["check", "--config", str(scalar_config), "--design", str(scalar_design)])
        assert code == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "PASS" in out

    def test_perturbed_gain_fails(self, tmp_path, scalar_config, scalar_design):
        doc = json.loads(scalar_design.read_text())
        doc["K"][0][0] += 1.0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["check", "--config", str(scalar_config), "--design", str(bad)])
        assert code == 6

    def test_lambda_out_of_range_fails(self, tmp_path, scalar_config, scalar_design):
        doc = json.loads(scalar_design.read_text())
        doc["lambda"] = 1.5
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["check", "--config", str(scalar_config), "--design", str(bad)])
        assert code == 6


class TestCase:
    def test_unknown_name_exits_2(self, tmp_path):
        code = main(["case", "quadrotor", "--out", str(tmp_path)])
        assert code == 2

    def test_uav_reduced_run(self, tmp_path, capsys):
        # a thinned lambda grid and few trials keep this a fast smoke test;
        # the full-budget runs live in the acceptance suite
        code = main(
            ["case", "uav", "--out", str(tmp_path), "--trials", "5",
             "--horizon", "20", "--lambda-grid", "0.05,0.0731707"]
        )
        assert code == 0
        for name in ("uav_design.json", "uav_summary.csv",
                      "uav_trials.csv", "uav_plot.csv"):
            assert (tmp_path / name).exists()
        plot = (tmp_path / "uav_plot.csv").read_text().strip().split("\n")
        assert plot[0] == "t,mean_dist,epsilon"
        assert len(plot) == 1 + 21
