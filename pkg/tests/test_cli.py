import json
import subprocess
import sys

import pytest

from predmob import harness
from predmob.cli import main


def run_cli(args):
    return main([str(a) for a in args])


@pytest.fixture
def sim_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert run_cli(["simulate", "--scenario", "1", "--n", "300",
                    "--seed", "4", "--out", path]) == 0
    return path


class TestBasics:
    def test_scenarios_list(self, capsys):
        assert run_cli(["scenarios", "list"]) == 0
        out = capsys.readouterr().out
        assert "C.1" in out and "p=10" in out

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli(["fit"])  # missing required arguments
        assert exc.value.code == 1

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = run_cli(["fit", "--data", tmp_path / "absent.csv",
                        "--out", tmp_path / "f.json"])
        assert code == 2

    def test_bad_scenario_exit_code(self, tmp_path, capsys):
        code = run_cli(["simulate", "--scenario", "zzz",
                        "--out", tmp_path / "d.csv"])
        assert code == 2

    def test_experiment_failure_exit_code(self, tmp_path, monkeypatch, capsys):
        def boom(config):
            raise harness.ExperimentFailureError("too many failures")

        monkeypatch.setattr(harness, "run_identification", boom)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scenario": "C.1", "runs": 1,
                                   "adjustments": ["covariate"]}))
        code = run_cli(["experiment", "identify", "--config", cfg,
                        "--out-dir", tmp_path / "res"])
        assert code == 3

    def test_subprocess_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "predmob.cli", "scenarios", "list"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "C.1" in proc.stdout


class TestPipeline:
    def test_fit_importance_pdp_chain(self, sim_csv, tmp_path, capsys):
        forest = tmp_path / "forest.json"
        assert run_cli(["fit", "--data", sim_csv, "--adjust", "covariate",
                        "--trees", "10", "--seed", "1", "--out", forest]) == 0
        imp = tmp_path / "imp.csv"
        assert run_cli(["importance", "--forest", forest, "--data", sim_csv,
                        "--out", imp]) == 0
        lines = imp.read_text().splitlines()
        assert lines[0] == "variable,metric,value"
        assert len(lines) == 1 + 2 * 2  # two variables, two metrics
        pdp = tmp_path / "pdp.csv"
        assert run_cli(["pdp", "--forest", forest, "--data", sim_csv,
                        "--var", "X2", "--out", pdp]) == 0
        assert pdp.read_text().splitlines()[0] == "variable,metric,value,mean_ite"

    def test_weights_and_balance(self, sim_csv, tmp_path, capsys):
        w = tmp_path / "w.csv"
        assert run_cli(["weights", "--data", sim_csv, "--method", "iptw",
                        "--out", w]) == 0
        out = tmp_path / "balance.json"
        assert run_cli(["balance", "--data", sim_csv, "--weights", w,
                        "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert set(doc["variable"]) == {"X1", "X2"}

    def test_experiment_and_report(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "scenario": "1", "runs": 2, "n": 300,
            "adjustments": ["none"], "forest": {"n_trees": 5}, "seed": 3,
        }))
        res = tmp_path / "res"
        assert run_cli(["experiment", "accuracy", "--config", cfg,
                        "--out-dir", res]) == 0
        out = tmp_path / "summary.json"
        assert run_cli(["report", "--dir", res, "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert "accuracy" in doc and "none" in doc["accuracy"]
