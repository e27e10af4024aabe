"""End-to-end tests of the ocl-bench command line."""

import json

import pytest
from typer.testing import CliRunner

from ocl_bench.main import app
from ocl_bench.utils.io import read_csv

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def run_dir(root, strategy="cwr_plus", seed=0):
    return root / strategy / f"seed_{seed}"


class TestGenerate:
    def test_writes_manifest_and_examples(self, config_file, tmp_path):
        result = invoke("generate", config_file, "-o", tmp_path / "scenario", "-q")
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "scenario" / "manifest.json").read_text())
        assert len(manifest["batches"]) == 2
        assert (tmp_path / "scenario" / "examples.csv").exists()

    def test_same_config_same_bytes(self, config_file, tmp_path):
        invoke("generate", config_file, "-o", tmp_path / "a", "-q")
        invoke("generate", config_file, "-o", tmp_path / "b", "-q")
        for name in ("manifest.json", "examples.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_infeasible_nc_split(self, config_file):
        result = invoke("generate", config_file, "--set", '{"scenario": {"n_batches": 9}}')
        assert result.exit_code == 2
        assert "n_batches" in result.output

    def test_missing_config_file(self, tmp_path):
        result = invoke("generate", tmp_path / "nope.yaml")
        assert result.exit_code == 2


class TestConfig:
    def test_print_defaults(self):
        result = invoke("config", "--print-defaults")
        assert result.exit_code == 0
        assert "replay_fraction" in result.output
        assert "lambda" in result.output

    def test_invalid_field_reports_dotted_path(self, make_config):
        path = make_config("bad", strategy={"replay_layer": 5})
        result = invoke("config", path)
        assert result.exit_code == 2
        assert "strategy" in result.output

    def test_unknown_strategy_name(self, make_config):
        path = make_config("bad_name", strategy={"name": "ewc"})
        result = invoke("config", path)
        assert result.exit_code == 2
        assert "strategy.name" in result.output


class TestRun:
    def test_smoke_run_writes_complete_csv(self, config_file, tmp_path):
        out = tmp_path / "runs"
        result = invoke("run", config_file, "-o", out)
        assert result.exit_code == 0, result.output
        rows = read_csv(run_dir(out) / "metrics.csv")
        assert [(r["batch_i"], r["test_batch_j"]) for r in rows] == [("1", "1"), ("2", "1"), ("2", "2")]
        assert all(r["accuracy"] != "" for r in rows)
        record = json.loads((run_dir(out) / "record.json").read_text())
        assert [t["step"] for t in record["resource_trace"]] == [1, 2]
        assert (run_dir(out) / "snapshot.json").exists()

    def test_identical_invocations_identical_metrics(self, config_file, tmp_path):
        for name in ("first", "second"):
            result = invoke("run", config_file, "-o", tmp_path / name, "-s", "ar1*", "-s", "gwr")
            assert result.exit_code == 0, result.output
        for strategy in ("ar1_star", "gwr"):
            a = run_dir(tmp_path / "first", strategy)
            b = run_dir(tmp_path / "second", strategy)
            assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
            assert (a / "snapshot.json").read_bytes() == (b / "snapshot.json").read_bytes()

    def test_workers_do_not_change_results(self, make_config, tmp_path):
        path = make_config("seeds", scenario={"seeds": [0, 1, 2]})
        assert invoke("run", path, "-o", tmp_path / "serial").exit_code == 0
        assert invoke("run", path, "-o", tmp_path / "parallel", "-w", "3").exit_code == 0
        for seed in (0, 1, 2):
            a = run_dir(tmp_path / "serial", seed=seed) / "metrics.csv"
            b = run_dir(tmp_path / "parallel", seed=seed) / "metrics.csv"
            assert a.read_bytes() == b.read_bytes()

    def test_replay_and_no_replay_agree_on_the_first_batch(self, config_file, tmp_path):
        out = tmp_path / "gdm"
        result = invoke("run", config_file, "-o", out, "-s", "gdm", "-s", "gdm-noreplay")
        assert result.exit_code == 0, result.output
        with_replay = read_csv(run_dir(out, "gdm") / "metrics.csv")
        without = read_csv(run_dir(out, "gdm_noreplay") / "metrics.csv")
        assert with_replay[0]["accuracy"] == without[0]["accuracy"]

    def test_prebuilt_scenario(self, config_file, tmp_path):
        invoke("generate", config_file, "-o", tmp_path / "scenario", "-q")
        direct = invoke("run", config_file, "-o", tmp_path / "direct")
        loaded = invoke("run", config_file, "--scenario", tmp_path / "scenario", "-o", tmp_path / "loaded")
        assert direct.exit_code == loaded.exit_code == 0
        a = run_dir(tmp_path / "direct") / "metrics.csv"
        b = run_dir(tmp_path / "loaded") / "metrics.csv"
        assert a.read_bytes() == b.read_bytes()

    def test_invalid_strategy_choice(self, config_file):
        result = invoke("run", config_file, "-s", "icarl")
        assert result.exit_code == 2
        assert "Invalid Parameter Value" in result.output

    def test_diverging_run_exits_with_numeric_code(self, config_file, tmp_path):
        # 1e400 parses to inf, so the second SGD step sees non-finite gradients.
        overrides = '{"strategy": {"lr": 1e400}}'
        result = invoke("run", config_file, "-o", tmp_path / "runs", "-s", "naive", "--set", overrides)
        assert result.exit_code == 3
        assert "Numeric Failure" in result.output

    def test_output_root_from_environment(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv("OCL_BENCH_OUTPUT_ROOT", str(tmp_path / "env"))
        result = invoke("run", config_file)
        assert result.exit_code == 0, result.output
        assert (run_dir(tmp_path / "env" / "smoke" / "runs") / "metrics.csv").exists()


class TestReport:
    @pytest.fixture
    def runs(self, config_file, tmp_path):
        out = tmp_path / "runs"
        result = invoke("run", config_file, "-o", out, "-s", "naive", "-s", "cwr+")
        assert result.exit_code == 0, result.output
        return out

    def test_single_run_has_zero_std(self, runs, tmp_path):
        result = invoke("report", runs, "-o", tmp_path / "report")
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "report" / "summary.json").read_text())
        assert set(summary["strategies"]) == {"naive", "cwr+"}
        for entry in summary["strategies"].values():
            assert entry["runs"] == 1
            assert entry["average_accuracy"]["std"] == [0.0, 0.0]

    def test_two_strategies_one_csv(self, runs, tmp_path):
        invoke("report", runs, "-o", tmp_path / "report", "--no-table")
        rows = read_csv(tmp_path / "report" / "series.csv")
        assert {r["strategy"] for r in rows} == {"naive", "cwr+"}
        assert {r["metric"] for r in rows} == {"average_accuracy", "first_task_retention"}

    def test_report_is_idempotent(self, runs, tmp_path):
        invoke("report", runs, "-o", tmp_path / "a")
        invoke("report", runs, "-o", tmp_path / "b")
        for name in ("summary.json", "series.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_mixed_scenarios_are_refused(self, runs, make_config, tmp_path):
        other = make_config("other", scenario={"seed": 3})
        invoke("run", other, "-o", tmp_path / "other")
        result = invoke("report", runs, tmp_path / "other", "-o", tmp_path / "report")
        assert result.exit_code == 2
        assert "Mixed Scenarios" in result.output
        assert not (tmp_path / "report" / "summary.json").exists()

    def test_no_records(self, tmp_path):
        (tmp_path / "empty").mkdir()
        result = invoke("report", tmp_path / "empty")
        assert result.exit_code == 2


class TestMisc:
    def test_selftest_passes(self):
        result = invoke("selftest")
        assert result.exit_code == 0, result.output
        assert "bmu-scan" in result.output

    def test_selftest_json(self):
        result = invoke("selftest", "--json")
        assert result.exit_code == 0
        assert '"gradient-check"' in result.output

    def test_version(self):
        result = invoke("version")
        assert result.exit_code == 0
        assert "ocl-bench version" in result.output
