"""End-to-end tests of the run graph: caching, artifacts, refinement and exit codes."""

import json
import logging
from pathlib import Path

from qgain.graph import nodes
from qgain.graph.workflow import run
from qgain.tools.order_stats import MomentValidator
from qgain.utils.result_formatter import ResultFormatter


class FlakyValidator:
    """Rejects the first ``failures`` tables it sees, then defers to the real checks."""

    def __init__(self, failures):
        self.failures = failures
        self.calls = 0

    def validate(self, table):
        self.calls += 1
        if self.calls <= self.failures:
            return False, "rejected for the test"
        return MomentValidator().validate(table)


class TestCaching:
    def test_moments_run_writes_cache_and_export(self, run_dirs):
        state = run({"command": "moments", "lambda": 5}, run_dirs)
        assert state["exit_code"] == 0
        assert state["success"]
        assert (Path(run_dirs["cache_dir"]) / "lambda5_quadrature_n0_s-1.qgmt").exists()
        out = Path(run_dirs["output_dir"])
        assert (out / "lambda5_quadrature_n0_s-1.csv").exists()
        table = ResultFormatter.read_csv(out / "moments.csv")
        assert list(table.columns) == ["i", "e1", "david_lower", "david_upper"]
        assert len(state["computed"]) == 1

    def test_second_run_reads_the_cache(self, run_dirs):
        run({"command": "moments", "lambda": 5}, run_dirs)
        state = run({"command": "moments", "lambda": 5}, run_dirs)
        assert state["exit_code"] == 0
        assert "computed" not in state
        assert state["refinement"] == 0

    def test_cache_hit_ignores_requested_panels(self, run_dirs, caplog):
        run({"command": "moments", "lambda": 5}, run_dirs)
        caplog.set_level(logging.DEBUG, logger="qgain.graph.nodes")
        state = run({"command": "moments", "lambda": 5, "panels": 4096}, run_dirs)
        assert state["exit_code"] == 0
        assert "computed" not in state
        assert "cache hit lambda5_quadrature_n0_s-1.qgmt served as stored" in caplog.text
        assert "panels=4096 is not part of the cache key" in caplog.text

    def test_product_moments_keyed_by_samples_and_seed(self, run_dirs):
        state = run({"command": "moments", "lambda": 4, "e2": True, "samples": 20_000, "seed": 3}, run_dirs)
        assert state["exit_code"] == 0
        assert (Path(run_dirs["cache_dir"]) / "lambda4_monte_carlo_n20000_s3.qgmt").exists()
        assert state["formatted_result"]["summary"]["has_e2"]

    def test_cache_dir_from_environment(self, run_dirs, tmp_path, monkeypatch):
        monkeypatch.setenv("QGAIN_CACHE_DIR", str(tmp_path / "env_cache"))
        state = run({"command": "moments", "lambda": 3}, {"output_dir": run_dirs["output_dir"]})
        assert state["exit_code"] == 0
        assert (tmp_path / "env_cache" / "lambda3_quadrature_n0_s-1.qgmt").exists()


class TestArtifacts:
    def test_effective_config_is_echoed(self, run_dirs):
        run({"command": "weights", "lambda": 6, "scheme": "cma_log", "seed": 4}, run_dirs)
        out = Path(run_dirs["output_dir"])
        config = json.loads((out / "effective_config.json").read_text())
        assert config["seed"] == 4
        assert config["scheme"] == "cma_log"
        assert (out / "weights.csv").read_text().startswith("# qgain ")

    def test_theory_run(self, run_dirs):
        state = run({"command": "theory", "lambda": 4, "dim": 10, "samples": 20_000}, run_dirs)
        assert state["exit_code"] == 0
        out = Path(run_dirs["output_dir"])
        assert (out / "theory.csv").exists()
        document = json.loads((out / "theory.json").read_text())
        assert document["config"]["command"] == "theory"
        assert len(document["records"]) >= 1

    def test_figure_with_svg(self, run_dirs):
        config = {"command": "figure", "name": "fig1", "lambdas": [2, 4, 8], "svg": True}
        state = run(config, run_dirs)
        assert state["exit_code"] == 0
        out = Path(run_dirs["output_dir"])
        assert len(ResultFormatter.read_csv(out / "fig1.csv")) == 3
        assert (out / "fig1.svg").read_text().lstrip().startswith("<?xml")

    def test_prop4_needs_no_moments(self, run_dirs):
        state = run({"command": "figure", "name": "prop4"}, run_dirs)
        assert state["exit_code"] == 0
        assert state["requests"] == []
        assert (Path(run_dirs["output_dir"]) / "prop4.csv").exists()


class TestFailures:
    def test_invalid_config_exits_2(self, run_dirs):
        state = run({"command": "moments", "lambda": 0}, run_dirs)
        assert state["exit_code"] == 2
        assert not state["success"]
        assert state["error_analysis"]["error_type"] == "CONFIG_INVALID"
        assert state["formatted_result"]["error_type"] == "CONFIG_INVALID"

    def test_corrupt_cache_exits_3(self, run_dirs):
        cache_dir = Path(run_dirs["cache_dir"])
        cache_dir.mkdir(parents=True)
        (cache_dir / "lambda5_quadrature_n0_s-1.qgmt").write_bytes(b"QGMT\x01")
        state = run({"command": "moments", "lambda": 5}, run_dirs)
        assert state["exit_code"] == 3
        assert state["error_analysis"]["error_type"] == "CACHE_CORRUPT"

    def test_weight_error_exits_2(self, run_dirs, tmp_path):
        values = tmp_path / "w.txt"
        values.write_text("0.1\n0.9\n")
        state = run({"command": "weights", "lambda": 3, "scheme": "custom", "values_file": str(values)}, run_dirs)
        assert state["exit_code"] == 2
        assert state["error_analysis"]["error_type"] == "INVALID_WEIGHTS"


class TestRefinement:
    def test_recovers_after_one_rejection(self, run_dirs, monkeypatch):
        stub = FlakyValidator(failures=1)
        monkeypatch.setattr(nodes, "validator", stub)
        state = run({"command": "moments", "lambda": 4, "e2": True, "samples": 20_000}, run_dirs)
        assert state["exit_code"] == 0
        assert state["refinement"] == 1
        assert stub.calls == 2
        # samples doubled on refinement
        assert (Path(run_dirs["cache_dir"]) / "lambda4_monte_carlo_n40000_s1.qgmt").exists()

    def test_gives_up_after_max_attempts(self, run_dirs, monkeypatch):
        stub = FlakyValidator(failures=100)
        monkeypatch.setattr(nodes, "validator", stub)
        state = run({"command": "moments", "lambda": 6}, run_dirs)
        assert state["exit_code"] == 3
        assert state["error_analysis"]["error_type"] == "NUMERIC_ERROR"
        assert state["refinement"] == 1
        assert len(state["previous_errors"]) == 2
        assert not (Path(run_dirs["cache_dir"]) / "lambda6_quadrature_n0_s-1.qgmt").exists()

    def test_max_attempts_from_config(self, run_dirs, monkeypatch):
        stub = FlakyValidator(failures=100)
        monkeypatch.setattr(nodes, "validator", stub)
        state = run({"command": "moments", "lambda": 6, "max_attempts": 3}, run_dirs)
        assert state["exit_code"] == 3
        assert state["refinement"] == 2
        assert stub.calls == 3
