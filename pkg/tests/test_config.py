"""Tests for run config parsing, defaults and validation."""

import json

import pytest

from qgain.config import Command, load_config_file, parse_config
from qgain.errors import ConfigValidationError


def fields_of(error_info):
    return {d["field"] for d in error_info.value.diagnostics}


class TestDefaults:
    def test_global_defaults(self, monkeypatch):
        monkeypatch.delenv("QGAIN_WORKERS", raising=False)
        cfg = parse_config({"command": "weights", "lambda": 4})
        assert cfg.command is Command.WEIGHTS
        assert cfg.seed == 1
        assert cfg.moment_seed == 1
        assert str(cfg.output_dir) == "qgain_out"
        assert cfg.panels == 2048
        assert cfg.max_attempts == 2
        assert cfg.workers == 1
        assert cfg.get("scheme") == "optimal"
        assert cfg.get("lipschitz") == "bounds"

    def test_effective_config_lists_params(self):
        config = parse_config({"command": "moments", "lambda": 7}).to_dict()
        assert config["command"] == "moments"
        assert config["lambda"] == 7
        assert config["method"] == "quadrature"
        assert "mu" not in config

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv("QGAIN_WORKERS", "3")
        assert parse_config({"command": "moments", "lambda": 4}).workers == 3
        assert parse_config({"command": "moments", "lambda": 4, "workers": 2}).workers == 2

    def test_step_budget_from_environment(self, monkeypatch):
        monkeypatch.setenv("QGAIN_STEP_BUDGET", "1e10")
        cfg = parse_config({"command": "figure", "name": "fig5_6"})
        assert cfg.get("step_budget") == 1e10

    def test_fig56_grid(self):
        cfg = parse_config({"command": "figure", "name": "fig5_6"})
        assert cfg.get("lambdas") == [10]
        assert cfg.get("dims") == [10, 100]
        assert len(cfg.get("multipliers")) == 7
        assert len(cfg.experiment_config().cells()) == 112

    def test_full_scale_adds_dimension(self):
        cfg = parse_config({"command": "figure", "name": "fig5_6", "full_scale": True})
        assert cfg.get("dims") == [10, 100, 1000]

    def test_list_values_from_strings(self):
        cfg = parse_config({"command": "figure", "name": "fig1", "lambdas": "4, 10,100"})
        assert cfg.get("lambdas") == [4, 10, 100]


class TestValidation:
    def test_unknown_key(self):
        with pytest.raises(ConfigValidationError, match="unknown key for command 'weights'"):
            parse_config({"command": "weights", "lambda": 4, "colour": "red"})

    def test_unknown_command(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "optimize"})
        assert fields_of(info) == {"command"}

    def test_lambda_below_one(self):
        with pytest.raises(ConfigValidationError, match="must be >= 1"):
            parse_config({"command": "weights", "lambda": 0})

    def test_every_problem_reported(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "theory", "lambda": "many", "spectrum": "torus", "c_m": "fast"})
        assert fields_of(info) == {"lambda", "spectrum", "c_m"}

    def test_required_lambda(self):
        with pytest.raises(ConfigValidationError, match="is required"):
            parse_config({"command": "moments"})

    def test_truncation_needs_mu(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "weights", "lambda": 4, "scheme": "truncation"})
        assert fields_of(info) == {"mu"}

    def test_mu_at_most_lambda(self):
        with pytest.raises(ConfigValidationError, match="must be <= lambda"):
            parse_config({"command": "weights", "lambda": 4, "scheme": "truncation", "mu": 5})

    def test_custom_scheme_needs_values(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "weights", "lambda": 4, "scheme": "custom"})
        assert fields_of(info) == {"values"}

    def test_custom_spectrum_needs_file(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "theory", "lambda": 4, "spectrum": "custom"})
        assert fields_of(info) == {"eigenvalues_file"}

    def test_blom_has_no_product_moments(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "moments", "lambda": 10, "method": "blom", "e2": True})
        assert fields_of(info) == {"e2"}

    def test_simulate_needs_even_run_length(self):
        with pytest.raises(ConfigValidationError, match="must be even"):
            parse_config({"command": "simulate", "lambda": 4, "T": 11})

    def test_fig56_spectra(self):
        with pytest.raises(ConfigValidationError, match="fig5_6 takes"):
            parse_config({"command": "figure", "name": "fig5_6", "spectra": ["linear"]})

    def test_bound_check_limits(self):
        with pytest.raises(ConfigValidationError) as info:
            parse_config({"command": "bound-check", "n": 21, "lambda": 9})
        assert fields_of(info) == {"n", "lambda"}

    def test_max_attempts_range(self):
        with pytest.raises(ConfigValidationError):
            parse_config({"command": "moments", "lambda": 4, "max_attempts": 6})

    def test_too_few_samples(self):
        with pytest.raises(ConfigValidationError, match="samples"):
            parse_config({"command": "moments", "lambda": 4, "samples": 100})


class TestConfigFiles:
    def test_toml_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('command = "weights"\nlambda = 6\n\n[params]\nscheme = "cma_log"\n')
        cfg = parse_config(path)
        assert cfg.get("lambda") == 6
        assert cfg.get("scheme") == "cma_log"
        assert cfg.source == str(path)

    def test_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "moments", "lambda": 3, "method": "blom"}))
        assert parse_config(path).get("method") == "blom"

    def test_problem_carries_line_number(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('command = "weights"\ncolour = "red"\nlambda = 4\n')
        with pytest.raises(ConfigValidationError, match="line 2: unknown key"):
            parse_config(path)

    def test_json_line_number(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{\n  "command": "weights",\n  "lambda": 0\n}\n')
        with pytest.raises(ConfigValidationError, match="line 3: must be >= 1"):
            parse_config(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"command": "weights",')
        with pytest.raises(ConfigValidationError, match="Malformed JSON config"):
            load_config_file(path)

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text("command = \n")
        with pytest.raises(ConfigValidationError, match="Malformed TOML config"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigValidationError, match="Cannot read"):
            parse_config(tmp_path / "absent.toml")

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('command = "weights"\nlambda = 4\nseed = 9\n')
        cfg = parse_config(path, {"lambda": 8, "seed": None})
        assert cfg.get("lambda") == 8
        assert cfg.seed == 9
