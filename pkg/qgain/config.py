"""
Run configuration: per-command schema, TOML/JSON parsing and validation.

A RunConfig is fully validated, with defaults applied, before any computation
starts. Unknown keys are rejected; every problem is reported with its field and,
for config files, the line it sits on.
"""

import json
import logging
import os
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

from .errors import ConfigValidationError
from .tools.experiments import (
    DEFAULT_STEP_BUDGET,
    FIG56_SPECTRA,
    ExperimentConfig,
    FigureKind,
    default_multipliers,
)
from .tools.moment_cache import resolve_cache_dir

logger = logging.getLogger(__name__)


class Command(str, Enum):
    MOMENTS = "moments"
    WEIGHTS = "weights"
    THEORY = "theory"
    SIMULATE = "simulate"
    FIGURE = "figure"
    BOUND_CHECK = "bound-check"


class FieldSpec(NamedTuple):
    kind: str                      # int, float, bool, str, list[int], list[float], list[str]
    default: Any = None
    required: bool = False
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    choices: Optional[Tuple[str, ...]] = None


SPECTRA = ("sphere", "discus", "ellipsoid", "cigar", "linear", "custom")
SCHEMES = ("optimal", "optimal_positive", "cma_log", "truncation", "custom")
FIGURES = ("fig1", "fig2", "fig3", "fig5_6", "prop4")

_MODEL_FIELDS = {
    "spectrum": FieldSpec("str", "sphere", choices=SPECTRA),
    "dim": FieldSpec("int", 10, minimum=1),
    "alpha": FieldSpec("float", 1e6, minimum=0.0),
    "eigenvalues_file": FieldSpec("str"),
    "rotate": FieldSpec("bool", False),
    "rotation_seed": FieldSpec("int", 0, minimum=0),
}
_WEIGHT_FIELDS = {
    "lambda": FieldSpec("int", required=True, minimum=1),
    "scheme": FieldSpec("str", "optimal", choices=SCHEMES),
    "mu": FieldSpec("int", minimum=1),
    "values": FieldSpec("list[float]"),
    "values_file": FieldSpec("str"),
}

GLOBAL_FIELDS: Dict[str, FieldSpec] = {
    "command": FieldSpec("str", required=True, choices=tuple(c.value for c in Command)),
    "seed": FieldSpec("int", 1, minimum=0),
    "moment_seed": FieldSpec("int", 1, minimum=0),
    "samples": FieldSpec("int", minimum=10_000),
    "panels": FieldSpec("int", 2048, minimum=8),
    "output_dir": FieldSpec("str", "qgain_out"),
    "cache_dir": FieldSpec("str"),
    "workers": FieldSpec("int", minimum=1),
    "svg": FieldSpec("bool", False),
    "max_attempts": FieldSpec("int", 2, minimum=1, maximum=5),
}

COMMAND_FIELDS: Dict[Command, Dict[str, FieldSpec]] = {
    Command.MOMENTS: {
        "lambda": FieldSpec("int", required=True, minimum=1),
        "method": FieldSpec("str", "quadrature", choices=("quadrature", "monte_carlo", "blom")),
        "e2": FieldSpec("bool", False),
    },
    Command.WEIGHTS: {
        **_WEIGHT_FIELDS,
        "lipschitz": FieldSpec("str", "bounds", choices=("bounds", "grid", "none")),
        "grid_points": FieldSpec("int", 2000, minimum=1000),
    },
    Command.THEORY: {
        **_WEIGHT_FIELDS,
        **_MODEL_FIELDS,
        "c_m": FieldSpec("float", 1.0, minimum=0.0),
        "sigma_bar": FieldSpec("float", minimum=0.0),
        "e_Ae": FieldSpec("float", minimum=0.0, maximum=1.0),
        "e2": FieldSpec("bool"),
        "optimal_weights": FieldSpec("bool", False),
        "lambda_exact": FieldSpec("int", 200, minimum=2),
        "lipschitz": FieldSpec("str", "bounds", choices=("bounds", "grid")),
        "grid_points": FieldSpec("int", 2000, minimum=1000),
        "bound_form": FieldSpec("str", "theorem", choices=("theorem", "lemma")),
    },
    Command.SIMULATE: {
        **_WEIGHT_FIELDS,
        **_MODEL_FIELDS,
        "c_m": FieldSpec("float", 1.0, minimum=0.0),
        "sigma_bar": FieldSpec("float", minimum=0.0),
        "multiplier": FieldSpec("float", 1.0, minimum=0.0),
        "mode": FieldSpec("str", "trajectory", choices=("trajectory", "one_step")),
        "T": FieldSpec("int", 1000, minimum=2),
        "record_every": FieldSpec("int", 1, minimum=1),
        "rescale": FieldSpec("bool", True),
        "reps": FieldSpec("int", 10_000, minimum=1000),
        "lambda_exact": FieldSpec("int", 200, minimum=2),
    },
    Command.FIGURE: {
        "name": FieldSpec("str", required=True, choices=FIGURES),
        "lmax": FieldSpec("int", 10_000, minimum=2),
        "lambdas": FieldSpec("list[int]"),
        "dims": FieldSpec("list[int]"),
        "spectra": FieldSpec("list[str]"),
        "alpha": FieldSpec("float", 1e6, minimum=0.0),
        "schemes": FieldSpec("list[str]"),
        "c_m_values": FieldSpec("list[float]"),
        "multipliers": FieldSpec("list[float]"),
        "thetas": FieldSpec("list[float]"),
        "T": FieldSpec("int", 10_000, minimum=2),
        "replicates": FieldSpec("int", 11, minimum=1),
        "full_scale": FieldSpec("bool", False),
        "theory_e_Ae": FieldSpec("str", "worst_case", choices=("worst_case", "live")),
        "step_budget": FieldSpec("float", minimum=0.0),
        "lambda_exact": FieldSpec("int", 200, minimum=2),
        "lambda_rule": FieldSpec("str", "power:0.2:8"),
        "weights_family": FieldSpec("str", "truncation:4"),
        "epsilon": FieldSpec("float", 0.01, minimum=0.0, maximum=1.0),
        "spectrum": FieldSpec("str", "sphere", choices=SPECTRA),
    },
    Command.BOUND_CHECK: {
        "n": FieldSpec("int", 10, minimum=1, maximum=20),
        "lambda": FieldSpec("int", 4, minimum=2, maximum=8),
        "scheme": FieldSpec("str", "optimal", choices=("optimal", "optimal_positive", "cma_log")),
        "spectrum": FieldSpec("str", "sphere", choices=SPECTRA[:-1]),
        "alpha": FieldSpec("float", 100.0, minimum=0.0),
        "c_m_values": FieldSpec("list[float]", [1.0, 10.0, 100.0]),
        "multipliers": FieldSpec("list[float]", [0.25, 0.5, 1.0, 2.0]),
        "reps": FieldSpec("int", 100_000, minimum=100_000),
        "grid_points": FieldSpec("int", 2000, minimum=1000),
        "strict": FieldSpec("bool", False),
    },
}

_FIGURE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "fig2": {"dims": [10, 100, 1000, 10_000], "schemes": ["optimal"]},
    "fig3": {"lambdas": [2, 10, 50], "schemes": ["optimal", "optimal_positive"]},
    "fig5_6": {
        "lambdas": [10],
        "dims": [10, 100],
        "spectra": list(FIG56_SPECTRA),
        "schemes": ["optimal"],
        "c_m_values": [1.0, 10.0],
    },
    "prop4": {"dims": [100, 1000, 10_000, 100_000]},
}


@dataclass(frozen=True)
class RunConfig:
    """A validated command with every default filled in."""

    command: Command
    params: Dict[str, Any]
    seed: int
    output_dir: Path
    cache_dir: Path
    workers: int
    svg: bool = False
    moment_seed: int = 1
    samples: Optional[int] = None
    panels: int = 2048
    max_attempts: int = 2
    source: Optional[str] = None

    def get(self, name: str, default: Any = None) -> Any:
        value = self.params.get(name)
        return default if value is None else value

    def to_dict(self) -> Dict[str, Any]:
        """The effective config, as echoed next to every artifact."""
        return {
            "command": self.command.value,
            "seed": self.seed,
            "moment_seed": self.moment_seed,
            "samples": self.samples,
            "panels": self.panels,
            "workers": self.workers,
            "svg": self.svg,
            "output_dir": str(self.output_dir),
            "cache_dir": str(self.cache_dir),
            **{k: v for k, v in sorted(self.params.items()) if v is not None},
        }

    def model_spec(self) -> Dict[str, Any]:
        spec = {
            "type": self.get("spectrum", "sphere"),
            "dim": self.get("dim", 10),
            "alpha": self.get("alpha", 1e6),
            "rotate": self.get("rotate", False),
            "rotation_seed": self.get("rotation_seed", 0),
        }
        if self.get("eigenvalues_file"):
            spec["eigenvalues_file"] = self.get("eigenvalues_file")
        return spec

    def experiment_config(self) -> ExperimentConfig:
        """Expand a fig5_6 figure config into its full cell grid."""
        models = [
            {"type": kind, "dim": int(n), "alpha": self.get("alpha", 1e6)}
            for kind in self.get("spectra")
            for n in self.get("dims")
        ]
        return ExperimentConfig(
            figure=FigureKind.FIG5_6,
            models=models,
            lambdas=list(self.get("lambdas")),
            schemes=list(self.get("schemes")),
            c_m_values=list(self.get("c_m_values")),
            sigma_bar_multipliers=list(self.get("multipliers", default_multipliers())),
            T=self.get("T"),
            replicates=self.get("replicates"),
            seed=self.seed,
            step_budget=self.get("step_budget", DEFAULT_STEP_BUDGET),
            full_scale=self.get("full_scale", False),
            theory_e_Ae=self.get("theory_e_Ae", "worst_case"),
            workers=self.workers,
        )


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    pattern = re.compile(rf'^\s*"?{re.escape(key)}"?\s*[=:]', re.MULTILINE)
    match = pattern.search(text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def load_config_file(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    """
    Read a TOML or JSON config file.

    Returns:
        (mapping, raw text)

    Raises:
        ConfigValidationError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigValidationError("Cannot read config file", [{"field": str(path), "problem": str(e)}]) from e

    as_json = path.suffix.lower() == ".json" or (path.suffix.lower() != ".toml" and text.lstrip().startswith("{"))
    try:
        data = json.loads(text) if as_json else tomllib.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(
            "Malformed JSON config", [{"field": str(path), "problem": f"line {e.lineno}: {e.msg}"}]
        ) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigValidationError("Malformed TOML config", [{"field": str(path), "problem": str(e)}]) from e

    if not isinstance(data, dict):
        raise ConfigValidationError("Config must be a table/object", [{"field": str(path), "problem": "top level is not a mapping"}])
    # [params] tables are flattened into the top level
    params = data.pop("params", {})
    if isinstance(params, dict):
        data.update(params)
    return data, text


def _coerce(name: str, value: Any, spec: FieldSpec) -> Any:
    """Return the typed value or raise ValueError with the problem."""
    kind = spec.kind
    if kind.startswith("list["):
        if isinstance(value, str):
            value = [v for v in re.split(r"[,\s]+", value.strip()) if v]
        if not isinstance(value, (list, tuple)) or not value:
            raise ValueError("must be a nonempty list")
        inner = FieldSpec(kind[5:-1], minimum=spec.minimum, maximum=spec.maximum, choices=spec.choices)
        return [_coerce(name, v, inner) for v in value]
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ValueError("must be true or false")
    if kind == "int":
        if isinstance(value, bool):
            raise ValueError("must be an integer")
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                pass
        if not isinstance(value, int):
            raise ValueError("must be an integer")
    elif kind == "float":
        if isinstance(value, bool):
            raise ValueError("must be a number")
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValueError("must be a number") from None
    elif kind == "str":
        if not isinstance(value, str):
            raise ValueError("must be a string")
        if spec.choices and value not in spec.choices:
            raise ValueError(f"must be one of {', '.join(spec.choices)}")
        return value

    if spec.minimum is not None and value < spec.minimum:
        raise ValueError(f"must be >= {spec.minimum:g}")
    if spec.maximum is not None and value > spec.maximum:
        raise ValueError(f"must be <= {spec.maximum:g}")
    return value


def _cross_checks(command: Command, params: Dict[str, Any]) -> List[Dict[str, str]]:
    problems = []
    scheme = params.get("scheme")
    if scheme == "truncation" and params.get("mu") is None:
        problems.append({"field": "mu", "problem": "required for the truncation scheme"})
    if scheme == "truncation" and params.get("mu") is not None and params.get("lambda") is not None:
        if params["mu"] > params["lambda"]:
            problems.append({"field": "mu", "problem": "must be <= lambda"})
    if scheme == "custom" and not (params.get("values") or params.get("values_file")):
        problems.append({"field": "values", "problem": "custom scheme needs values or values_file"})
    if params.get("spectrum") == "custom" and not params.get("eigenvalues_file"):
        problems.append({"field": "eigenvalues_file", "problem": "required for a custom spectrum"})
    if command is Command.SIMULATE and params.get("T", 2) % 2:
        problems.append({"field": "T", "problem": "must be even"})
    if command is Command.MOMENTS and params.get("method") == "blom" and params.get("e2"):
        problems.append({"field": "e2", "problem": "Blom tables carry first moments only"})
    if command is Command.FIGURE:
        if params.get("T", 2) % 2:
            problems.append({"field": "T", "problem": "must be even"})
        if params.get("name") == "fig5_6":
            bad = [s for s in params.get("spectra") or [] if s not in FIG56_SPECTRA]
            if bad:
                problems.append({"field": "spectra", "problem": f"fig5_6 takes {', '.join(FIG56_SPECTRA)}; got {', '.join(bad)}"})
    return problems


def parse_config(
    source: Union[str, Path, Dict[str, Any]],
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Build a validated RunConfig from a config file or a mapping.

    Args:
        source: Path to a .toml/.json file, or an already-parsed mapping
        overrides: Command-line values; None entries are ignored

    Returns:
        RunConfig with defaults applied

    Raises:
        ConfigValidationError: Listing every offending field (with line numbers for files)
    """
    text: Optional[str] = None
    origin: Optional[str] = None
    if isinstance(source, dict):
        raw = dict(source)
    else:
        raw, text = load_config_file(source)
        origin = str(source)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    problems: List[Dict[str, str]] = []

    def problem(name: str, message: str) -> None:
        line = _line_of(text, name)
        problems.append({"field": name, "problem": f"line {line}: {message}" if line else message})

    command_value = raw.get("command")
    try:
        command = Command(command_value)
    except ValueError:
        problem("command", f"must be one of {', '.join(c.value for c in Command)}; got {command_value!r}")
        raise ConfigValidationError("Invalid run config", problems) from None

    schema = {**GLOBAL_FIELDS, **COMMAND_FIELDS[command]}
    for key in raw:
        if key not in schema:
            problem(key, f"unknown key for command '{command.value}'")

    values: Dict[str, Any] = {}
    for name, spec in schema.items():
        if raw.get(name) is None:
            if spec.required:
                problem(name, "is required")
            values[name] = spec.default
            continue
        try:
            values[name] = _coerce(name, raw[name], spec)
        except ValueError as e:
            problem(name, str(e))

    if command is Command.FIGURE and isinstance(values.get("name"), str):
        for name, default in _FIGURE_DEFAULTS.get(values["name"], {}).items():
            if values.get(name) is None:
                values[name] = list(default)
        if values["name"] == "fig5_6":
            if raw.get("dims") is None and values.get("full_scale"):
                values["dims"] = [10, 100, 1000]
            if values.get("multipliers") is None:
                values["multipliers"] = default_multipliers()
        if values.get("step_budget") is None:
            values["step_budget"] = float(os.getenv("QGAIN_STEP_BUDGET", DEFAULT_STEP_BUDGET))

    if not problems:
        for entry in _cross_checks(command, values):
            problem(entry["field"], entry["problem"])
    if problems:
        raise ConfigValidationError("Invalid run config", problems)

    params = {k: v for k, v in values.items() if k not in GLOBAL_FIELDS}
    workers = values["workers"] or int(os.getenv("QGAIN_WORKERS", "1") or 1)
    config = RunConfig(
        command=command,
        params=params,
        seed=values["seed"],
        output_dir=Path(values["output_dir"]),
        cache_dir=resolve_cache_dir(values["cache_dir"]),
        workers=max(1, workers),
        svg=values["svg"],
        moment_seed=values["moment_seed"],
        samples=values["samples"],
        panels=values["panels"],
        max_attempts=values["max_attempts"],
        source=origin,
    )
    logger.debug(f"parsed config for '{command.value}': {config.to_dict()}")
    return config
