"""Run configuration: one JSON file, validated before any computation.

Print the schema with ``turbokoop <command> --print-schema``.  Relative data
paths are resolved against the current directory.  When ``data.train`` or
``data.test`` are omitted, the files written by ``gen-data`` under
``<out_dir>/data`` are used.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .dictionary import FAMILIES
from .errors import ConfigError, SchemaError
from .surrogate import INPUT_CHANNELS, STATE_CHANNELS

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 0}
_paths = {"type": "array", "items": {"type": "string"}}
_names = {"type": "array", "items": {"type": "string"}, "uniqueItems": True}

NARX_OUTPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "input_delay_s": _nonneg,
        "feedback_delay_s": _pos,
        "hidden_neurons": {"type": "integer", "minimum": 1},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "turbokoop run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"train": _paths, "test": _paths},
        },
        "channels": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"states": _names, "inputs": _names},
        },
        "generator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_train": {"type": "integer", "minimum": 1},
                "train_duration": _pos,
                "test_duration": _pos,
                "sample_rate": _pos,
                "substeps": {"type": "integer", "minimum": 1},
                "noise_std": {"oneOf": [{"type": "null"}, _nonneg,
                                        {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}]},
            },
        },
        "dictionary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "num_functions": _count,
                "shape_parameter": _pos,
                "polynomial_degree": {"type": "integer", "minimum": 1},
                "center_bounds": {"oneOf": [
                    {"const": "auto"},
                    {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                ]},
                "seed": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
            },
        },
        "regression": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rank_tolerance": _nonneg,
                "ridge": _nonneg,
                "normalize_inputs": {"type": "boolean"},
            },
        },
        "narx": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "outputs": {"type": "object", "additionalProperties": NARX_OUTPUT_SCHEMA},
                "feedback_delay_s": _pos,
                "l2_penalty": _nonneg,
                "max_epochs": _count,
                "lm_initial_damping": _pos,
                "lm_damping_factor": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rbf_counts": {"type": "array", "items": _count, "minItems": 1},
                "jobs": {"type": "integer", "minimum": 1},
            },
        },
        "model_path": {"type": "string"},
        "narx_models": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}

DEFAULTS = {
    "seed": 0,
    "out_dir": "turbokoop_run",
    "data": {},
    "channels": {"states": list(STATE_CHANNELS), "inputs": list(INPUT_CHANNELS)},
    "generator": {
        "n_train": 3,
        "train_duration": 200.0,
        "test_duration": 200.0,
        "sample_rate": 100.0,
        "substeps": 4,
        "noise_std": None,
    },
    "dictionary": {
        "family": "polyharmonic",
        "num_functions": 100,
        "shape_parameter": 1.0,
        "polynomial_degree": 2,
        "center_bounds": [-1.8, 1.8],
        "seed": None,
    },
    "regression": {"rank_tolerance": 0.0, "ridge": 0.0, "normalize_inputs": False},
    "narx": {
        "outputs": {
            "N_t": {"input_delay_s": 0.1, "hidden_neurons": 20},
            "T_tur_out": {"input_delay_s": 2.0, "hidden_neurons": 14},
        },
        "feedback_delay_s": 0.01,
        "l2_penalty": 1e-4,
        "max_epochs": 100,
        "lm_initial_damping": 1e-3,
        "lm_damping_factor": 10.0,
    },
    "sweep": {"rbf_counts": [0, 50, 100, 150], "jobs": 1},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "outputs":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out_dir"])

    @property
    def data_dir(self) -> Path:
        return self.out_dir / "data"

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def states(self) -> list[str]:
        return self.raw["channels"]["states"]

    @property
    def inputs(self) -> list[str]:
        return self.raw["channels"]["inputs"]

    @property
    def dictionary_seed(self) -> int:
        s = self.raw["dictionary"]["seed"]
        return self.seed if s is None else s

    @property
    def model_path(self) -> Path:
        p = self.raw.get("model_path")
        return Path(p) if p else self.out_dir / "koopman.tkm"

    def narx_model_paths(self) -> dict[str, Path]:
        given = self.raw.get("narx_models")
        if given:
            return {k: Path(v) for k, v in given.items()}
        return {k: self.out_dir / f"narx_{k}.tkm" for k in self.raw["narx"]["outputs"]}

    def train_paths(self) -> list[Path]:
        given = self.raw["data"].get("train")
        if given:
            return [Path(p) for p in given]
        return sorted(self.data_dir.glob("train_*.csv"))

    def test_paths(self) -> list[Path]:
        given = self.raw["data"].get("test")
        if given:
            return [Path(p) for p in given]
        return [self.data_dir / "transient_test.csv", self.data_dir / "steady_test.csv"]


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file, then ``overrides``; schema-checked."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        try:
            jsonschema.validate(user, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"{path}: {_where(exc)}{exc.message}") from None
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_where(exc)}{exc.message}") from None
    lo_hi = raw["dictionary"]["center_bounds"]
    if lo_hi != "auto" and not lo_hi[0] < lo_hi[1]:
        raise ConfigError("dictionary.center_bounds must satisfy low < high")
    overlap = set(raw["channels"]["states"]) & set(raw["channels"]["inputs"])
    if overlap:
        raise ConfigError(f"channels listed as both state and input: {sorted(overlap)}")
    if not raw["channels"]["states"]:
        raise ConfigError("at least one state channel is required")
    return RunConfig(raw)


def _where(exc) -> str:
    loc = ".".join(str(p) for p in exc.absolute_path)
    return f"at {loc}: " if loc else ""


def check_data_files(paths, needed, role: str) -> None:
    """Existence and header checks, cheap enough to run before any compute."""
    from .dataio import read_header

    if not paths:
        raise ConfigError(f"no {role} data files configured or found")
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"{role} file {p} does not exist")
        header = read_header(p)
        missing = [n for n in needed if n not in header]
        if missing:
            raise SchemaError(f"{role} file {p} lacks channel(s) {missing}")


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=2)
