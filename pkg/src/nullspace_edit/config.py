"""Flat TOML experiment configuration.

Every setting is a top-level key; there are no tables. Precedence is
command-line override > config file > built-in default. ``dump_config``
writes the fully resolved settings back in the same format, so the output
can be fed back in with ``--config``.
"""

from __future__ import annotations

from pathlib import Path

import tomli

from .editors import Method, SolverConfig
from .harness import ExperimentConfig
from .knowledge import ConfigError, SyntheticSpec

DEFAULTS: dict[str, object] = {
    "d_in": 64,
    "d_out": 32,
    "preserved_count": 200,
    "effective_rank": 40,
    "key_noise": 0.0,
    "edit_key_noise": 0.5,
    "batches": 20,
    "batch_size": 5,
    "methods": ["memit", "alphaedit", "projected-memit"],
    "preserved_weight": 1.0,
    "ridge_scale": 1.0,
    "threshold": 1e-2,
    "threshold_mode": "absolute",
    "strict_memit": False,
    "seed": 0,
}

_THRESHOLD_MODES = ("absolute", "relative")


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"expected a boolean, got {value!r}", key)
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise ConfigError(f"expected an integer, got {value!r}", key)
    if isinstance(default, float):
        if isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}", key)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {value!r}", key) from None
    if isinstance(default, list):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key)
        try:
            return [Method(v).value for v in value]
        except ValueError:
            choices = ", ".join(m.value for m in Method)
            raise ConfigError(f"unknown method in {value!r} (choose from {choices})", key) from None
    if key == "threshold_mode":
        if value not in _THRESHOLD_MODES:
            raise ConfigError(f"must be one of {_THRESHOLD_MODES}, got {value!r}", key)
    return str(value)


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "config")
    try:
        with path.open("rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", "config") from None
    return raw


def parse_override(text: str) -> tuple[str, object]:
    """Split ``KEY=VALUE``; the value is read as a TOML literal when possible."""
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like KEY=VALUE, got {text!r}", "override")
    value = value.strip()
    try:
        parsed = tomli.loads(f"v = {value}")["v"]
    except tomli.TOMLDecodeError:
        parsed = value
    return key, parsed


def resolve(file_values: dict | None = None, overrides: dict | None = None) -> dict:
    merged = dict(DEFAULTS)
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError("unknown configuration key", key)
            merged[key] = _coerce(key, value)
    return merged


def to_experiment(values: dict) -> ExperimentConfig:
    world = SyntheticSpec(
        d_in=values["d_in"],
        d_out=values["d_out"],
        preserved_count=values["preserved_count"],
        effective_rank=values["effective_rank"],
        key_noise=values["key_noise"],
        edit_key_noise=values["edit_key_noise"],
        seed=values["seed"],
    )
    solver = SolverConfig(
        preserved_weight=values["preserved_weight"],
        ridge_scale=values["ridge_scale"],
        threshold=values["threshold"],
        relative_threshold=values["threshold_mode"] == "relative",
        strict_memit=values["strict_memit"],
    )
    return ExperimentConfig(
        world=world,
        batches=values["batches"],
        batch_size=values["batch_size"],
        methods=tuple(values["methods"]),
        solver=solver,
        seed=values["seed"],
    ).validate()


def load(path=None, overrides: dict | None = None) -> tuple[dict, ExperimentConfig]:
    file_values = read_config_file(path) if path is not None else {}
    values = resolve(file_values, overrides)
    return values, to_experiment(values)


def _literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_literal(v) for v in value) + "]"
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(values: dict) -> str:
    lines = ["# fully resolved configuration; valid input for --config"]
    lines += [f"{key} = {_literal(values[key])}" for key in DEFAULTS]
    return "\n".join(lines) + "\n"
