"""YAML scenario files with line-numbered diagnostics.

A file is a mapping of ScenarioConfig fields. An optional `preset` mapping
names one of the ready-made scenarios plus its keyword arguments; top-level
fields then override the preset's config.

    preset: {name: asymmetric_outcast, n: 13, outcast_count: 2}
    seed: 7
    duration_rounds: 120
"""

from __future__ import annotations

import dataclasses
import inspect
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .config import ConfigError, FaultSpec, ScenarioConfig
from .network import model_from_dict
from .scenarios import (asymmetric_outcast_scenario, equivocation_scenario, one_round_fork_scenario,
                        straggler_scenario, symmetric_latency_scenario)

PRESETS = {
    "equivocation": equivocation_scenario,
    "one_round_fork": one_round_fork_scenario,
    "asymmetric_outcast": asymmetric_outcast_scenario,
    "symmetric_latency": symmetric_latency_scenario,
    "straggler": straggler_scenario,
}

_INT = ("n", "f", "seed", "duration_rounds", "payload_size", "observer")
_FLOAT = ("gst", "pre_gst_cap", "extra_wait", "timer_base", "delta")
_BOOL = ("backoff", "echo", "vote_broadcast", "trace")
_STR = ("protocol", "mode", "script")


class ScenarioFileError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<scenario>"):
        self.message = message
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class ScenarioFile:
    config: ScenarioConfig
    preset: Optional[str] = None
    preset_args: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    def with_param(self, name: str, value) -> ScenarioConfig:
        """Config with one parameter changed, re-running the preset when it takes that argument."""
        if self.preset is not None and name in inspect.signature(PRESETS[self.preset]).parameters:
            args = dict(self.preset_args, **{name: value})
            return _apply(PRESETS[self.preset](**args), self.overrides)
        if name not in ScenarioConfig.__dataclass_fields__:
            raise ConfigError(f"{name!r} is neither a scenario field nor an argument of the preset", name)
        overrides = dict(self.overrides, **{name: value})
        if name == "n":
            overrides.pop("f", None)
            base = PRESETS[self.preset](**self.preset_args) if self.preset else ScenarioConfig()
            return _apply(dataclasses.replace(base, n=value, f=None), overrides)
        base = PRESETS[self.preset](**self.preset_args) if self.preset else ScenarioConfig()
        return _apply(base, overrides)


def _apply(base: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    cfg = dataclasses.replace(base, **overrides)
    if "n" in overrides and "f" not in overrides:
        cfg = dataclasses.replace(cfg, f=None)
    return cfg


def _key_lines(text: str) -> dict[str, int]:
    root = yaml.compose(text)
    lines = {}
    if isinstance(root, yaml.MappingNode):
        for key, value in root.value:
            if isinstance(key, yaml.ScalarNode):
                lines[key.value] = key.start_mark.line + 1
                if isinstance(value, yaml.MappingNode):
                    for sub, _ in value.value:
                        if isinstance(sub, yaml.ScalarNode):
                            lines[f"{key.value}.{sub.value}"] = sub.start_mark.line + 1
    return lines


def _coerce(name: str, value: Any) -> Any:
    if value is None and name in ("f", "observer", "script"):
        return None
    if name in _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}", name)
        return value
    if name in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}", name)
        return float(value)
    if name in _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false, got {value!r}", name)
        return value
    if name in _STR:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}", name)
        return value
    try:
        if name == "latency":
            return model_from_dict(value)
        if name == "faults":
            return tuple(FaultSpec.from_dict(x) for x in value or ())
        if name == "extra_wait_schedule":
            return {int(k): float(v) for k, v in (value or {}).items()}
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"bad {name}: {exc}", name) from None
    raise ConfigError(f"unknown scenario field {name!r}", name)


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioFile:
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioFileError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                                mark.line + 1 if mark is not None else None, source) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioFileError("scenario must be a mapping of fields", 1, source)
    try:
        preset, preset_args = None, {}
        if "preset" in data:
            spec = data["preset"]
            if isinstance(spec, str):
                spec = {"name": spec}
            if not isinstance(spec, dict) or spec.get("name") not in PRESETS:
                raise ConfigError(f"preset must name one of {', '.join(sorted(PRESETS))}", "preset")
            preset = spec["name"]
            preset_args = {k: v for k, v in spec.items() if k != "name"}
            params = inspect.signature(PRESETS[preset]).parameters
            for k in preset_args:
                if k not in params:
                    raise ConfigError(f"preset {preset} takes no argument {k!r}", f"preset.{k}")
            if "mode" in preset_args:
                from ..accounting import parse_mode
                preset_args["mode"] = parse_mode(preset_args["mode"])
        overrides = {}
        for name, value in data.items():
            if name == "preset":
                continue
            if name not in ScenarioConfig.__dataclass_fields__:
                raise ConfigError(f"unknown scenario field {name!r}", name)
            overrides[name] = _coerce(name, value)
        try:
            base = PRESETS[preset](**preset_args) if preset else ScenarioConfig()
        except TypeError as exc:
            raise ConfigError(f"bad preset arguments: {exc}", "preset") from None
        cfg = _apply(base, overrides)
        cfg.validate()
    except ConfigError as exc:
        line = lines.get(exc.field) if exc.field else None
        if line is None and exc.field and "." in exc.field:
            line = lines.get(exc.field.split(".")[0])
        raise ScenarioFileError(str(exc), line, source) from None
    except ValueError as exc:
        raise ScenarioFileError(str(exc), None, source) from None
    return ScenarioFile(cfg, preset, preset_args, overrides)


def load_scenario(path: str) -> ScenarioFile:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), path)
