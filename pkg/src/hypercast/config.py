"""Layered run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .training import TrainConfig


class ConfigError(Exception):
    """Invalid configuration; the CLI maps this to exit code 2."""


@dataclass
class ModelSection:
    """Architecture knobs; node count and calendar granularity come from the data."""

    hidden_dim: int = 64
    time_dim: int = 24
    node_dim: int = 10
    num_prototypes: int = 8
    num_blocks: int = 2
    head_count: int = 4
    order: int = 2
    share_prototypes: bool = True
    share_embeddings: bool = True
    no_res: bool = False
    local_only: bool = False
    global_only: bool = False
    pairwise_graph: bool = False
    no_time_embedding: bool = False
    no_adaptive_output: bool = False


@dataclass
class RunConfig:
    data: str = ""
    output_dir: str = "runs"
    tag: str = ""
    seed: int = 0
    input_len: int = 12
    horizon: int = 12
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_COERCIBLE = {int: (int,), float: (int, float), str: (str,), bool: (bool,)}


def _assign(obj, key: str, value, path: str):
    matching = {f.name: f for f in fields(obj)}
    if key not in matching:
        raise ConfigError(f"unknown config key: '{path}'")
    f = matching[key]
    current = getattr(obj, key)
    if dataclasses.is_dataclass(current):
        raise ConfigError(f"config key '{path}' is a section, not a value")
    expected = f.type if isinstance(f.type, type) else type(current)
    allowed = _COERCIBLE.get(expected, (expected,))
    if expected is float and isinstance(value, int):
        value = float(value)
    if expected is bool and not isinstance(value, bool):
        raise ConfigError(f"config key '{path}' expects true/false, got {value!r}")
    if not isinstance(value, allowed) or (expected is not bool and isinstance(value, bool)):
        raise ConfigError(
            f"config key '{path}' expects {expected.__name__}, got {type(value).__name__}"
        )
    setattr(obj, key, value)


def _apply_mapping(cfg: RunConfig, mapping: dict, prefix: str = ""):
    for key, value in mapping.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            current = getattr(cfg, key, None)
            if current is None or not dataclasses.is_dataclass(current):
                raise ConfigError(f"unknown config section: '{path}'")
            for sub_key, sub_value in value.items():
                _assign(current, sub_key, sub_value, f"{path}.{sub_key}")
        else:
            _assign(cfg, key, value, path)


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got '{text}'")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_run_config(path=None, overrides: list[str] | None = None,
                    seed: int | None = None) -> RunConfig:
    """Resolve file -> --set overrides -> --seed, validating every key."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            mapping = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError("config file must hold a JSON object")
        _apply_mapping(cfg, mapping)
    for text in overrides or []:
        key, value = _parse_override(text)
        parts = key.split(".")
        if len(parts) == 1:
            _assign(cfg, parts[0], value, key)
        elif len(parts) == 2:
            section = getattr(cfg, parts[0], None)
            if section is None or not dataclasses.is_dataclass(section):
                raise ConfigError(f"unknown config section: '{parts[0]}'")
            _assign(section, parts[1], value, key)
        else:
            raise ConfigError(f"unknown config key: '{key}'")
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    else:
        cfg.train.seed = cfg.seed
    try:
        # re-run dataclass validation on the merged values
        cfg.train = TrainConfig(**dataclasses.asdict(cfg.train))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
