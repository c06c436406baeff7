"""
Run configuration resolution.
Built-in defaults < config JSON file < environment (.env / IMB_*) < command-line flags.
"""

import json
import logging
import os
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from models import ConfigError, RunConfig, TrainConfig

logger = logging.getLogger(__name__)

OPTIONAL_FIELDS = {"hidden", "zero_shot"}

# argparse dest -> (section, field); section None is the top level of RunConfig
FLAG_FIELDS = {
    "corpus": (None, "corpus"),
    "extra": (None, "extra"),
    "out": (None, "output_dir"),
    "task": (None, "task"),
    "features": (None, "features"),
    "tfidf_max_tokens": (None, "tfidf_max_tokens"),
    "tfidf_min_df": (None, "tfidf_min_df"),
    "by_language": (None, "by_language"),
    "zero_shot": (None, "zero_shot"),
    "log_level": (None, "log_level"),
    "seed": ("train", "seed_base"),
    "k": ("train", "k"),
    "epochs": ("train", "epochs_max"),
    "patience": ("train", "patience"),
    "batch_size": ("train", "batch_size"),
    "lr": ("train", "lr"),
    "weight_decay": ("train", "weight_decay"),
    "hidden": ("train", "hidden"),
    "threshold": ("train", "threshold"),
    "val_frac": ("train", "val_frac"),
    "sampler_epoch_multiplier": ("train", "sampler_epoch_multiplier"),
    "strategy": ("train", "strategy"),
    "class_weights": ("train", "class_weights"),
    "sample_weights": ("train", "sample_weights"),
    "undersample": ("train", "undersample"),
}


def _check_type(path: str, value: Any, default: Any, name: str):
    if value is None and name in OPTIONAL_FIELDS:
        return
    if isinstance(default, bool):
        expected = bool
    elif name == "zero_shot":
        expected = str
    elif isinstance(default, float):
        expected = (int, float)
    elif name == "hidden" or isinstance(default, int):
        expected = int
    elif isinstance(default, str):
        expected = str
    elif isinstance(default, list):
        expected = list
    else:
        expected = dict
    if isinstance(value, bool) and expected is not bool:
        raise ConfigError(path, f"expected {_type_name(expected)}, got a boolean")
    if not isinstance(value, expected):
        raise ConfigError(path, f"expected {_type_name(expected)}, got {type(value).__name__}")


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return "number"
    return {bool: "boolean", int: "integer", str: "string", list: "list", dict: "object"}[expected]


def _apply(target, values: Mapping[str, Any], prefix: str = ""):
    """Return a copy of a config dataclass with `values` applied after type checks."""
    known = {f.name: getattr(target, f.name) for f in fields(target)}
    updates = {}
    for name, value in values.items():
        path = f"{prefix}{name}"
        if name not in known:
            raise ConfigError(path, "unknown configuration key")
        if name == "train":
            if not isinstance(value, dict):
                raise ConfigError(path, "expected object")
            updates[name] = _apply(target.train, value, "train.")
            continue
        _check_type(path, value, known[name], name)
        if isinstance(known[name], float) and not isinstance(value, bool):
            value = float(value)
        updates[name] = value
    return replace(target, **updates)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"{path} is not valid JSON: {e.msg} (line {e.lineno})") from e
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    return data


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """IMB_SEED, IMB_LOG_LEVEL and IMB_OUTPUT_DIR as config updates."""
    environ = os.environ if environ is None else environ
    overrides: Dict[str, Any] = {}
    seed = environ.get("IMB_SEED")
    if seed:
        try:
            overrides["train"] = {"seed_base": int(seed)}
        except ValueError:
            raise ConfigError("train.seed_base", f"IMB_SEED must be an integer, got '{seed}'") from None
    if environ.get("IMB_LOG_LEVEL"):
        overrides["log_level"] = environ["IMB_LOG_LEVEL"].upper()
    if environ.get("IMB_OUTPUT_DIR"):
        overrides["output_dir"] = environ["IMB_OUTPUT_DIR"]
    return overrides


def flag_overrides(args) -> Dict[str, Any]:
    """Flags left at None were not given on the command line."""
    top: Dict[str, Any] = {}
    train: Dict[str, Any] = {}
    for dest, (section, name) in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "hidden" and value == 0:
            value = None
        (train if section == "train" else top)[name] = value
    if train:
        top["train"] = train
    return top


def resolve_config(args=None, environ: Optional[Mapping[str, str]] = None,
                   config_path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Layer defaults, the config file, the environment and parsed flags, then validate.
    Raises ConfigError naming the first failing field path.
    """
    config = RunConfig(train=TrainConfig())
    path = config_path or getattr(args, "config", None)
    if path:
        config = _apply(config, load_config_file(path))
    config = _apply(config, env_overrides(environ))
    if args is not None:
        config = _apply(config, flag_overrides(args))
    config = replace(config, log_level=config.log_level.upper())

    errors = config.validate()
    if errors:
        field_path, message = errors[0]
        for other_path, other_message in errors[1:]:
            logger.error("Invalid configuration %s: %s", other_path, other_message)
        raise ConfigError(field_path, message)
    return config


def write_resolved_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / "resolved_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
