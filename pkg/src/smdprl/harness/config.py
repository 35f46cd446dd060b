"""Flat YAML config loading with fail-fast validation.

The config file is a flat mapping of the knobs in
:class:`smdprl.core.RunConfig`.  Unknown keys are errors.  ``gamma`` and
the clip bounds default from the chosen environment variant when the
keys are absent; writing ``clip_min: null`` / ``clip_max: null``
explicitly disables bootstrap clipping.
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path

import yaml

from ..core import RunConfig
from ..gridworld import EnvVariant


class ConfigError(ValueError):
    pass


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TUPLE_KEYS = {"dataset_sizes", "random_fractions", "hidden_sizes"}
_INT_KEYS = {
    "minibatch_size",
    "epochs",
    "target_update_period",
    "epsilon_warmup_steps",
    "epsilon_anneal_steps",
    "online_total_steps",
    "replay_capacity",
    "eval_period_episodes",
    "episode_step_cap",
    "validation_size",
    "cloner_epochs",
    "seed",
    "seeds",
}


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _TUPLE_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key {key!r} must be a list")
        kind = int if key in ("dataset_sizes", "hidden_sizes") else float
        return tuple(kind(v) for v in value)
    if key in _INT_KEYS:
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return int(value)
    if key == "validation_scheme":
        return str(value)
    return float(value)


def config_from_mapping(raw: dict, variant: EnvVariant | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from a flat mapping."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {key: _coerce(key, value) for key, value in raw.items()}
    if variant is not None:
        values.setdefault("gamma", variant.gamma)
        if "clip_min" not in values and "clip_max" not in values:
            low, high = variant.return_range()
            values["clip_min"] = low
            values["clip_max"] = high
    if values.get("target_update_kappa") is not None and "target_update_period" in values:
        if values["target_update_period"] is not None:
            raise ConfigError(
                "set either target_update_period or target_update_kappa, not both"
            )
    if values.get("target_update_kappa") is not None:
        values["target_update_period"] = None
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, variant: EnvVariant | None = None) -> RunConfig:
    """Load a config file (or defaults when ``path`` is None)."""
    if path is None:
        return config_from_mapping({}, variant)
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_mapping(raw, variant)


def resolved_config_text(config: RunConfig, variant: EnvVariant | None = None) -> str:
    """Canonical flat rendering of every knob, for provenance files."""
    entries = dataclasses.asdict(config)
    if variant is not None:
        entries["variant"] = variant.name
    lines = []
    for key in sorted(entries):
        value = entries[key]
        if isinstance(value, tuple):
            value = list(value)
        lines.append(f"{key}: {value!r}")
    return "\n".join(lines) + "\n"


def config_hash(config: RunConfig, variant: EnvVariant | None = None) -> str:
    digest = hashlib.sha256(resolved_config_text(config, variant).encode("utf-8"))
    return digest.hexdigest()[:16]
