"""Reading and writing scenario configurations as flat JSON objects."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Union

from ..config import PRESETS, ConfigError, ScenarioConfig, config_from_dict, preset


def load_config(source: Union[str, Path]) -> ScenarioConfig:
    """Preset name or path to a flat JSON file.

    Keys are :class:`ScenarioConfig` field names in linear SI units, or the
    logarithmic aliases ``p_max_dbm``, ``noise_s_dbm``, ``noise_e_dbm``,
    ``ref_gain_db``, ``gamma_s_db``, ``gamma_e_db`` and ``gamma_sen_db``.
    Missing keys take the scenario-1 defaults.
    """
    if isinstance(source, str) and source in PRESETS:
        return preset(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", ["config"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}", ["config"]) from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object of key/value pairs", ["config"])
    return config_from_dict(data)


def config_text(cfg: ScenarioConfig) -> str:
    """Canonical JSON (linear units, sorted keys, round-trip float repr)."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def write_config(cfg: ScenarioConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(config_text(cfg))
    return path


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()
