"""The JSON configuration document. Each module reads only its own section."""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "audio": {"processing_rate": 20000.0, "frame_length_s": 2.0, "hop_length_s": 2.0},
    "geometry": {"mic_spacing_m": 0.015, "speed_of_sound_mps": 343.0},
    "filterbank": {
        "ns": 3,
        "nm": 3,
        "spectral_edges": [[200.0, 800.0], [800.0, 2500.0], [2500.0, 8000.0]],
        "modulation_edges": [[2.0, 8.0], [8.0, 32.0], [32.0, 128.0]],
        "filter_order": 4,
    },
    "classifier": {"repeats": 5, "folds": 4},
    "mbo": {"budget": 80, "init_n": 24, "files_per_direction": 6},
    "renderer": {
        "head_radius_m": 0.0875,
        "ear_azimuth_deg": 100.0,
        "mic_offset_m": 0.0075,
        "speed_of_sound_mps": 343.0,
        "files_per_direction": 18,
        "duration_s": 10.0,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Defaults overlaid with the sections found in ``path`` (if given)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        user = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return _merge(DEFAULTS, user)
