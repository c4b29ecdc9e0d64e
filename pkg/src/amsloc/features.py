"""Amplitude-modulation-spectrum features.

Each cardioid goes through a spectral Butterworth bank, full-wave
rectification plus a 400 Hz lowpass (sampled at 1 kHz), a modulation
Butterworth bank, and a log-energy average over the frame. Four cardioids
times Ns spectral bands times Nm modulation bands gives the feature vector.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .beamforming import CardioidSet
from .errors import ConfigError

ENVELOPE_RATE = 1000.0
ENVELOPE_CUTOFF = 400.0
LOG_FLOOR = 1e-10
CHANNEL_LABELS = ("FL", "FR", "BL", "BR")


def _as_edges(edges) -> tuple[tuple[float, float], ...]:
    try:
        out = tuple((float(lo), float(hi)) for lo, hi in edges)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"band edges must be (low, high) pairs: {edges!r}") from exc
    return out


@dataclass(frozen=True)
class FilterbankConfig:
    spectral_edges: tuple = ((200.0, 800.0), (800.0, 2500.0), (2500.0, 8000.0))
    modulation_edges: tuple = ((2.0, 8.0), (8.0, 32.0), (32.0, 128.0))
    filter_order: int = 4

    def __post_init__(self):
        object.__setattr__(self, "spectral_edges", _as_edges(self.spectral_edges))
        object.__setattr__(self, "modulation_edges", _as_edges(self.modulation_edges))
        if self.filter_order < 2 or self.filter_order % 2:
            raise ConfigError(f"filter_order must be an even integer >= 2, got {self.filter_order}")
        for name in ("spectral_edges", "modulation_edges"):
            bands = getattr(self, name)
            if not bands:
                raise ConfigError(f"{name} is empty")
            for lo, hi in bands:
                if not 0 < lo < hi:
                    raise ConfigError(f"{name}: invalid band ({lo}, {hi})")
            lows = [lo for lo, _ in bands]
            if lows != sorted(lows):
                raise ConfigError(f"{name}: bands must be listed in ascending order")

    @property
    def ns(self) -> int:
        return len(self.spectral_edges)

    @property
    def nm(self) -> int:
        return len(self.modulation_edges)

    @property
    def n_features(self) -> int:
        return 4 * self.ns * self.nm

    def check_rates(self, sample_rate: float, envelope_rate: float = ENVELOPE_RATE):
        for lo, hi in self.spectral_edges:
            if hi >= sample_rate / 2:
                raise ConfigError(f"spectral band ({lo}, {hi}) exceeds Nyquist of {sample_rate} Hz")
        for lo, hi in self.modulation_edges:
            if hi >= envelope_rate / 2:
                raise ConfigError(f"modulation band ({lo}, {hi}) exceeds envelope Nyquist")

    def to_dict(self) -> dict:
        return {
            "ns": self.ns,
            "nm": self.nm,
            "spectral_edges": [list(b) for b in self.spectral_edges],
            "modulation_edges": [list(b) for b in self.modulation_edges],
            "filter_order": self.filter_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterbankConfig":
        cfg = cls(spectral_edges=d["spectral_edges"], modulation_edges=d["modulation_edges"],
                  filter_order=int(d.get("filter_order", 4)))
        if "ns" in d and d["ns"] != cfg.ns or "nm" in d and d["nm"] != cfg.nm:
            raise ConfigError("ns/nm disagree with the number of band edges")
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FilterbankConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    values: np.ndarray
    frame_index: int = 0
    config_hash: str | None = field(default=None, compare=False)

    def block(self, channel: int, ns: int = 3, nm: int = 3) -> np.ndarray:
        """The ``ns * nm`` features of one cardioid channel."""
        return self.values[channel * ns * nm:(channel + 1) * ns * nm]


@lru_cache(maxsize=256)
def _bandpass_sos(lo: float, hi: float, order: int, fs: float) -> np.ndarray:
    # order is the lowpass-prototype order; the bandpass has twice as many poles
    return signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")


@lru_cache(maxsize=8)
def _envelope_sos(fs: float) -> np.ndarray:
    return signal.butter(4, ENVELOPE_CUTOFF, btype="lowpass", fs=fs, output="sos")


def spectral_filterbank(x: np.ndarray, cfg: FilterbankConfig, sample_rate: float) -> np.ndarray:
    """Causal bandpass analysis; returns ``(..., Ns, n)`` for input ``(..., n)``."""
    cfg.check_rates(sample_rate)
    x = np.asarray(x, dtype=np.float64)
    return np.stack([signal.sosfilt(_bandpass_sos(lo, hi, cfg.filter_order, sample_rate), x, axis=-1)
                     for lo, hi in cfg.spectral_edges], axis=-2)


def envelope(band: np.ndarray, sample_rate: float, envelope_rate: float = ENVELOPE_RATE) -> np.ndarray:
    """Rectify, lowpass at 400 Hz and resample to ``envelope_rate`` (integer factor)."""
    factor = sample_rate / envelope_rate
    if abs(factor - round(factor)) > 1e-9 or factor < 1:
        raise ConfigError(f"{sample_rate} Hz is not an integer multiple of the envelope rate")
    smooth = signal.sosfilt(_envelope_sos(float(sample_rate)), np.abs(band), axis=-1)
    # the lowpass output of a nonnegative input can ring slightly below zero
    return np.maximum(smooth[..., ::int(round(factor))], 0.0)


def modulation_filterbank(env: np.ndarray, cfg: FilterbankConfig,
                          envelope_rate: float = ENVELOPE_RATE) -> np.ndarray:
    """Bandpass the envelope into Nm modulation bands; returns ``(..., Nm, m)``."""
    for lo, hi in cfg.modulation_edges:
        if hi >= envelope_rate / 2:
            raise ConfigError(f"modulation band ({lo}, {hi}) exceeds envelope Nyquist")
    return np.stack([signal.sosfilt(_bandpass_sos(lo, hi, cfg.filter_order, envelope_rate), env, axis=-1)
                     for lo, hi in cfg.modulation_edges], axis=-2)


def ams_log_energies(x: np.ndarray, cfg: FilterbankConfig, sample_rate: float) -> np.ndarray:
    """Log-energy AMS matrix ``(..., Ns, Nm)`` for signals ``(..., n)``."""
    bands = spectral_filterbank(x, cfg, sample_rate)
    mod = modulation_filterbank(envelope(bands, sample_rate), cfg)
    return np.log10(np.mean(mod ** 2, axis=-1) + LOG_FLOOR)


def extract_features(cards: CardioidSet, cfg: FilterbankConfig = FilterbankConfig(),
                     frame_index: int = 0, config_hash: str | None = None) -> FeatureFrame:
    """Compute the ``4 * Ns * Nm`` log-energy features of one frame.

    Values are ordered channel (FL, FR, BL, BR), then spectral band, then
    modulation band. Filter state starts from zero for every call.
    """
    energies = ams_log_energies(cards.as_array(), cfg, cards.sample_rate)
    return FeatureFrame(energies.reshape(-1), frame_index, config_hash)
