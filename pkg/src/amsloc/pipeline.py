"""Recording to feature matrix: decimate, beamform, frame, extract."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .audio_io import FramerConfig, MultichannelAudio, decimate, frame_signal
from .beamforming import ArrayGeometry, CardioidSet, make_cardioids
from .errors import ConfigError
from .features import FeatureFrame, FilterbankConfig, ams_log_energies


@dataclass(frozen=True)
class FeaturePipeline:
    filterbank: FilterbankConfig = field(default_factory=FilterbankConfig)
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    framer: FramerConfig = field(default_factory=FramerConfig)
    processing_rate: float = 20000.0

    @classmethod
    def from_config(cls, cfg: dict, filterbank: FilterbankConfig | None = None) -> "FeaturePipeline":
        audio = cfg["audio"]
        return cls(
            filterbank=filterbank or FilterbankConfig.from_dict(cfg["filterbank"]),
            geometry=ArrayGeometry(**cfg["geometry"]),
            framer=FramerConfig(audio["frame_length_s"], audio["hop_length_s"]),
            processing_rate=float(audio["processing_rate"]),
        )

    def to_dict(self) -> dict:
        return {
            "filterbank": self.filterbank.to_dict(),
            "geometry": {"mic_spacing_m": self.geometry.mic_spacing_m,
                         "speed_of_sound_mps": self.geometry.speed_of_sound_mps},
            "framer": {"frame_length_s": self.framer.frame_length_s,
                       "hop_length_s": self.framer.hop_length_s},
            "processing_rate": self.processing_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturePipeline":
        return cls(FilterbankConfig.from_dict(d["filterbank"]), ArrayGeometry(**d["geometry"]),
                   FramerConfig(**d["framer"]), float(d["processing_rate"]))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def with_filterbank(self, filterbank: FilterbankConfig) -> "FeaturePipeline":
        return FeaturePipeline(filterbank, self.geometry, self.framer, self.processing_rate)

    def prepare(self, audio: MultichannelAudio) -> MultichannelAudio:
        if audio.sample_rate < self.processing_rate:
            raise ConfigError(f"recording rate {audio.sample_rate} Hz is below the processing rate")
        return decimate(audio, self.processing_rate)

    def cardioid_frames(self, audio: MultichannelAudio) -> list[CardioidSet]:
        """Beamform the whole recording, then cut it into analysis frames."""
        cards = make_cardioids(self.prepare(audio), self.geometry)
        stacked = MultichannelAudio(cards.as_array(), cards.sample_rate)
        return [CardioidSet(*f.samples, sample_rate=f.sample_rate)
                for f in frame_signal(stacked, self.framer)]

    def frames_to_features(self, frames: list[CardioidSet],
                           filterbank: FilterbankConfig | None = None) -> list[FeatureFrame]:
        fb = filterbank or self.filterbank
        digest = self.with_filterbank(fb).config_hash()
        if not frames:
            return []
        # per-frame filter state resets, so all frames can run as one batch
        batch = np.stack([c.as_array() for c in frames])
        energies = ams_log_energies(batch, fb, frames[0].sample_rate)
        return [FeatureFrame(e.reshape(-1), i, digest) for i, e in enumerate(energies)]

    def features(self, audio: MultichannelAudio) -> list[FeatureFrame]:
        return self.frames_to_features(self.cardioid_frames(audio))

    def feature_matrix(self, audio: MultichannelAudio) -> np.ndarray:
        return np.stack([f.values for f in self.features(audio)])
