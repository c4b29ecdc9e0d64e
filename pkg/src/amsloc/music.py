"""Broadband incoherent MUSIC over the four hearing-aid microphones (free-field steering)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio_io import MultichannelAudio
from .errors import NoEstimateError
from .scene import HeadModel


@dataclass
class SteeringGrid:
    """Unit-norm free-field steering vectors, shape ``(n_freqs, n_azimuths, n_mics)``."""

    mic_positions_m: np.ndarray
    sample_rate: float
    nfft: int = 512
    fmin: float = 200.0
    fmax: float = 4000.0
    speed_of_sound_mps: float = 343.0
    azimuth_step_deg: float = 1.0

    def __post_init__(self):
        self.mic_positions_m = np.asarray(self.mic_positions_m, dtype=np.float64)
        self.azimuths = np.arange(0.0, 360.0, self.azimuth_step_deg)
        freqs = np.fft.rfftfreq(self.nfft, 1.0 / self.sample_rate)
        self.bins = np.flatnonzero((freqs >= self.fmin) & (freqs <= self.fmax))
        self.freqs = freqs[self.bins]
        self.vectors = steering_vectors(self.mic_positions_m, self.azimuths, self.freqs,
                                        self.speed_of_sound_mps)

    @classmethod
    def for_head(cls, head: HeadModel = HeadModel(), sample_rate: float = 20000.0, **kw):
        return cls(head.mic_positions_m(), sample_rate, speed_of_sound_mps=head.speed_of_sound_mps, **kw)


def plane_wave_delays(mic_positions_m, azimuth_deg, c: float = 343.0) -> np.ndarray:
    """Arrival time of each mic relative to the origin, ``(n_azimuths, n_mics)``."""
    az = np.deg2rad(np.atleast_1d(azimuth_deg))
    u = np.stack([np.cos(az), np.sin(az)], axis=1)
    return -(u @ np.asarray(mic_positions_m).T) / c


def steering_vectors(mic_positions_m, azimuths_deg, freqs, c: float = 343.0) -> np.ndarray:
    tau = plane_wave_delays(mic_positions_m, azimuths_deg, c)
    m = tau.shape[1]
    return np.exp(-2j * np.pi * freqs[:, None, None] * tau[None, :, :]) / np.sqrt(m)


def music_pseudospectrum(mics: MultichannelAudio, grid: SteeringGrid, n_sources: int = 1) -> np.ndarray:
    """Per-bin max-normalized MUSIC pseudospectra averaged over frequency."""
    if mics.channel_count != grid.mic_positions_m.shape[0]:
        raise ValueError("channel count does not match the steering grid")
    if mics.sample_rate != grid.sample_rate:
        raise ValueError("sample rate does not match the steering grid")
    _, _, X = signal.stft(mics.samples, nperseg=grid.nfft, noverlap=grid.nfft // 2,
                          boundary=None, padded=False)
    X = X[:, grid.bins, :]  # (mics, bins, frames)
    if X.shape[2] == 0:
        raise NoEstimateError("recording too short for one STFT frame")
    R = np.einsum("mft,nft->fmn", X, X.conj()) / X.shape[2]
    power = np.real(np.trace(R, axis1=1, axis2=2))
    usable = power > 1e-12 * max(power.max(), 1e-300)
    if not np.any(power > 0) or not usable.any():
        raise NoEstimateError("spatial covariance is rank-deficient (silent input)")
    R, A = R[usable], grid.vectors[usable]
    _, vecs = np.linalg.eigh(R)
    noise = vecs[:, :, :grid.mic_positions_m.shape[0] - n_sources]
    proj = np.einsum("fmk,fam->fak", noise.conj(), A)
    spec = 1.0 / np.maximum(np.sum(np.abs(proj) ** 2, axis=2), 1e-12)
    spec /= spec.max(axis=1, keepdims=True)
    return spec.mean(axis=0)


def music_localize(mics: MultichannelAudio, grid: SteeringGrid | None = None) -> float:
    """Azimuth in degrees of the single dominant source."""
    if grid is None:
        grid = SteeringGrid.for_head(sample_rate=mics.sample_rate)
    if mics.duration < 2.0:
        raise NoEstimateError("MUSIC needs at least 2 s of audio")
    return float(grid.azimuths[np.argmax(music_pseudospectrum(mics, grid))])
