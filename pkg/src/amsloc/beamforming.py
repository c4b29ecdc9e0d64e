"""First-order differential (delay-and-subtract) cardioids for two BTE devices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import MultichannelAudio
from .errors import GeometryError

FRACTIONAL_DELAY_TAPS = 31
MAX_DELAY_SAMPLES = 10.0


@dataclass(frozen=True)
class ArrayGeometry:
    mic_spacing_m: float = 0.015
    speed_of_sound_mps: float = 343.0

    def __post_init__(self):
        if self.mic_spacing_m <= 0 or self.speed_of_sound_mps <= 0:
            raise GeometryError("mic spacing and speed of sound must be positive")

    def delay_samples(self, sample_rate: float) -> float:
        return self.mic_spacing_m / self.speed_of_sound_mps * sample_rate


@dataclass(frozen=True, eq=False)
class CardioidSet:
    front_left: np.ndarray
    front_right: np.ndarray
    back_left: np.ndarray
    back_right: np.ndarray
    sample_rate: float

    def __post_init__(self):
        lengths = {len(s) for s in (self.front_left, self.front_right, self.back_left, self.back_right)}
        if len(lengths) != 1:
            raise ValueError("cardioid signals must have equal length")

    def as_array(self) -> np.ndarray:
        """Stack as ``(4, n)`` in feature order FL, FR, BL, BR."""
        return np.stack([self.front_left, self.front_right, self.back_left, self.back_right])


def fractional_delay_kernel(delay: float, taps: int = FRACTIONAL_DELAY_TAPS, beta: float = 6.0):
    """Kaiser-windowed sinc for ``delay`` samples.

    Returns ``(integer_shift, kernel)``; the kernel handles the fractional
    part and is normalized to unit DC gain.
    """
    shift = int(np.floor(delay))
    frac = delay - shift
    half = taps // 2
    t = np.arange(-half, half + 1) - frac
    window = np.i0(beta * np.sqrt(np.clip(1.0 - (t / (half + 1)) ** 2, 0.0, None))) / np.i0(beta)
    h = np.sinc(t) * window
    return shift, h / h.sum()


def delay_signal(x: np.ndarray, delay: float) -> np.ndarray:
    """Return ``x(t - delay)`` with zeros shifted in at the edges, same length as ``x``."""
    shift, h = fractional_delay_kernel(delay)
    half = len(h) // 2
    full = np.convolve(x, h)
    start = half - shift
    out = np.zeros(len(x))
    lo = max(0, -start)
    hi = min(len(x), len(full) - start)
    out[lo:hi] = full[start + lo:start + hi]
    return out


def make_cardioids(mics: MultichannelAudio, geom: ArrayGeometry = ArrayGeometry()) -> CardioidSet:
    """Four cardioids from channels ``[left-front, left-back, right-front, right-back]``."""
    if mics.channel_count != 4:
        raise ValueError(f"expected 4 microphone channels, got {mics.channel_count}")
    tau = geom.delay_samples(mics.sample_rate)
    if tau >= MAX_DELAY_SAMPLES:
        raise GeometryError(f"inter-mic delay of {tau:.2f} samples is implausible")
    lf, lb, rf, rb = mics.samples
    return CardioidSet(
        front_left=lf - delay_signal(lb, tau),
        front_right=rf - delay_signal(rb, tau),
        back_left=lb - delay_signal(lf, tau),
        back_right=rb - delay_signal(rf, tau),
        sample_rate=mics.sample_rate,
    )
