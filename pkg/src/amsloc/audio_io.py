"""Multichannel WAV I/O, rational-ratio decimation and fixed-length framing."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import EmptyResultError, FormatError, UnsupportedFormatError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# hearing-aid channel order used everywhere downstream
CHANNEL_ORDER = ("left_front", "left_back", "right_front", "right_back")


@dataclass(frozen=True, eq=False)
class MultichannelAudio:
    """Sampled audio stored as a ``(channels, samples)`` float64 array."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("samples must be a (channels, n) array")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", x)

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class FramerConfig:
    frame_length_s: float = 2.0
    hop_length_s: float = 2.0

    def __post_init__(self):
        if not 0 < self.hop_length_s <= self.frame_length_s:
            raise ValueError("need 0 < hop_length_s <= frame_length_s")


def _parse_chunks(data: bytes, path) -> dict[bytes, bytes]:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    chunks = {}
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise FormatError(f"{path}: chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    if b"fmt " not in chunks:
        raise FormatError(f"{path}: missing fmt chunk")
    if b"data" not in chunks:
        raise FormatError(f"{path}: missing data chunk")
    return chunks


def read_wav(path) -> MultichannelAudio:
    """Read a PCM16 or float32 RIFF/WAVE file with 1 to 8 channels.

    PCM16 values are divided by 32768 so that the output lies in [-1, 1).
    """
    data = Path(path).read_bytes()
    chunks = _parse_chunks(data, path)
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise FormatError(f"{path}: fmt chunk too short")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise FormatError(f"{path}: extensible fmt chunk too short")
        tag = struct.unpack("<H", fmt[24:26])[0]
    if not 1 <= channels <= 8:
        raise UnsupportedFormatError(f"{path}: {channels} channels not supported")
    if rate == 0:
        raise FormatError(f"{path}: zero sample rate")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormatError(f"{path}: format tag {tag:#x} with {bits} bits not supported")
    if block_align != channels * dtype.itemsize:
        raise FormatError(f"{path}: inconsistent block alignment {block_align}")

    raw = chunks[b"data"]
    n = len(raw) // block_align
    x = np.frombuffer(raw[:n * block_align], dtype=dtype).reshape(n, channels)
    return MultichannelAudio(x.T.astype(np.float64) * scale, float(rate))


def write_wav(path, audio: MultichannelAudio, encoding: str = "float32") -> None:
    """Write ``audio`` as PCM16 (``encoding="pcm16"``) or float32."""
    rate = int(round(audio.sample_rate))
    if rate != audio.sample_rate:
        raise ValueError("WAV files need an integer sample rate")
    x = audio.samples.T
    if encoding == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif encoding == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    ch = audio.channel_count
    block = ch * bits // 8
    fmt = struct.pack("<HHIIHH", tag, ch, rate, rate * block, block, bits)
    body = (b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
            + b"data" + struct.pack("<I", len(payload)) + payload)
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


@lru_cache(maxsize=8)
def _antialias_fir(up: int, down: int, target_rate: float) -> np.ndarray:
    # designed at the upsampled rate; passband to 0.45*target, >=60 dB from target/2
    fs_up = target_rate * down  # == source_rate * up
    nyq = fs_up / 2.0
    cutoff = 0.45 * target_rate
    stop = 0.5 * target_rate
    numtaps, beta = signal.kaiserord(65.0, (stop - cutoff) / nyq)
    numtaps |= 1
    return signal.firwin(numtaps, (cutoff + stop) / 2.0, window=("kaiser", beta), fs=fs_up)


def decimate(audio: MultichannelAudio, target_rate: float) -> MultichannelAudio:
    """Reduce the sample rate by a rational factor with a linear-phase FIR.

    48 kHz to 20 kHz uses up=5, down=12. The filter is zero-phase after
    delay compensation, so all channels stay sample-aligned.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate > audio.sample_rate:
        raise ValueError("decimate cannot increase the sample rate")
    if target_rate == audio.sample_rate:
        return MultichannelAudio(audio.samples.copy(), audio.sample_rate)
    ratio = Fraction(target_rate / audio.sample_rate).limit_denominator(1000)
    up, down = ratio.numerator, ratio.denominator
    h = _antialias_fir(up, down, float(target_rate))
    y = signal.resample_poly(audio.samples, up, down, axis=1, window=h)
    return MultichannelAudio(y, float(target_rate))


def frame_signal(audio: MultichannelAudio, cfg: FramerConfig = FramerConfig()) -> list[MultichannelAudio]:
    """Cut ``audio`` into frames of ``round(frame_length_s * rate)`` samples.

    A trailing remainder shorter than one frame is dropped.
    """
    frame_len = int(round(cfg.frame_length_s * audio.sample_rate))
    hop = int(round(cfg.hop_length_s * audio.sample_rate))
    if audio.n_samples < frame_len:
        raise EmptyResultError(
            f"audio of {audio.duration:.3f} s is shorter than one {cfg.frame_length_s} s frame")
    n_frames = 1 + (audio.n_samples - frame_len) // hop
    return [MultichannelAudio(audio.samples[:, i * hop:i * hop + frame_len], audio.sample_rate)
            for i in range(n_frames)]
