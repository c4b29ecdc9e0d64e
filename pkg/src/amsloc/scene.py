"""Synthetic binaural training scenes from a parametric spherical head.

Each microphone sits on a rigid sphere. Its signal is the source delayed by
the Woodworth path to that point and passed through a first-order
head-shadow shelf whose 8 kHz attenuation grows with the angle between
source and microphone (0 dB facing, 20 dB opposite).
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import fft, signal

from .audio_io import MultichannelAudio, decimate, read_wav, write_wav

log = logging.getLogger(__name__)

PROCESSING_RATE = 20000.0
SNR_GRID_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
N_SPEAKERS = 3
NOISE_TYPES = ("white", "pink", "babble")
SHADOW_MAX_DB = 20.0
SHADOW_REF_HZ = 8000.0
SHADOW_CORNER_HZ = 500.0
DIFFUSE_COHERENT_BELOW_HZ = 500.0
SOURCE_RMS = 0.05
MANIFEST_FIELDS = ("path", "azimuth_deg", "snr_db", "noise_type", "speaker_id", "seed", "generator")

# (f0 Hz, formant scale) per synthetic speaker
SPEAKERS = ((115.0, 1.0), (185.0, 1.12), (230.0, 1.2))
# F1, F2, F3 for a handful of vowels
VOWELS = ((730, 1090, 2440), (270, 2290, 3010), (530, 1840, 2480), (570, 840, 2410), (300, 870, 2240))


@dataclass(frozen=True)
class HeadModel:
    head_radius_m: float = 0.0875
    ear_azimuth_deg: float = 100.0
    mic_offset_m: float = 0.0075
    speed_of_sound_mps: float = 343.0

    def __post_init__(self):
        if self.head_radius_m <= 0 or self.speed_of_sound_mps <= 0:
            raise ValueError("head radius and speed of sound must be positive")
        if self.mic_offset_m <= 0:
            raise ValueError("front and back microphones must be distinct")

    def mic_azimuths_deg(self) -> np.ndarray:
        """Angular positions of [left-front, left-back, right-front, right-back]."""
        d = np.rad2deg(self.mic_offset_m / self.head_radius_m)
        e = self.ear_azimuth_deg
        return np.array([e - d, e + d, -e + d, -e - d]) % 360.0

    def mic_positions_m(self) -> np.ndarray:
        """``(4, 2)`` x (front) / y (left) coordinates on the head circle."""
        phi = np.deg2rad(self.mic_azimuths_deg())
        return self.head_radius_m * np.stack([np.cos(phi), np.sin(phi)], axis=1)

    def incidence_angles(self, azimuth_deg: float) -> np.ndarray:
        """Great-circle angle in radians between the source direction and each mic."""
        diff = np.abs((self.mic_azimuths_deg() - azimuth_deg + 180.0) % 360.0 - 180.0)
        return np.deg2rad(diff)

    def mic_delays_s(self, azimuth_deg: float) -> np.ndarray:
        """Woodworth arrival time of each mic relative to the head center."""
        alpha = self.incidence_angles(azimuth_deg)
        r_c = self.head_radius_m / self.speed_of_sound_mps
        return np.where(alpha <= np.pi / 2, -r_c * np.cos(alpha), r_c * (alpha - np.pi / 2))

    def shadow_response(self, azimuth_deg: float, freqs: np.ndarray) -> np.ndarray:
        """Magnitude of the first-order shelf ``(beta*s + wc) / (s + wc)`` per mic, ``(4, n_freqs)``.

        Applied with zero phase so that arrival times stay the Woodworth delays.
        """
        alpha = self.incidence_angles(azimuth_deg)
        atten_db = SHADOW_MAX_DB * (1.0 - np.cos(alpha)) / 2.0
        g = 10.0 ** (-atten_db / 20.0)
        w_ref = 2 * np.pi * SHADOW_REF_HZ
        wc = 2 * np.pi * SHADOW_CORNER_HZ
        beta = np.sqrt(g ** 2 * (w_ref ** 2 + wc ** 2) - wc ** 2) / w_ref
        s = 2j * np.pi * np.asarray(freqs)[np.newaxis, :]
        return np.abs((beta[:, np.newaxis] * s + wc) / (s + wc))


@dataclass(frozen=True)
class SceneSpec:
    azimuth_deg: float
    snr_db: float = 20.0
    speech_source: str = "synth:0"
    noise_type: str = "white"
    duration_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.azimuth_deg < 360 or self.azimuth_deg % 5 != 0:
            raise ValueError(f"azimuth {self.azimuth_deg} is not on the 5-degree grid")
        if self.noise_type not in NOISE_TYPES + ("silence",):
            raise ValueError(f"unknown noise type {self.noise_type!r}")
        if self.duration_s <= 2.0:
            raise ValueError("scene must be longer than one 2 s analysis frame")


def _syllable_track(n: int, fs: float, rng: np.random.Generator):
    """Per-sample syllable envelope, vowel index and voicing flag (about 4 syllables/s)."""
    env = np.zeros(n)
    vowel = np.zeros(n, dtype=int)
    voiced = np.zeros(n, dtype=bool)
    pos = int(rng.uniform(0.05, 0.2) * fs)
    while pos < n:
        length = int(rng.uniform(0.15, 0.35) * fs)
        stop = min(n, pos + length)
        if rng.random() > 0.15:  # otherwise a pause
            shape = np.sin(np.pi * np.arange(stop - pos) / length) ** 2
            env[pos:stop] = rng.uniform(0.4, 1.0) * shape
            vowel[pos:stop] = rng.integers(len(VOWELS))
            voiced[pos:stop] = rng.random() < 0.8
        pos = stop
    return env, vowel, voiced


def synth_speech(duration_s: float, fs: float, speaker: int, rng: np.random.Generator) -> np.ndarray:
    """Speech-like signal: pulse/noise excitation through vowel formants, 4 Hz syllabic envelope."""
    n = int(round(duration_s * fs))
    f0, scale = SPEAKERS[speaker % len(SPEAKERS)]
    t = np.arange(n) / fs
    f0_track = f0 * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi)))
    phase = np.cumsum(f0_track / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0) * np.sqrt(fs / f0)
    noise = rng.standard_normal(n)
    env, vowel, voiced = _syllable_track(n, fs, rng)
    excitation = np.where(voiced, pulses + 0.05 * noise, noise)

    out = np.zeros(n)
    for v, formants in enumerate(VOWELS):
        mask = vowel == v
        if not mask.any():
            continue
        voiced_part = np.zeros(n)
        for k, f in enumerate(formants):
            fc = min(f * scale, 0.45 * fs)
            b, a = signal.iirpeak(fc, fc / (80.0 + 40.0 * k), fs=fs)
            voiced_part += 0.5 ** k * signal.lfilter(b, a, excitation)
        out += mask * voiced_part
    out *= env
    # fixed speech-band emphasis
    out = signal.sosfilt(signal.butter(2, [80.0, 7000.0], btype="bandpass", fs=fs, output="sos"), out)
    rms = np.sqrt(np.mean(out ** 2))
    return out / rms if rms > 0 else out


def _load_speech(path: str, duration_s: float, fs: float) -> np.ndarray:
    audio = read_wav(path)
    if audio.sample_rate > fs:
        audio = decimate(audio, fs)
    elif audio.sample_rate != fs:
        raise ValueError(f"{path}: sample rate {audio.sample_rate} is below {fs}")
    x = audio.samples[0]
    n = int(round(duration_s * fs))
    x = np.resize(x, n)  # loops short clips
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _base_noise(kind: str, n: int, fs: float, rng: np.random.Generator, count: int) -> np.ndarray:
    if kind == "babble":
        talkers = sum(synth_speech(n / fs, fs, int(rng.integers(N_SPEAKERS)), rng) for _ in range(8))
        # circularly shifted copies of one babble track are mutually uncorrelated
        shifts = rng.permutation(np.arange(1, 10))[:count] * n // 10
        return np.stack([np.roll(talkers, s) for s in shifts])
    x = rng.standard_normal((count, n))
    if kind == "pink":
        spec = fft.rfft(x, axis=1)
        f = fft.rfftfreq(n, 1 / fs)
        spec /= np.sqrt(np.maximum(f, 20.0))
        x = fft.irfft(spec, n, axis=1)
    return x


def diffuse_noise(kind: str, n: int, fs: float, rng: np.random.Generator, channels: int = 4) -> np.ndarray:
    """Noise that is common to all mics below 500 Hz and independent above."""
    base = _base_noise(kind, n, fs, rng, channels + 1)
    spec = fft.rfft(base, axis=1)
    low = fft.rfftfreq(n, 1 / fs) < DIFFUSE_COHERENT_BELOW_HZ
    mics = spec[1:].copy()
    mics[:, low] = spec[0, low]
    return fft.irfft(mics, n, axis=1)


def spatialize(source: np.ndarray, azimuth_deg: float, head: HeadModel, fs: float) -> np.ndarray:
    """Four mic signals for a far-field source; exact fractional delays in the frequency domain."""
    n = len(source)
    nfft = fft.next_fast_len(n + 64)
    freqs = fft.rfftfreq(nfft, 1 / fs)
    spec = fft.rfft(source, nfft)
    delays = head.mic_delays_s(azimuth_deg)
    h = head.shadow_response(azimuth_deg, freqs) * np.exp(-2j * np.pi * freqs * delays[:, np.newaxis])
    return fft.irfft(spec * h, nfft, axis=1)[:, :n]


def _power(x: np.ndarray) -> float:
    return float(np.mean(x ** 2))


def render_direction(spec: SceneSpec, head: HeadModel = HeadModel(),
                     sample_rate: float = PROCESSING_RATE) -> MultichannelAudio:
    """Render a 4-channel scene ``[left-front, left-back, right-front, right-back]``.

    Noise is scaled so that mean speech power over mean noise power across
    the four mics equals ``snr_db`` over the whole file.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.speech_source.startswith("synth:"):
        source = synth_speech(spec.duration_s, sample_rate, int(spec.speech_source[6:]), rng)
    else:
        source = _load_speech(spec.speech_source, spec.duration_s, sample_rate)
    speech = spatialize(SOURCE_RMS * source, spec.azimuth_deg, head, sample_rate)
    if spec.noise_type == "silence":
        return MultichannelAudio(speech, sample_rate)
    noise = diffuse_noise(spec.noise_type, speech.shape[1], sample_rate, rng)
    gain = np.sqrt(_power(speech) / (_power(noise) * 10.0 ** (spec.snr_db / 10.0)))
    return MultichannelAudio(speech + gain * noise, sample_rate)


def corpus_specs(files_per_direction: int = 18, seed: int = 0, duration_s: float = 10.0,
                 azimuths=None) -> list[SceneSpec]:
    """Scene list: speaker ``i // 6``, SNR ``SNR_GRID_DB[i % 6]``, noise type rotating with file and azimuth."""
    specs = []
    azimuths = np.arange(0, 360, 5) if azimuths is None else azimuths
    for a in azimuths:
        a_idx = int(a) // 5
        for i in range(files_per_direction):
            file_seed = int(np.random.SeedSequence([seed, a_idx, i]).generate_state(1)[0])
            specs.append(SceneSpec(
                azimuth_deg=float(a),
                snr_db=SNR_GRID_DB[i % len(SNR_GRID_DB)],
                speech_source=f"synth:{(i // len(SNR_GRID_DB)) % N_SPEAKERS}",
                noise_type=NOISE_TYPES[(i + a_idx) % len(NOISE_TYPES)],
                duration_s=duration_s,
                seed=file_seed,
            ))
    return specs


def _render_to_file(args):
    spec, head, path = args
    write_wav(path, render_direction(spec, head), encoding="float32")
    return path


def render_corpus(out_dir, head: HeadModel = HeadModel(), files_per_direction: int = 18,
                  seed: int = 0, duration_s: float = 10.0, workers: int = 1) -> Path:
    """Render ``72 * files_per_direction`` WAV files and write ``manifest.csv``.

    Returns the manifest path. On an I/O failure the manifest and every file
    written so far are removed before the error propagates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = corpus_specs(files_per_direction, seed, duration_s)
    jobs = [(s, head, out_dir / f"az{int(s.azimuth_deg):03d}_{i % files_per_direction:02d}.wav")
            for i, s in enumerate(specs)]
    manifest = out_dir / "manifest.csv"
    written = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for path in pool.map(_render_to_file, jobs, chunksize=8):
                    written.append(path)
        else:
            for job in jobs:
                written.append(_render_to_file(job))
        with open(manifest, "w", newline="") as fh:
            writer = csv.DictWriter(fh, MANIFEST_FIELDS)
            writer.writeheader()
            for spec, _, path in jobs:
                writer.writerow({
                    "path": path.name,
                    "azimuth_deg": spec.azimuth_deg,
                    "snr_db": spec.snr_db,
                    "noise_type": spec.noise_type,
                    "speaker_id": spec.speech_source,
                    "seed": spec.seed,
                    "generator": "synth-formant-v1" if spec.speech_source.startswith("synth:") else "file",
                })
    except OSError:
        manifest.unlink(missing_ok=True)
        for path in written:
            Path(path).unlink(missing_ok=True)
        raise
    log.info("rendered %d files into %s", len(jobs), out_dir)
    return manifest


def read_manifest(path) -> list[dict]:
    """Rows of a manifest CSV with paths resolved relative to the manifest."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        p = Path(row["path"])
        row["path"] = str(p if p.is_absolute() else path.parent / p)
        row["azimuth_deg"] = float(row["azimuth_deg"])
        if row.get("snr_db") not in (None, ""):
            row["snr_db"] = float(row["snr_db"])
    return rows


def spec_dict(spec: SceneSpec) -> dict:
    return asdict(spec)
