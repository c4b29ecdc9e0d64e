"""End-to-end localization, set evaluation, RTF benchmarking and the tuning objective."""
from __future__ import annotations

import csv
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import MultichannelAudio, read_wav
from .classification import LdaEnsemble, train_ensemble
from .errors import AmslocError, CompatibilityError, EmptyResultError
from .features import FilterbankConfig
from .fusion import (AzimuthEstimate, AzimuthHistogram, accumulate, estimate_azimuth,
                     mean_absolute_error, signed_circular_error)
from .music import SteeringGrid, music_localize
from .pipeline import FeaturePipeline
from .scene import HeadModel, SceneSpec, render_direction

log = logging.getLogger(__name__)


def hardware_note() -> str:
    return (f"{platform.machine()} {platform.processor() or 'cpu'} x{os.cpu_count()}, "
            f"python {platform.python_version()}, {platform.system()}")


def build_training_set(specs: list[SceneSpec], pipeline: FeaturePipeline,
                       head: HeadModel = HeadModel()):
    """Render scenes in memory; returns ``(features (n, 36), azimuths (n,))``."""
    feats, az = [], []
    for spec in specs:
        frames = pipeline.features(render_direction(spec, head, pipeline.processing_rate))
        feats.extend(f.values for f in frames)
        az.extend([spec.azimuth_deg] * len(frames))
    return np.asarray(feats), np.asarray(az)


def features_from_manifest(rows: list[dict], pipeline: FeaturePipeline):
    """Features of every manifest recording; returns ``(features, azimuths, recording_ids)``."""
    feats, az, ids = [], [], []
    for row in rows:
        frames = pipeline.features(read_wav(row["path"]))
        feats.extend(f.values for f in frames)
        az.extend([row["azimuth_deg"]] * len(frames))
        ids.extend([Path(row["path"]).stem] * len(frames))
    return np.asarray(feats), np.asarray(az), ids


def train_model(features, azimuths, pipeline: FeaturePipeline, seed: int = 0,
                repeats: int = 5, folds: int = 4) -> LdaEnsemble:
    return train_ensemble(features, azimuths, repeats=repeats, folds=folds, seed=seed,
                          pipeline=pipeline.to_dict(), config_hash=pipeline.config_hash())


@dataclass
class LocalizationResult:
    estimate: AzimuthEstimate
    histogram: AzimuthHistogram
    n_frames: int
    compute_s: float
    duration_s: float

    @property
    def rtf(self) -> float:
        return self.compute_s / self.duration_s


def localize(ensemble: LdaEnsemble, audio: MultichannelAudio) -> LocalizationResult:
    """Decimate, beamform, frame, extract, predict and pool one recording."""
    if audio.n_samples == 0:
        raise EmptyResultError("recording is empty")
    pipeline = FeaturePipeline.from_dict(ensemble.pipeline)
    start = time.perf_counter()
    frames = pipeline.features(audio)
    hist = AzimuthHistogram()
    if any(f.config_hash != ensemble.config_hash for f in frames):
        raise CompatibilityError("recording features do not match the model's pipeline")
    predictions = ensemble.predict(np.stack([f.values for f in frames]))
    sets = ensemble.set_indices
    for row in predictions:
        hist = accumulate(hist, zip(sets, row))
    estimate = estimate_azimuth(hist)
    elapsed = time.perf_counter() - start
    return LocalizationResult(estimate, hist, len(frames), elapsed, audio.duration)


def run_localize(model_file, recording) -> LocalizationResult:
    """Load a model file and a 4-channel WAV, localize; timing excludes file loading."""
    return localize(LdaEnsemble.load(model_file), read_wav(recording))


@dataclass
class EvaluationRow:
    recording_id: str
    truth_deg: float
    estimate_deg: float = float("nan")
    signed_error_deg: float = float("nan")
    confidence: float = float("nan")
    rtf: float = float("nan")
    status: str = "ok"


@dataclass
class EvaluationReport:
    rows: list = field(default_factory=list)
    hardware: str = field(default_factory=hardware_note)

    @property
    def succeeded(self) -> list:
        return [r for r in self.rows if r.status == "ok"]

    @property
    def failed(self) -> bool:
        return len(self.succeeded) != len(self.rows)

    @property
    def signed_errors(self) -> np.ndarray:
        return np.array([r.signed_error_deg for r in self.succeeded])

    @property
    def mae(self) -> float:
        return mean_absolute_error(self.signed_errors) if self.succeeded else float("nan")

    @property
    def mean_rtf(self) -> float:
        return float(np.mean([r.rtf for r in self.succeeded])) if self.succeeded else float("nan")

    def fraction_within(self, tol_deg: float) -> float:
        return float(np.mean(np.abs(self.signed_errors) <= tol_deg))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["recording_id", "truth_deg", "estimate_deg", "signed_error_deg",
                        "confidence", "rtf", "status"])
            for r in self.rows:
                w.writerow([r.recording_id, r.truth_deg, f"{r.estimate_deg:.2f}",
                            f"{r.signed_error_deg:+.2f}", f"{r.confidence:.4f}", f"{r.rtf:.4f}", r.status])
            w.writerow(["MAE", "", "", f"{self.mae:.2f}", "", f"{self.mean_rtf:.4f}",
                        "warning: failures excluded" if self.failed else "ok"])

    def table(self) -> str:
        lines = [f"{'recording':<24}{'truth':>8}{'estimate':>10}{'error':>9}{'RTF':>8}  status"]
        for r in self.rows:
            lines.append(f"{r.recording_id:<24}{r.truth_deg:>8.1f}{r.estimate_deg:>10.2f}"
                         f"{r.signed_error_deg:>+9.2f}{r.rtf:>8.3f}  {r.status}")
        lines.append(f"{'MAE':<24}{'':>8}{'':>10}{self.mae:>9.2f}{self.mean_rtf:>8.3f}")
        lines.append(f"hardware: {self.hardware}")
        return "\n".join(lines)


def report_from_errors(signed_errors, recording_ids=None) -> EvaluationReport:
    """Report over given signed errors (used to check the MAE arithmetic)."""
    ids = recording_ids or [str(i) for i in range(len(signed_errors))]
    return EvaluationReport([EvaluationRow(i, 0.0, e % 360.0, float(e)) for i, e in zip(ids, signed_errors)])


def evaluate_set(ensemble: LdaEnsemble, recordings: list[dict]) -> EvaluationReport:
    """Localize every ``{"path", "azimuth_deg"}`` row; failing rows are kept and flagged."""
    if not recordings:
        raise ValueError("evaluation set is empty")
    report = EvaluationReport()
    for row in recordings:
        rid = row.get("recording_id") or Path(row["path"]).stem
        truth = float(row["azimuth_deg"])
        try:
            audio = row["audio"] if "audio" in row else read_wav(row["path"])
            res = localize(ensemble, audio)
        except (OSError, AmslocError, ValueError) as exc:
            log.warning("%s failed: %s", rid, exc)
            report.rows.append(EvaluationRow(rid, truth, status=f"failed: {exc}"))
            continue
        est = res.estimate
        report.rows.append(EvaluationRow(rid, truth, est.azimuth_deg,
                                         signed_circular_error(est.azimuth_deg, truth),
                                         est.confidence, res.rtf))
    return report


def write_estimates(path, rows: list[tuple[str, list, AzimuthEstimate]]) -> None:
    """Estimates CSV: the pooled estimate repeated at every requested timestamp."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["recording_id", "timestamp_s", "azimuth_deg", "confidence"])
        for rid, stamps, est in rows:
            for t in stamps:
                w.writerow([rid, f"{t:.3f}", f"{est.azimuth_deg:.2f}", f"{est.confidence:.4f}"])


def _median_time(fn, runs: int) -> float:
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


@dataclass
class BenchmarkRow:
    recording_id: str
    duration_s: float
    pipeline_rtf: float
    music_rtf: float

    @property
    def speedup(self) -> float:
        return self.music_rtf / self.pipeline_rtf


@dataclass
class BenchmarkReport:
    rows: list
    runs: int
    hardware: str = field(default_factory=hardware_note)

    @property
    def mean_pipeline_rtf(self) -> float:
        return float(np.mean([r.pipeline_rtf for r in self.rows]))

    @property
    def mean_music_rtf(self) -> float:
        return float(np.mean([r.music_rtf for r in self.rows]))

    @property
    def speedup(self) -> float:
        return self.mean_music_rtf / self.mean_pipeline_rtf

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["recording_id", "duration_s", "pipeline_rtf", "music_rtf", "speedup"])
            for r in self.rows:
                w.writerow([r.recording_id, f"{r.duration_s:.2f}", f"{r.pipeline_rtf:.5f}",
                            f"{r.music_rtf:.5f}", f"{r.speedup:.2f}"])
            w.writerow(["mean", "", f"{self.mean_pipeline_rtf:.5f}", f"{self.mean_music_rtf:.5f}",
                        f"{self.speedup:.2f}"])

    def table(self) -> str:
        lines = [f"{'recording':<24}{'pipeline RTF':>14}{'MUSIC RTF':>12}{'speedup':>9}"]
        for r in self.rows:
            lines.append(f"{r.recording_id:<24}{r.pipeline_rtf:>14.4f}{r.music_rtf:>12.4f}{r.speedup:>9.2f}")
        lines.append(f"{'mean':<24}{self.mean_pipeline_rtf:>14.4f}{self.mean_music_rtf:>12.4f}"
                     f"{self.speedup:>9.2f}")
        lines.append(f"median of {self.runs} runs per recording; hardware: {self.hardware}")
        return "\n".join(lines)


def run_benchmark(ensemble: LdaEnsemble, recordings: list, runs: int = 3,
                  head: HeadModel = HeadModel()) -> BenchmarkReport:
    """Median-of-``runs`` RTF of the AMS pipeline and of MUSIC on the same audio.

    ``recordings`` holds WAV paths or ``(recording_id, MultichannelAudio)`` pairs.
    """
    if not recordings:
        raise ValueError("benchmark needs at least one recording")
    rows = []
    for item in recordings:
        rid, audio = (Path(item).stem, read_wav(item)) if isinstance(item, (str, Path)) else item
        grid = SteeringGrid.for_head(head, sample_rate=audio.sample_rate)
        t_pipe = _median_time(lambda: localize(ensemble, audio), runs)
        t_music = _median_time(lambda: music_localize(audio, grid), runs)
        rows.append(BenchmarkRow(rid, audio.duration, t_pipe / audio.duration, t_music / audio.duration))
    return BenchmarkReport(rows, runs)


class TuningObjective:
    """Mean held-out misclassification of the 6 x 20 CV models for a filterbank.

    Cardioid frames are computed once; each call only re-runs the filterbanks.
    """

    def __init__(self, frames, azimuths, pipeline: FeaturePipeline, seed: int = 0,
                 repeats: int = 5, folds: int = 4):
        self.frames = frames
        self.azimuths = np.asarray(azimuths)
        self.pipeline = pipeline
        self.seed = seed
        self.repeats = repeats
        self.folds = folds

    @classmethod
    def from_recordings(cls, audios_and_azimuths, pipeline: FeaturePipeline, **kw) -> "TuningObjective":
        frames, az = [], []
        for audio, azimuth in audios_and_azimuths:
            f = pipeline.cardioid_frames(audio)
            frames.extend(f)
            az.extend([azimuth] * len(f))
        return cls(frames, az, pipeline, **kw)

    def __call__(self, filterbank: FilterbankConfig) -> float:
        feats = self.pipeline.frames_to_features(self.frames, filterbank)
        x = np.stack([f.values for f in feats])
        ens = train_ensemble(x, self.azimuths, self.repeats, self.folds, self.seed)
        return ens.cv_error
