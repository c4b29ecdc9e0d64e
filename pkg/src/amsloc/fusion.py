"""Vote pooling over 72 five-degree bins and the top-2 circular average."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classification import BIN_WIDTH_DEG, GRIDS, N_BINS
from .errors import NoDataError


@dataclass
class AzimuthHistogram:
    counts: np.ndarray = field(default_factory=lambda: np.zeros(N_BINS, dtype=np.int64))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_BINS,) or np.any(self.counts < 0):
            raise ValueError("counts must be 72 nonnegative integers")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @staticmethod
    def bin_centers() -> np.ndarray:
        return np.arange(N_BINS) * BIN_WIDTH_DEG + BIN_WIDTH_DEG / 2

    def __add__(self, other: "AzimuthHistogram") -> "AzimuthHistogram":
        return AzimuthHistogram(self.counts + other.counts)


@dataclass(frozen=True)
class AzimuthEstimate:
    azimuth_deg: float
    confidence: float


def accumulate(hist: AzimuthHistogram, predictions) -> AzimuthHistogram:
    """Add one vote to each of the six bins inside every predicted class arc."""
    counts = hist.counts.copy()
    for set_index, class_index in predictions:
        np.add.at(counts, GRIDS[set_index].bins(class_index), 1)
    return AzimuthHistogram(counts)


def _top_two(counts: np.ndarray) -> tuple[int, int]:
    levels = np.unique(counts)[::-1]
    top = np.flatnonzero(counts == levels[0])
    if len(top) >= 2:
        tied = set(top.tolist())
        for i in top:
            if (i + 1) % N_BINS in tied:
                return int(i), int((i + 1) % N_BINS)
        return int(top[0]), int(top[1])
    first = int(top[0])
    if len(levels) < 2:
        return first, first
    runners = np.flatnonzero(counts == levels[1])
    for j in runners:
        if (j - first) % N_BINS in (1, N_BINS - 1):
            return first, int(j)
    return first, int(runners[0])


def circular_mean_deg(angles) -> float:
    rad = np.deg2rad(np.asarray(angles, dtype=np.float64))
    s, c = np.sin(rad).sum(), np.cos(rad).sum()
    if np.hypot(s, c) < 1e-12:
        # diametrically opposed pair: take the bisector 90 degrees past the first angle
        return float((np.asarray(angles, dtype=np.float64)[0] + 90.0) % 360.0)
    return float(np.rad2deg(np.arctan2(s, c)) % 360.0)


def estimate_azimuth(hist: AzimuthHistogram) -> AzimuthEstimate:
    """Circular mean of the centers of the two most-voted bins.

    Ties prefer a circularly adjacent pair among the tied bins, then the
    lowest bin index.
    """
    if hist.total <= 0:
        raise NoDataError("histogram holds no votes")
    a, b = _top_two(hist.counts)
    centers = hist.bin_centers()
    azimuth = circular_mean_deg([centers[a], centers[b]])
    votes = hist.counts[a] + (hist.counts[b] if b != a else 0)
    # 360 - tiny rounds back to 360.0 in float arithmetic
    return AzimuthEstimate(azimuth if azimuth < 360.0 else 0.0, votes / hist.total)


def signed_circular_error(estimate_deg, truth_deg):
    """``estimate - truth`` wrapped into (-180, 180]."""
    d = np.mod(np.asarray(estimate_deg, dtype=np.float64) - truth_deg, 360.0)
    d = np.where(d > 180.0, d - 360.0, d)
    return float(d) if d.ndim == 0 else d


def mean_absolute_error(signed_errors) -> float:
    return float(np.mean(np.abs(np.asarray(signed_errors, dtype=np.float64))))
