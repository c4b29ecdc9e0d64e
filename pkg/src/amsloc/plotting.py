"""Report figures written next to the CSV outputs (non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def figsize(scale: float = 1.0, ratio: float = (np.sqrt(5) - 1) / 2) -> tuple[float, float]:
    width = 6.0 * scale
    return width, width * ratio


def new_figure(scale=1.0, nrows=1, ncols=1, ratio=None, **kw):
    with plt.rc_context(STYLE):
        size = figsize(scale) if ratio is None else figsize(scale, ratio)
        return plt.subplots(nrows, ncols, figsize=size, **kw)


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_histogram(hist, estimate=None, truth=None, path=None, title=None):
    """72-bin vote histogram as bars, with optional estimate and truth markers."""
    fig, ax = new_figure(1.0)
    centers = hist.bin_centers()
    ax.bar(centers, hist.counts, width=4.5, color="0.6", edgecolor="none", label="votes")
    if estimate is not None:
        ax.axvline(estimate.azimuth_deg, color="C3", lw=1.2, label=f"estimate {estimate.azimuth_deg:.1f}°")
    if truth is not None:
        ax.axvline(truth, color="C0", ls="--", lw=1.2, label=f"truth {truth:.1f}°")
    ax.set_xlim(0, 360)
    ax.set_xticks(np.arange(0, 361, 45))
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("votes")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, loc="upper right")
    return save(fig, path) if path else fig


def plot_evaluation(report, path=None):
    """Estimate versus truth (left) and signed error per recording (right)."""
    rows = report.succeeded
    truth = np.array([r.truth_deg for r in rows])
    est = np.array([r.estimate_deg for r in rows])
    err = np.array([r.signed_error_deg for r in rows])
    fig, (a, b) = new_figure(1.3, 1, 2, ratio=0.42)
    a.plot([0, 360], [0, 360], color="0.7", lw=0.8)
    a.scatter(truth, est, s=12, color="C0")
    a.set_xlim(0, 360)
    a.set_ylim(0, 360)
    a.set_xlabel("true azimuth (deg)")
    a.set_ylabel("estimated azimuth (deg)")
    a.set_aspect("equal")
    b.axhline(0, color="0.7", lw=0.8)
    b.vlines(np.arange(len(err)), 0, err, color="C0", lw=1.5)
    b.set_xlabel("recording")
    b.set_ylabel("signed error (deg)")
    b.set_title(f"MAE {report.mae:.2f}°")
    return save(fig, path) if path else fig


def plot_convergence(result, path=None):
    """Objective value per MBO evaluation and the running incumbent."""
    errors = np.array([e for _, e in result.history])
    fig, ax = new_figure(1.0)
    it = np.arange(1, len(errors) + 1)
    ax.plot(it, errors, "o", ms=3, color="0.6", label="evaluation")
    ax.step(it, result.incumbent_trace, where="post", color="C3", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("objective")
    ax.legend(frameon=False)
    return save(fig, path) if path else fig


def plot_rtf(report, path=None):
    """Grouped bars of pipeline and MUSIC real-time factors per recording."""
    ids = [r.recording_id for r in report.rows]
    x = np.arange(len(ids))
    fig, ax = new_figure(1.0)
    ax.bar(x - 0.2, [r.pipeline_rtf for r in report.rows], 0.4, label="AMS + LDA", color="C0")
    ax.bar(x + 0.2, [r.music_rtf for r in report.rows], 0.4, label="MUSIC", color="C1")
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=45, ha="right")
    ax.set_ylabel("real-time factor")
    ax.legend(frameon=False)
    return save(fig, path) if path else fig
