"""Shifted 30-degree azimuth grids and the cross-validated LDA ensemble."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, DegenerateDataError, TrainingError
from .features import FeatureFrame

N_SETS = 6
N_CLASSES = 12
CLASS_WIDTH_DEG = 30.0
SHIFT_DEG = 5.0
N_BINS = 72
BIN_WIDTH_DEG = 5.0
GRID_VERSION = "edge-aligned-v1"  # class j of set k starts at 30*j + 5*k
CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class ClassGrid:
    set_index: int

    def __post_init__(self):
        if not 0 <= self.set_index < N_SETS:
            raise ValueError(f"set_index must be in 0..{N_SETS - 1}")

    @property
    def shift_deg(self) -> float:
        return SHIFT_DEG * self.set_index

    @property
    def class_width_deg(self) -> float:
        return CLASS_WIDTH_DEG

    def arc(self, class_index: int) -> tuple[float, float]:
        """Start and end of a class arc in degrees; the end may exceed 360."""
        start = CLASS_WIDTH_DEG * class_index + self.shift_deg
        return start, start + CLASS_WIDTH_DEG

    def bins(self, class_index: int) -> np.ndarray:
        """Indices of the six 5-degree histogram bins covered by a class."""
        first = 6 * class_index + self.set_index
        return (first + np.arange(6)) % N_BINS


GRIDS = tuple(ClassGrid(k) for k in range(N_SETS))


def class_of_azimuth(azimuth_deg, grid: ClassGrid):
    """Class index ``j`` with azimuth in ``[30j + 5k, 30j + 5k + 30)`` modulo 360.

    Works elementwise on arrays.
    """
    az = np.asarray(azimuth_deg, dtype=np.float64)
    if np.any((az < 0) | (az >= 360)) or not np.all(np.isfinite(az)):
        raise ValueError(f"azimuth must lie in [0, 360): {azimuth_deg!r}")
    j = np.floor(np.mod(az - grid.shift_deg, 360.0) / CLASS_WIDTH_DEG).astype(int) % N_CLASSES
    return int(j) if j.ndim == 0 else j


def _ledoit_wolf_shrinkage(xc: np.ndarray) -> float:
    """Ledoit-Wolf shrinkage intensity toward the scaled identity for centered data."""
    n, p = xc.shape
    x2 = xc ** 2
    emp_trace = x2.sum(axis=0) / n
    mu = emp_trace.sum() / p
    beta_ = np.sum(x2.T @ x2)
    delta_ = np.sum((xc.T @ xc) ** 2) / n ** 2
    beta = (beta_ / n - delta_) / (p * n)
    delta = (delta_ - 2.0 * mu * emp_trace.sum() + p * mu ** 2) / p
    beta = min(beta, delta)
    return 0.0 if beta <= 0 else float(beta / delta)


@dataclass(frozen=True, eq=False)
class LdaModel:
    classes: np.ndarray
    class_means: np.ndarray
    pooled_covariance_inverse: np.ndarray
    class_priors: np.ndarray
    shrinkage_used: float = 0.0

    @property
    def coef(self) -> np.ndarray:
        return self.class_means @ self.pooled_covariance_inverse

    @property
    def intercept(self) -> np.ndarray:
        return -0.5 * np.einsum("ij,ij->i", self.coef, self.class_means) + np.log(self.class_priors)

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.coef.T + self.intercept

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(x), axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": self.classes.tolist(),
            "class_means": self.class_means.tolist(),
            "pooled_covariance_inverse": self.pooled_covariance_inverse.tolist(),
            "class_priors": self.class_priors.tolist(),
            "shrinkage_used": self.shrinkage_used,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LdaModel":
        return cls(np.asarray(d["classes"], dtype=int), np.asarray(d["class_means"]),
                   np.asarray(d["pooled_covariance_inverse"]), np.asarray(d["class_priors"]),
                   float(d["shrinkage_used"]))


def train_lda(features, labels) -> LdaModel:
    """Gaussian LDA with a pooled within-class covariance and equal priors.

    The covariance is shrunk toward a scaled identity (Ledoit-Wolf
    intensity, raised if needed) when its condition number exceeds 1e8.
    """
    x = np.asarray([f.values if isinstance(f, FeatureFrame) else f for f in features], dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise TrainingError("features must be (n, d) with one label per row")
    if not np.all(np.isfinite(x)):
        raise TrainingError("features contain NaN or Inf")
    classes, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    if np.any(counts < 2):
        raise TrainingError(f"classes {classes[counts < 2].tolist()} have fewer than 2 samples")
    if np.all(x == x[0]):
        raise DegenerateDataError("all feature vectors are identical")

    n, p = x.shape
    means = np.stack([x[inverse == c].mean(axis=0) for c in range(len(classes))])
    xc = x - means[inverse]
    pooled = xc.T @ xc / max(n - len(classes), 1)
    mu = np.trace(pooled) / p
    if mu <= 0:
        raise DegenerateDataError("within-class scatter is zero")

    eig = np.linalg.eigvalsh(pooled)
    lam_min, lam_max = max(eig[0], 0.0), eig[-1]
    shrinkage = 0.0
    if lam_min <= 0 or lam_max / lam_min > CONDITION_LIMIT:
        k = CONDITION_LIMIT
        needed = (lam_max - k * lam_min) / (lam_max - k * lam_min + mu * (k - 1))
        shrinkage = min(1.0, max(_ledoit_wolf_shrinkage(xc), needed * (1 + 1e-6)))
        pooled = (1 - shrinkage) * pooled + shrinkage * mu * np.eye(p)

    w, v = np.linalg.eigh(pooled)
    inv = (v / w) @ v.T
    inv = 0.5 * (inv + inv.T)
    priors = np.full(len(classes), 1.0 / len(classes))
    return LdaModel(classes.astype(int), means, inv, priors, float(shrinkage))


@dataclass(eq=False)
class LdaEnsemble:
    """6 grids x (repeats * folds) LDA models plus the pipeline settings they assume."""

    models: list  # [(set_index, replica, LdaModel)]
    pipeline: dict
    config_hash: str
    seed: int
    cv_error: float = float("nan")
    grid_version: str = GRID_VERSION
    _stack: tuple | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.models)

    @property
    def set_indices(self) -> np.ndarray:
        return np.array([k for k, _, _ in self.models])

    def _stacked(self):
        if self._stack is None:
            coef = np.stack([m.coef for _, _, m in self.models])
            intercept = np.stack([m.intercept for _, _, m in self.models])
            classes = np.stack([m.classes for _, _, m in self.models])
            self._stack = (coef, intercept, classes)
        return self._stack

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Class predictions ``(n_frames, n_models)`` for a feature matrix."""
        coef, intercept, classes = self._stacked()
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != coef.shape[2]:
            raise CompatibilityError(f"expected {coef.shape[2]} features, got {x.shape[1]}")
        scores = np.einsum("fd,mcd->fmc", x, coef) + intercept
        best = np.argmax(scores, axis=2)
        return np.take_along_axis(classes[np.newaxis], best[..., np.newaxis], axis=2)[..., 0]

    def to_dict(self) -> dict:
        return {
            "grid_version": self.grid_version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "cv_error": self.cv_error,
            "pipeline": self.pipeline,
            "models": [{"set_index": k, "replica": r, **m.to_dict()} for k, r, m in self.models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LdaEnsemble":
        if d.get("grid_version") != GRID_VERSION:
            raise CompatibilityError(f"unknown grid convention {d.get('grid_version')!r}")
        models = [(int(m["set_index"]), int(m["replica"]), LdaModel.from_dict(m)) for m in d["models"]]
        return cls(models, d["pipeline"], d["config_hash"], int(d["seed"]), float(d["cv_error"]))

    def save(self, path) -> str:
        """Write the model file and return its sha256."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        Path(path).write_bytes(blob)
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def load(cls, path) -> "LdaEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def stratified_folds(strata: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per sample; every stratum is spread evenly over the folds."""
    assignment = np.empty(len(strata), dtype=int)
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        perm = rng.permutation(idx)
        offset = rng.integers(folds)
        assignment[perm] = (np.arange(len(perm)) + offset) % folds
    return assignment


def _grid_azimuths() -> np.ndarray:
    return np.arange(N_BINS) * BIN_WIDTH_DEG


def train_ensemble(features, azimuths, repeats: int = 5, folds: int = 4, seed: int = 0,
                   pipeline: dict | None = None, config_hash: str = "") -> LdaEnsemble:
    """Train ``6 * repeats * folds`` LDA models with repeated stratified k-fold CV.

    Folds are stratified by training azimuth, which also stratifies every
    30-degree class. ``cv_error`` is the mean held-out misclassification
    rate over all models.
    """
    x = np.asarray([f.values if isinstance(f, FeatureFrame) else f for f in features], dtype=np.float64)
    az = np.asarray(azimuths, dtype=np.float64)
    if len(x) != len(az):
        raise TrainingError("one azimuth per feature frame is required")
    present, counts = np.unique(az, return_counts=True)
    missing = np.setdiff1d(_grid_azimuths(), present)
    if len(missing):
        raise TrainingError(f"training azimuths missing: {missing.tolist()}")
    if np.any(counts < folds):
        thin = present[counts < folds].tolist()
        raise TrainingError(f"azimuths {thin} have fewer than {folds} frames; {folds}-fold CV is infeasible")

    models = []
    errors = []
    for grid in GRIDS:
        labels = class_of_azimuth(az, grid)
        for r in range(repeats):
            rng = np.random.default_rng([seed, grid.set_index, r])
            assignment = stratified_folds(az, folds, rng)
            for f in range(folds):
                test = assignment == f
                model = train_lda(x[~test], labels[~test])
                errors.append(np.mean(model.predict(x[test]) != labels[test]))
                models.append((grid.set_index, r * folds + f, model))
    return LdaEnsemble(models, dict(pipeline or {}), config_hash, int(seed), float(np.mean(errors)))


def predict_frame(ensemble: LdaEnsemble, frame: FeatureFrame) -> list[tuple[int, int]]:
    """One ``(set_index, class_index)`` prediction per model, grouped by set."""
    if frame.config_hash is not None and frame.config_hash != ensemble.config_hash:
        raise CompatibilityError("frame was extracted with different pipeline settings than the model")
    classes = ensemble.predict(frame.values)[0]
    return [(k, int(c)) for k, c in zip(ensemble.set_indices, classes)]
