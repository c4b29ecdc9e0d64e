"""Model-based optimization of filterbank passbands.

A Gaussian process with a squared-exponential ARD kernel models the
objective in the unit cube; new points maximize expected improvement over
random candidates followed by local L-BFGS-B refinement.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, optimize as sopt
from scipy.stats import norm, qmc

from .features import FilterbankConfig

log = logging.getLogger(__name__)

SPECTRAL_BOUNDS = (100.0, 9000.0)
MODULATION_BOUNDS = (0.5, 400.0)
SPECTRAL_MIN_WIDTH = 10.0
MODULATION_MIN_WIDTH = 0.5
N_CANDIDATES = 2048
N_REFINE = 5


@dataclass
class SearchSpace:
    """Box of named dimensions; ``log_scale`` dims are mapped to the unit cube logarithmically."""

    names: list
    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray | None = None
    repair: Callable | None = None
    to_config: Callable | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.log_scale is None:
            self.log_scale = np.zeros(len(self.names), dtype=bool)
        self.log_scale = np.asarray(self.log_scale, dtype=bool)
        if np.any(self.lower >= self.upper):
            raise ValueError("every dimension needs lower < upper")

    @property
    def dims(self) -> int:
        return len(self.names)

    def _t(self, v):
        return np.where(self.log_scale, np.log(np.where(self.log_scale, v, 1.0)), v)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self._t(self.lower), self._t(self.upper)
        return (self._t(np.asarray(x, dtype=np.float64)) - lo) / (hi - lo)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self._t(self.lower), self._t(self.upper)
        v = lo + np.clip(u, 0.0, 1.0) * (hi - lo)
        return np.where(self.log_scale, np.exp(v), v)

    def make_feasible(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)
        return self.repair(x) if self.repair is not None else x

    def config(self, x: np.ndarray):
        return self.to_config(x) if self.to_config is not None else np.asarray(x)


def _repair_bands(edges: np.ndarray, lo: float, hi: float, min_width: float) -> np.ndarray:
    bands = np.sort(edges.reshape(-1, 2), axis=1)
    bands = np.clip(bands, lo, hi)
    for b in bands:
        if b[1] - b[0] < min_width:
            b[1] = b[0] + min_width
            if b[1] > hi:
                b[1] = hi
                b[0] = hi - min_width
    return bands[np.argsort(bands[:, 0], kind="stable")].reshape(-1)


def repair_filterbank(x: np.ndarray, ns: int = 3) -> np.ndarray:
    """Sort each (low, high) pair, enforce the minimum width, order bands by low edge."""
    x = np.asarray(x, dtype=np.float64)
    spec = _repair_bands(x[:2 * ns], *SPECTRAL_BOUNDS, SPECTRAL_MIN_WIDTH)
    mod = _repair_bands(x[2 * ns:], *MODULATION_BOUNDS, MODULATION_MIN_WIDTH)
    return np.concatenate([spec, mod])


def vector_to_filterbank(x: np.ndarray, ns: int = 3, filter_order: int = 4) -> FilterbankConfig:
    x = repair_filterbank(x, ns)
    return FilterbankConfig(x[:2 * ns].reshape(-1, 2), x[2 * ns:].reshape(-1, 2), filter_order)


def filterbank_to_vector(cfg: FilterbankConfig) -> np.ndarray:
    return np.concatenate([np.ravel(cfg.spectral_edges), np.ravel(cfg.modulation_edges)])


def filterbank_search_space(ns: int = 3, nm: int = 3) -> SearchSpace:
    names = [f"spectral{i + 1}_{e}" for i in range(ns) for e in ("low", "high")]
    names += [f"modulation{i + 1}_{e}" for i in range(nm) for e in ("low", "high")]
    lower = [SPECTRAL_BOUNDS[0]] * 2 * ns + [MODULATION_BOUNDS[0]] * 2 * nm
    upper = [SPECTRAL_BOUNDS[1]] * 2 * ns + [MODULATION_BOUNDS[1]] * 2 * nm
    return SearchSpace(names, lower, upper, log_scale=np.ones(len(names), dtype=bool),
                       repair=lambda x: repair_filterbank(x, ns),
                       to_config=lambda x: vector_to_filterbank(x, ns))


def latin_hypercube(n: int, dims: int, seed) -> np.ndarray:
    return qmc.LatinHypercube(d=dims, seed=np.random.default_rng(seed)).random(n)


def initial_design(space: SearchSpace, n: int, seed=0) -> np.ndarray:
    """``n`` feasible points from a Latin hypercube over the unit cube."""
    if n < 2:
        raise ValueError("initial design needs at least 2 points")
    unit = latin_hypercube(n, space.dims, seed)
    return np.stack([space.make_feasible(space.from_unit(u)) for u in unit])


class GaussianProcess:
    """Zero-mean GP on standardized targets with an ARD squared-exponential kernel."""

    LENGTHSCALE_BOUNDS = (1e-2, 1e1)
    SIGNAL_BOUNDS = (1e-3, 1e2)
    NOISE_BOUNDS = (1e-8, 1.0)

    def __init__(self, lengthscales, signal_variance=1.0, noise_variance=1e-6):
        self.lengthscales = np.asarray(lengthscales, dtype=np.float64)
        self._signal = float(signal_variance)  # standardized units
        self._noise = float(noise_variance)
        self.X = None
        self.y = None

    # --- hyperparameters in the units of the observed objective
    @property
    def signal_variance(self) -> float:
        return self._signal * self._y_scale ** 2

    @property
    def noise_variance(self) -> float:
        return self._noise * self._y_scale ** 2

    def _kernel(self, a, b, lengthscales=None, signal=None):
        ls = self.lengthscales if lengthscales is None else lengthscales
        s = self._signal if signal is None else signal
        d = (a[:, None, :] - b[None, :, :]) / ls
        return s * np.exp(-0.5 * np.sum(d ** 2, axis=2))

    def _nll(self, theta, X, y):
        d = X.shape[1]
        ls, signal, noise = np.exp(theta[:d]), np.exp(theta[d]), np.exp(theta[d + 1])
        diff2 = (X[:, None, :] - X[None, :, :]) ** 2 / ls ** 2
        kf = signal * np.exp(-0.5 * diff2.sum(axis=2))
        K = kf + (noise + 1e-10) * np.eye(len(X))
        try:
            c = linalg.cho_factor(K, lower=True)
        except linalg.LinAlgError:
            return 1e25, np.zeros_like(theta)
        alpha = linalg.cho_solve(c, y)
        nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(c[0]))) + 0.5 * len(X) * np.log(2 * np.pi)
        inner = np.outer(alpha, alpha) - linalg.cho_solve(c, np.eye(len(X)))
        grad = np.empty_like(theta)
        for k in range(d):
            grad[k] = -0.5 * np.sum(inner * kf * diff2[:, :, k])
        grad[d] = -0.5 * np.sum(inner * kf)
        grad[d + 1] = -0.5 * noise * np.trace(inner)
        return nll, grad

    def fit(self, X, y, optimize: bool = True, restarts: int = 4, rng=None) -> "GaussianProcess":
        """Condition on data; optionally maximize the marginal likelihood first."""
        self.X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        self._y_mean = float(y.mean())
        std = float(y.std())
        self._y_scale = std if std > 0 else 1.0
        self.y = y
        ys = (y - self._y_mean) / self._y_scale
        if optimize:
            self._optimize(ys, restarts, np.random.default_rng(rng))
        K = self._kernel(self.X, self.X) + (self._noise + 1e-10) * np.eye(len(self.X))
        self._chol = linalg.cho_factor(K, lower=True)
        self._alpha = linalg.cho_solve(self._chol, ys)
        return self

    def _optimize(self, ys, restarts, rng):
        d = self.X.shape[1]
        bounds = ([np.log(self.LENGTHSCALE_BOUNDS)] * d + [np.log(self.SIGNAL_BOUNDS)]
                  + [np.log(self.NOISE_BOUNDS)])
        lo, hi = np.array(bounds).T
        starts = [np.concatenate([np.full(d, np.log(0.3)), [0.0], [np.log(1e-4)]])]
        starts += [rng.uniform(lo, hi) for _ in range(restarts)]
        best = None
        for x0 in starts:
            res = sopt.minimize(self._nll, x0, args=(self.X, ys), jac=True, method="L-BFGS-B",
                                bounds=bounds)
            if best is None or res.fun < best.fun:
                best = res
        self.lengthscales = np.exp(best.x[:d])
        self._signal = float(np.exp(best.x[d]))
        self._noise = float(np.exp(best.x[d + 1]))

    def predict(self, Xs):
        """Posterior mean and latent-function variance at ``Xs`` in objective units."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
        ks = self._kernel(Xs, self.X)
        mean = ks @ self._alpha
        v = linalg.solve_triangular(self._chol[0], ks.T, lower=True)
        var = np.maximum(self._signal - np.sum(v ** 2, axis=0), 0.0)
        return self._y_mean + self._y_scale * mean, var * self._y_scale ** 2


SurrogateModel = GaussianProcess


def fit_surrogate(X_unit, y, seed=0) -> GaussianProcess:
    """Fit a GP by multi-start marginal-likelihood maximization."""
    X_unit = np.atleast_2d(X_unit)
    if len(X_unit) < 2:
        raise ValueError("need at least 2 observations to fit a surrogate")
    gp = GaussianProcess(np.full(X_unit.shape[1], 0.3))
    return gp.fit(X_unit, y, optimize=True, rng=seed)


def expected_improvement(model: GaussianProcess, X_unit, best: float | None = None) -> np.ndarray:
    """``E[max(0, best - f(x))]`` under the latent posterior (minimization)."""
    best = float(np.min(model.y)) if best is None else best
    mu, var = model.predict(X_unit)
    sigma = np.sqrt(var)
    improve = best - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 1e-12, improve / sigma, 0.0)
    ei = np.where(sigma > 1e-12, improve * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(improve, 0.0))
    return np.maximum(ei, 0.0)


def propose_next(model: GaussianProcess, space: SearchSpace, seed=0) -> np.ndarray:
    """Feasible point maximizing EI: random candidates, then local refinement of the best few."""
    rng = np.random.default_rng(seed)
    cand = rng.random((N_CANDIDATES, space.dims))
    ei = expected_improvement(model, cand)
    best_u, best_ei = cand[np.argmax(ei)], ei.max()
    for start in cand[np.argsort(-ei)[:N_REFINE]]:
        res = sopt.minimize(lambda u: -expected_improvement(model, u[None, :])[0], start,
                            method="L-BFGS-B", bounds=[(0.0, 1.0)] * space.dims)
        if -res.fun > best_ei:
            best_u, best_ei = res.x, -res.fun
    return space.make_feasible(space.from_unit(best_u))


@dataclass
class MboResult:
    best_x: np.ndarray
    best_config: object
    best_error: float
    history: list = field(default_factory=list)  # [(x, error)]
    budget_used: int = 0

    @property
    def incumbent_trace(self) -> np.ndarray:
        return np.minimum.accumulate([e for _, e in self.history])


def _evaluate(objective, x) -> float:
    try:
        value = float(objective(x))
    except Exception:
        log.exception("objective failed at %s; recording worst-case error", x)
        return 1.0
    return value if np.isfinite(value) else 1.0


def optimize(objective: Callable, space: SearchSpace, budget: int = 80, init_n: int = 24,
             seed=0, config_objective: bool = False) -> MboResult:
    """Run ``init_n`` design evaluations, then fit/propose/evaluate until ``budget`` is used.

    With ``config_objective`` the objective receives ``space.config(x)``
    instead of the raw parameter vector.
    """
    if not budget >= init_n >= 2:
        raise ValueError("need budget >= init_n >= 2")
    ss = np.random.SeedSequence(seed)
    design_seed, loop_seed = ss.spawn(2)
    loop_rng = np.random.default_rng(loop_seed)
    call = (lambda x: objective(space.config(x))) if config_objective else objective

    history = []
    for x in initial_design(space, init_n, design_seed):
        history.append((x, _evaluate(call, x)))
        log.debug("design %d: error %.4f", len(history), history[-1][1])
    while len(history) < budget:
        X = np.stack([space.to_unit(x) for x, _ in history])
        y = np.array([e for _, e in history])
        model = fit_surrogate(X, y, seed=loop_rng.integers(2 ** 32))
        x = propose_next(model, space, seed=loop_rng.integers(2 ** 32))
        history.append((x, _evaluate(call, x)))
        log.info("iteration %d: error %.4f (best %.4f)", len(history), history[-1][1],
                 min(e for _, e in history))
    i = int(np.argmin([e for _, e in history]))
    best_x, best_error = history[i]
    return MboResult(best_x, space.config(best_x), best_error, history, len(history))


def write_history(path, result: MboResult, space: SearchSpace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", *space.names, "error"])
        for i, (x, e) in enumerate(result.history):
            w.writerow([i, *(f"{v:.6g}" for v in x), f"{e:.6g}"])
