"""
HierSAIL - Gaussian Process Module
Squared-exponential (ARD) Gaussian-process regression with Cholesky training,
predictive mean/variance and marginal-likelihood hyperparameter search.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from config import (
    GP_JITTER, GP_MAX_JITTER, GP_LENGTH_SCALE, GP_SIGNAL_VARIANCE, GP_NOISE_VARIANCE,
    GP_MIN_NOISE, GP_SEARCH_STARTS, GP_SEARCH_MAX_EVALS, GP_SEARCH_STEP,
    GP_SEARCH_MIN_STEP, GP_LOG_BOUNDS, GP_MAX_FIT_SAMPLES,
)
from core import ArgumentError, TrainingError, make_rng
from utils import array_digest


# ================= HYPERPARAMETERS =================

@dataclass(frozen=True)
class GpHyperparams:
    length_scales: tuple
    signal_variance: float = GP_SIGNAL_VARIANCE
    noise_variance: float = GP_NOISE_VARIANCE
    jitter: float = GP_JITTER

    def __post_init__(self):
        scales = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", scales)
        if not scales or any(not v > 0 for v in scales):
            raise ArgumentError(f"length scales must be positive, got {scales}")
        if not self.signal_variance > 0:
            raise ArgumentError(f"signal_variance must be positive, got {self.signal_variance}")
        if not self.noise_variance >= 0:
            raise ArgumentError(f"noise_variance must be non-negative, got {self.noise_variance}")
        if not self.jitter > 0:
            raise ArgumentError(f"jitter must be positive, got {self.jitter}")

    @classmethod
    def default(cls, dim: int):
        return cls(length_scales=(GP_LENGTH_SCALE,) * dim)

    def to_log(self) -> np.ndarray:
        # a zero noise variance maps to -inf
        with np.errstate(divide="ignore"):
            return np.log(np.r_[self.length_scales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_log(cls, theta, jitter: float = GP_JITTER):
        theta = np.asarray(theta, dtype=float)
        return cls(length_scales=tuple(np.exp(theta[:-2])), signal_variance=float(np.exp(theta[-2])),
                   noise_variance=float(np.exp(theta[-1])), jitter=jitter)


@dataclass(frozen=True)
class GpSearchConfig:
    starts: int = GP_SEARCH_STARTS
    max_evals: int = GP_SEARCH_MAX_EVALS
    step: float = GP_SEARCH_STEP
    min_step: float = GP_SEARCH_MIN_STEP
    log_bounds: tuple = GP_LOG_BOUNDS
    min_noise: float = GP_MIN_NOISE
    max_noise: float = 1.0
    max_fit_samples: int = GP_MAX_FIT_SAMPLES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "log_bounds", tuple(float(v) for v in self.log_bounds))
        if self.starts < 1 or self.max_evals < 1:
            raise ArgumentError("GP search needs at least one start and one evaluation")
        if not (0 < self.min_step <= self.step):
            raise ArgumentError(f"need 0 < min_step <= step, got {self.min_step}, {self.step}")
        if not (0 < self.min_noise <= self.max_noise):
            raise ArgumentError(f"need 0 < min_noise <= max_noise, got {self.min_noise}, {self.max_noise}")
        lo, hi = self.log_bounds
        if not lo < hi:
            raise ArgumentError(f"log_bounds must be increasing, got {self.log_bounds}")


# ================= KERNEL =================

def kernel(a, b, hyper: GpHyperparams) -> float:
    """sigma_f^2 * exp(-0.5 * sum(((a_i - b_i) / l_i)^2))."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ArgumentError(f"kernel inputs differ in shape: {a.shape} vs {b.shape}")
    r = (a - b) / np.asarray(hyper.length_scales)
    return float(hyper.signal_variance * math.exp(-0.5 * float(r @ r)))


def kernel_matrix(A, B, hyper: GpHyperparams) -> np.ndarray:
    scales = np.asarray(hyper.length_scales)
    A = np.atleast_2d(np.asarray(A, dtype=float)) / scales
    B = np.atleast_2d(np.asarray(B, dtype=float)) / scales
    return hyper.signal_variance * np.exp(-0.5 * cdist(A, B, "sqeuclidean"))


# ================= MODEL =================

@dataclass(frozen=True)
class GpModel:
    hyper: GpHyperparams
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    jitter: float = field(default=GP_JITTER)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _has_duplicate_rows(X) -> bool:
    return np.unique(X, axis=0).shape[0] < X.shape[0]


def gp_train(X, y, hyper: GpHyperparams) -> GpModel:
    """Factorize K + (noise + jitter) I; jitter doubles up to 1e-4 on failure."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise TrainingError(f"GP needs matching non-empty inputs/targets, got {X.shape} and {y.shape}")
    if X.shape[1] != len(hyper.length_scales):
        raise TrainingError(f"input dimension {X.shape[1]} does not match "
                            f"{len(hyper.length_scales)} length scales")
    if hyper.noise_variance == 0 and _has_duplicate_rows(X):
        raise TrainingError("duplicate training inputs with zero noise make the Gram matrix singular")

    K = kernel_matrix(X, X, hyper)
    eye = np.eye(X.shape[0])
    jitter = hyper.jitter
    while True:
        try:
            L = linalg.cholesky(K + (hyper.noise_variance + jitter) * eye, lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 2.0
            if jitter > GP_MAX_JITTER:
                raise TrainingError(
                    f"Gram matrix not positive definite after jitter escalation to {GP_MAX_JITTER}") from None
    alpha = linalg.cho_solve((L, True), y)
    return GpModel(hyper=hyper, X=X, y=y, L=L, alpha=alpha, jitter=jitter)


def gp_predict_batch(model: GpModel, X) -> tuple:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Ks = kernel_matrix(X, model.X, model.hyper)
    mean = Ks @ model.alpha
    v = linalg.solve_triangular(model.L, Ks.T, lower=True)
    var = model.hyper.signal_variance - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def gp_predict(model: GpModel, x) -> tuple:
    """(mean, variance) at one point; variance floored at 0."""
    mean, var = gp_predict_batch(model, np.atleast_1d(np.asarray(x, dtype=float))[None, :])
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(X, y, hyper: GpHyperparams) -> float:
    """log p(y | X, theta) = -1/2 y^T alpha - sum(log diag L) - n/2 log(2 pi)."""
    model = gp_train(X, y, hyper)
    return float(-0.5 * model.y @ model.alpha - np.sum(np.log(np.diag(model.L)))
                 - 0.5 * model.n * math.log(2.0 * math.pi))


# ================= HYPERPARAMETER SEARCH =================

def _log_box(dim: int, search: GpSearchConfig) -> tuple:
    lo, hi = search.log_bounds
    lower = np.r_[np.full(dim + 1, lo), math.log(search.min_noise)]
    upper = np.r_[np.full(dim + 1, hi), math.log(search.max_noise)]
    return lower, upper


def fit_hyperparams(X, y, search: GpSearchConfig = None, rng: np.random.Generator = None,
                    default: GpHyperparams = None) -> GpHyperparams:
    """Maximize the exact log marginal likelihood by multi-start coordinate search.

    Works on log-parameters (length scales, signal variance, noise variance).
    The first start is `default` (clipped into the search box), the rest are
    log-uniform draws. The unclipped default is also scored as given and is
    returned when nothing in the box beats it. Each start tries +/- step along every coordinate,
    accepts strict improvements and halves the step when none is found.
    Datasets larger than `max_fit_samples` are subsampled for the search.
    """
    search = search or GpSearchConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ArgumentError(f"hyperparameter fitting needs n >= 2, got {X.shape[0]}")
    rng = rng if rng is not None else make_rng(search.seed)
    if X.shape[0] > search.max_fit_samples:
        keep = np.sort(rng.choice(X.shape[0], size=search.max_fit_samples, replace=False))
        X, y = X[keep], y[keep]

    dim = X.shape[1]
    default = default or GpHyperparams.default(dim)
    lower, upper = _log_box(dim, search)

    def score(theta):
        try:
            return log_marginal_likelihood(X, y, GpHyperparams.from_log(theta, jitter=default.jitter))
        except TrainingError:
            return -math.inf

    starts = [np.clip(default.to_log(), lower, upper)]
    for _ in range(search.starts - 1):
        starts.append(rng.uniform(lower, upper))

    budget = max(1, search.max_evals // len(starts))
    best_theta, best_f = None, -math.inf
    for theta in starts:
        f = score(theta)
        evals = 1
        step = search.step
        while step >= search.min_step and evals < budget:
            improved = False
            for i in range(theta.size):
                for sign in (1.0, -1.0):
                    trial = theta.copy()
                    trial[i] = np.clip(trial[i] + sign * step, lower[i], upper[i])
                    if trial[i] == theta[i]:
                        continue
                    ft = score(trial)
                    evals += 1
                    if ft > f:
                        theta, f = trial, ft
                        improved = True
            if not improved:
                step *= 0.5
        if f > best_f:
            best_theta, best_f = theta, f

    try:
        default_f = log_marginal_likelihood(X, y, default)
    except TrainingError:
        default_f = -math.inf
    if default_f > best_f:
        return default
    if best_theta is None:
        raise TrainingError("no hyperparameter candidate produced a factorizable Gram matrix")
    return GpHyperparams.from_log(best_theta, jitter=default.jitter)


# ================= SURROGATE WRAPPER =================

class GpSurrogate:
    """GP surrogate on unit-scaled inputs and standardized targets."""

    kind = "gp"

    def __init__(self, model: GpModel, lower, upper, y_mean: float, y_scale: float, training_digest: str = None):
        self.model = model
        self.training_digest = training_digest
        self.lower = np.asarray(lower, dtype=float)
        self.span = np.asarray(upper, dtype=float) - self.lower
        self.y_mean = y_mean
        self.y_scale = y_scale

    @classmethod
    def fit(cls, X, y, lower, upper, search: GpSearchConfig = None, rng: np.random.Generator = None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        lower = np.asarray(lower, dtype=float)
        span = np.asarray(upper, dtype=float) - lower
        Xs = (X - lower) / span
        y_mean = float(np.mean(y))
        y_scale = float(np.std(y))
        if y_scale < 1e-12:
            y_scale = 1.0
        ys = (y - y_mean) / y_scale
        search = search or GpSearchConfig()
        default = replace(GpHyperparams.default(X.shape[1]), noise_variance=max(GP_NOISE_VARIANCE, search.min_noise))
        if X.shape[0] >= 2:
            hyper = fit_hyperparams(Xs, ys, search, rng=rng, default=default)
        else:
            hyper = default
        return cls(gp_train(Xs, ys, hyper), lower, lower + span, y_mean, y_scale, array_digest(X, y))

    def predict(self, X, F=None) -> tuple:
        Xs = (np.atleast_2d(np.asarray(X, dtype=float)) - self.lower) / self.span
        mean, var = gp_predict_batch(self.model, Xs)
        return mean * self.y_scale + self.y_mean, var * self.y_scale ** 2
