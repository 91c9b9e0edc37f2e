"""
HierSAIL - Neural Network Module
One-hidden-layer tanh networks trained with Levenberg-Marquardt, and the
bootstrapped ensemble (BANN) whose member spread is its confidence.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from config import (
    ANN_HIDDEN, BANN_MEMBERS, LM_LAMBDA0, LM_UP, LM_DOWN, LM_MAX_ITERS, LM_TOL, LM_MAX_LAMBDA,
)
from core import ArgumentError, TrainingError, split_rng
from utils import array_digest, run_parallel


# ================= NETWORK =================

@dataclass(frozen=True)
class MlpNet:
    """d inputs -> h tanh units -> one linear output."""

    W1: np.ndarray      # (h, d)
    b1: np.ndarray      # (h,)
    w2: np.ndarray      # (h,)
    b2: float

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    @property
    def parameter_count(self) -> int:
        return self.h * (self.d + 1) + (self.h + 1)

    def parameters(self) -> np.ndarray:
        """Flat vector ordered [W1 (row-major), b1, w2, b2]."""
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_parameters(self, p) -> "MlpNet":
        p = np.asarray(p, dtype=float)
        h, d = self.h, self.d
        k = h * d
        return MlpNet(W1=p[:k].reshape(h, d), b1=p[k:k + h].copy(), w2=p[k + h:k + 2 * h].copy(),
                      b2=float(p[k + 2 * h]))


def parameter_count(d: int, h: int) -> int:
    return h * (d + 1) + (h + 1)


def init_mlp(d: int, h: int, rng: np.random.Generator) -> MlpNet:
    """Uniform [-0.5, 0.5] weights scaled by 1/sqrt(fan-in)."""
    if d < 1 or h < 1:
        raise ArgumentError(f"network needs d >= 1 and h >= 1, got d={d}, h={h}")
    hidden_scale = 1.0 / np.sqrt(d)
    output_scale = 1.0 / np.sqrt(h)
    return MlpNet(
        W1=rng.uniform(-0.5, 0.5, size=(h, d)) * hidden_scale,
        b1=rng.uniform(-0.5, 0.5, size=h) * hidden_scale,
        w2=rng.uniform(-0.5, 0.5, size=h) * output_scale,
        b2=float(rng.uniform(-0.5, 0.5) * output_scale),
    )


def zero_mlp(d: int, h: int) -> MlpNet:
    return MlpNet(W1=np.zeros((h, d)), b1=np.zeros(h), w2=np.zeros(h), b2=0.0)


def mlp_forward_batch(net: MlpNet, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.tanh(X @ net.W1.T + net.b1) @ net.w2 + net.b2


def mlp_forward(net: MlpNet, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != net.d:
        raise ArgumentError(f"input dimension {x.shape[0]} does not match network input {net.d}")
    return float(mlp_forward_batch(net, x[None, :])[0])


def jacobian(net: MlpNet, X) -> np.ndarray:
    """Analytic d(output)/d(parameter), shape (n, parameter_count)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A = np.tanh(X @ net.W1.T + net.b1)
    G = (1.0 - A * A) * net.w2
    dW1 = (G[:, :, None] * X[:, None, :]).reshape(X.shape[0], -1)
    return np.hstack([dW1, G, A, np.ones((X.shape[0], 1))])


# ================= LEVENBERG-MARQUARDT =================

@dataclass(frozen=True)
class LmConfig:
    lambda0: float = LM_LAMBDA0
    up: float = LM_UP
    down: float = LM_DOWN
    max_iters: int = LM_MAX_ITERS
    tol: float = LM_TOL
    max_lambda: float = LM_MAX_LAMBDA

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ArgumentError(f"lambda0 must be positive, got {self.lambda0}")
        if not self.up > 1:
            raise ArgumentError(f"lambda up-factor must be > 1, got {self.up}")
        if not (0 < self.down < 1):
            raise ArgumentError(f"lambda down-factor must be in (0, 1), got {self.down}")
        if not self.tol > 0:
            raise ArgumentError(f"tolerance must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise ArgumentError(f"max_iters must be >= 0, got {self.max_iters}")


def lm_train(X, y, hidden: int, cfg: LmConfig, rng: np.random.Generator,
             init: MlpNet = None, trace: list = None, log_func=None) -> MlpNet:
    """Fit an MlpNet to (X, y) by Levenberg-Marquardt on the sum of squared residuals.

    Each iteration solves (J^T J + lambda I) delta = J^T r. A step is accepted
    (and lambda decreased) only if the SSE drops; otherwise lambda is raised
    and the step retried. Training stops after max_iters accepted steps, when
    an accepted step improves the SSE by less than tol, or when lambda
    exceeds max_lambda without finding a better point. The SSE after every
    accepted step is appended to `trace` when given.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if hidden < 1:
        raise ArgumentError(f"hidden units must be >= 1, got {hidden}")
    net = init if init is not None else init_mlp(X.shape[1], hidden, rng)
    p_count = net.parameter_count
    if X.shape[0] < p_count and log_func:
        log_func(f"LM: {X.shape[0]} samples for {p_count} parameters, fit is underdetermined", "warning")

    params = net.parameters()
    residual = y - mlp_forward_batch(net, X)
    sse = float(residual @ residual)
    lam = cfg.lambda0
    eye = np.eye(p_count)

    for _ in range(cfg.max_iters):
        J = jacobian(net, X)
        JtJ = J.T @ J
        g = J.T @ residual
        accepted = False
        while lam <= cfg.max_lambda:
            try:
                delta = linalg.solve(JtJ + lam * eye, g, assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= cfg.up
                if lam > cfg.max_lambda:
                    raise TrainingError(f"LM normal equations unsolvable up to lambda={cfg.max_lambda:g}")
                continue
            candidate = net.with_parameters(params + delta)
            new_residual = y - mlp_forward_batch(candidate, X)
            new_sse = float(new_residual @ new_residual)
            if new_sse < sse:
                improvement = sse - new_sse
                net, params, residual, sse = candidate, params + delta, new_residual, new_sse
                lam = max(lam * cfg.down, 1e-15)
                accepted = True
                if trace is not None:
                    trace.append(sse)
                break
            lam *= cfg.up
        if not accepted or improvement < cfg.tol:
            break
    return net


# ================= NORMALIZATION =================

@dataclass(frozen=True)
class Normalizer:
    """Inputs mapped to [-1, 1] from bounds; targets standardized."""

    x_lower: np.ndarray
    x_upper: np.ndarray
    y_mean: float
    y_scale: float

    @classmethod
    def fit(cls, y, lower, upper):
        y = np.asarray(y, dtype=float)
        scale = float(np.std(y))
        return cls(x_lower=np.asarray(lower, dtype=float), x_upper=np.asarray(upper, dtype=float),
                   y_mean=float(np.mean(y)), y_scale=scale if scale > 1e-12 else 1.0)

    def normalize_inputs(self, X) -> np.ndarray:
        return 2.0 * (np.asarray(X, dtype=float) - self.x_lower) / (self.x_upper - self.x_lower) - 1.0

    def denormalize_inputs(self, Z) -> np.ndarray:
        return self.x_lower + (np.asarray(Z, dtype=float) + 1.0) * 0.5 * (self.x_upper - self.x_lower)

    def normalize_targets(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_scale

    def denormalize_targets(self, t) -> np.ndarray:
        return np.asarray(t, dtype=float) * self.y_scale + self.y_mean


# ================= BOOTSTRAPPED ENSEMBLE =================

@dataclass(frozen=True)
class BannEnsemble:
    members: tuple
    normalizer: Normalizer

    def member_predictions(self, X) -> np.ndarray:
        """(M, n) member outputs in target units."""
        Z = self.normalizer.normalize_inputs(np.atleast_2d(np.asarray(X, dtype=float)))
        return np.array([self.normalizer.denormalize_targets(mlp_forward_batch(m, Z)) for m in self.members])


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws with replacement from range(n)."""
    return rng.integers(0, n, size=n)


def bann_train(X, y, members: int = BANN_MEMBERS, hidden: int = ANN_HIDDEN, cfg: LmConfig = None,
               rng: np.random.Generator = None, lower=None, upper=None, resamples=None,
               member_rngs=None, workers: int = 1, log_func=None) -> BannEnsemble:
    """Train `members` networks, each on its own bootstrap resample and initialization.

    Failed members are dropped with a warning unless more than half fail.
    """
    if members < 2:
        raise ArgumentError(f"an ensemble needs at least 2 members, got {members}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    cfg = cfg or LmConfig()
    lower = np.min(X, axis=0) if lower is None else np.asarray(lower, dtype=float)
    upper = np.max(X, axis=0) if upper is None else np.asarray(upper, dtype=float)
    upper = np.where(upper > lower, upper, lower + 1.0)
    normalizer = Normalizer.fit(y, lower, upper)
    Xn = normalizer.normalize_inputs(X)
    yn = normalizer.normalize_targets(y)
    member_rngs = list(member_rngs) if member_rngs is not None else split_rng(rng, members)

    def train_member(m):
        member_rng = member_rngs[m]
        idx = resamples[m] if resamples is not None else bootstrap_indices(X.shape[0], member_rng)
        try:
            return lm_train(Xn[idx], yn[idx], hidden, cfg, member_rng)
        except TrainingError as e:
            return e

    results = run_parallel([lambda m=m: train_member(m) for m in range(members)], workers=workers)
    trained = tuple(r for r in results if isinstance(r, MlpNet))
    failures = members - len(trained)
    if failures * 2 > members:
        raise TrainingError(f"{failures} of {members} ensemble members failed to train")
    if failures and log_func:
        log_func(f"BANN: dropped {failures} of {members} members that failed to train", "warning")
    return BannEnsemble(members=trained, normalizer=normalizer)


def bann_predict_batch(ensemble: BannEnsemble, X) -> tuple:
    outputs = ensemble.member_predictions(X)
    mean = np.mean(outputs, axis=0)
    if outputs.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, np.var(outputs, axis=0, ddof=1)


def bann_predict(ensemble: BannEnsemble, x) -> tuple:
    """Mean of member outputs and their unbiased sample variance."""
    mean, var = bann_predict_batch(ensemble, np.atleast_1d(np.asarray(x, dtype=float))[None, :])
    return float(mean[0]), float(var[0])


# ================= SURROGATE WRAPPERS =================

class BannSurrogate:
    kind = "bann"

    def __init__(self, ensemble: BannEnsemble, training_digest: str = None):
        self.ensemble = ensemble
        self.training_digest = training_digest

    @classmethod
    def fit(cls, X, y, lower, upper, members=BANN_MEMBERS, hidden=ANN_HIDDEN, cfg=None, rng=None,
            workers=1, log_func=None):
        return cls(bann_train(X, y, members, hidden, cfg, rng, lower, upper, workers=workers,
                              log_func=log_func), array_digest(X, y))

    def predict(self, X, F=None) -> tuple:
        return bann_predict_batch(self.ensemble, X)

    def member_predictions(self, X) -> np.ndarray:
        return self.ensemble.member_predictions(X)


class MlpSurrogate:
    """A single LM-trained network; reports zero variance."""

    kind = "mlp"

    def __init__(self, net: MlpNet, normalizer: Normalizer, training_digest: str = None):
        self.net = net
        self.normalizer = normalizer
        self.training_digest = training_digest

    @classmethod
    def fit(cls, X, y, lower, upper, hidden=ANN_HIDDEN, cfg=None, rng=None, log_func=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        upper = np.where(np.asarray(upper) > np.asarray(lower), upper, np.asarray(lower) + 1.0)
        normalizer = Normalizer.fit(y, lower, upper)
        net = lm_train(normalizer.normalize_inputs(X), normalizer.normalize_targets(y), hidden,
                       cfg or LmConfig(), rng, log_func=log_func)
        return cls(net, normalizer, array_digest(X, y))

    def predict(self, X, F=None) -> tuple:
        Z = self.normalizer.normalize_inputs(np.atleast_2d(np.asarray(X, dtype=float)))
        mean = self.normalizer.denormalize_targets(mlp_forward_batch(self.net, Z))
        return mean, np.zeros_like(mean)
