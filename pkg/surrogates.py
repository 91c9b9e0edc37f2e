"""
HierSAIL - Surrogate Contract Module
The common predict contract shared by every surrogate, trivial models, and the
factory that trains a base model (GP, BANN or single MLP) on a sample set.
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from config import ANN_HIDDEN, BANN_MEMBERS, HIER_NODE_KIND
from core import ArgumentError
from gp import GpSearchConfig, GpSurrogate
from ann import LmConfig, BannSurrogate, MlpSurrogate

BASE_KINDS = ("gp", "bann", "mlp")


class SurrogateModel(Protocol):
    """Trained predictor returning (mean, variance) arrays for parameter rows X.

    F carries the rows' feature coordinates; only models that route on
    feature space use it.
    """

    kind: str

    def predict(self, X, F=None) -> tuple:
        ...


class ConstantSurrogate:
    """Predicts one value everywhere with zero variance."""

    kind = "constant"

    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, X, F=None) -> tuple:
        n = np.atleast_2d(np.asarray(X, dtype=float)).shape[0]
        return np.full(n, self.value), np.zeros(n)


class ZeroSurrogate(ConstantSurrogate):
    """Fallback for nodes whose model failed to train."""

    kind = "zero"

    def __init__(self):
        super().__init__(0.0)


class OracleSurrogate:
    """The true objective posing as a surrogate (reference row in comparisons)."""

    kind = "oracle"

    def __init__(self, problem):
        self.problem = problem

    def predict(self, X, F=None) -> tuple:
        mean = self.problem.evaluate_batch(X)
        return mean, np.zeros_like(mean)


@dataclass(frozen=True)
class BaseModelConfig:
    kind: str = HIER_NODE_KIND
    gp: GpSearchConfig = field(default_factory=GpSearchConfig)
    hidden: int = ANN_HIDDEN
    members: int = BANN_MEMBERS
    lm: LmConfig = field(default_factory=LmConfig)

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise ArgumentError(f"unknown base model kind '{self.kind}', choose from {BASE_KINDS}")
        if self.hidden < 1:
            raise ArgumentError(f"hidden units must be >= 1, got {self.hidden}")
        if self.members < 2:
            raise ArgumentError(f"BANN needs at least 2 members, got {self.members}")


def data_bounds(X) -> tuple:
    """Per-column min/max of X, widened where a column is constant."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lower = np.min(X, axis=0)
    upper = np.max(X, axis=0)
    flat = upper - lower < 1e-12
    return np.where(flat, lower - 0.5, lower), np.where(flat, upper + 0.5, upper)


def train_base_model(cfg: BaseModelConfig, X, y, rng: np.random.Generator, lower=None, upper=None,
                     kind: str = None, workers: int = 1, log_func=None):
    """Train one base surrogate; constant targets yield an exact ConstantSurrogate."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ArgumentError("cannot train a surrogate on an empty sample set")
    if np.ptp(y) == 0.0:
        return ConstantSurrogate(y[0])
    if lower is None or upper is None:
        lower, upper = data_bounds(X)
    kind = kind or cfg.kind
    if kind == "gp":
        return GpSurrogate.fit(X, y, lower, upper, cfg.gp, rng=rng)
    if kind == "bann":
        return BannSurrogate.fit(X, y, lower, upper, members=cfg.members, hidden=cfg.hidden, cfg=cfg.lm,
                                 rng=rng, workers=workers, log_func=log_func)
    if kind == "mlp":
        return MlpSurrogate.fit(X, y, lower, upper, hidden=cfg.hidden, cfg=cfg.lm, rng=rng, log_func=log_func)
    raise ArgumentError(f"unknown base model kind '{kind}', choose from {BASE_KINDS}")
