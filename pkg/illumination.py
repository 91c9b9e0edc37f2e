"""
HierSAIL - Illumination Module
The MAP-Elites loop driving an archive, and the deterministic coordinate-search
hill climber used for surrogate-assisted local search.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from config import (
    INIT_COUNT, TOTAL_EVALUATIONS, SIGMA_FRAC, RESOLUTION, ILLUMINATION_BATCH,
    HISTORY_POINTS, INIT_STRATEGY, HILL_MAX_ITERS, HILL_MIN_STEP_FRAC,
)
from core import (
    ArgumentError, DomainError, DomainSpec, make_rng, latin_or_uniform_init, mutate_batch,
)
from archive import Archive, Elite
from utils import write_csv


# ================= TYPES =================

@dataclass(frozen=True)
class Problem:
    """An expensive objective with its feature function.

    `objective` is the raw value in the problem's own sense (minimized);
    `evaluate` returns the internal maximization fitness
    `fitness_offset - objective(x)`.
    """

    name: str
    spec: DomainSpec
    objective: Callable
    features: Callable
    fitness_offset: float = 0.0
    optimum_x: Optional[tuple] = None
    optimum_value: Optional[float] = None
    description: str = ""

    def evaluate(self, x) -> float:
        return float(self.fitness_offset - self.objective(np.asarray(x, dtype=float)))

    def evaluate_batch(self, X) -> np.ndarray:
        return np.array([self.evaluate(x) for x in np.atleast_2d(X)])

    def features_batch(self, X) -> np.ndarray:
        return np.array([np.atleast_1d(self.features(np.asarray(x, dtype=float))) for x in np.atleast_2d(X)])

    def objective_from_fitness(self, fitness):
        return self.fitness_offset - np.asarray(fitness)


@dataclass(frozen=True)
class IlluminationConfig:
    init_count: int = INIT_COUNT
    total_evaluations: int = TOTAL_EVALUATIONS
    sigma_frac: float = SIGMA_FRAC
    resolution: tuple = RESOLUTION
    seed: int = 0
    batch_size: int = ILLUMINATION_BATCH
    init_strategy: str = INIT_STRATEGY

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        if self.init_count < 1:
            raise ArgumentError(f"init_count must be >= 1, got {self.init_count}")
        if self.init_count > self.total_evaluations:
            raise ArgumentError(
                f"init_count ({self.init_count}) exceeds total_evaluations ({self.total_evaluations})")
        if not (0.0 < self.sigma_frac <= 1.0):
            raise ArgumentError(f"sigma_frac must be in (0, 1], got {self.sigma_frac}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.resolution or any(r < 1 for r in self.resolution):
            raise ArgumentError(f"resolution must be positive bin counts, got {self.resolution}")


@dataclass
class IlluminationResult:
    archive: Archive
    history: list = field(default_factory=list)     # rows (evals, coverage, qd_score, best)
    evaluations: int = 0


# ================= FITNESS SOURCES =================

def true_fitness_source(problem: Problem):
    """Fitness source that calls the expensive objective row by row."""
    def source(X, F):
        return problem.evaluate_batch(X)
    return source


def checked_features(problem: Problem, X) -> np.ndarray:
    F = problem.features_batch(X)
    if F.shape[1] != problem.spec.feature_dim:
        raise DomainError(f"{problem.name}: feature function returned {F.shape[1]} coordinates, "
                          f"expected {problem.spec.feature_dim}")
    bad = ~np.all(np.isfinite(F) & (F >= 0.0) & (F <= 1.0), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"{problem.name}: features {F[i].tolist()} outside [0, 1] "
                          f"for x = {np.asarray(X)[i].tolist()}")
    return F


# ================= MAP-ELITES =================

def map_elites(problem: Problem, cfg: IlluminationConfig, fitness_source=None,
               rng: np.random.Generator = None, log_func=None) -> IlluminationResult:
    """Illuminate `problem` with MAP-Elites.

    Exactly cfg.total_evaluations fitness-source calls are consumed: the
    stratified initial set, then children produced `batch_size` at a time from
    uniformly drawn parents of the current archive. Children are inserted in
    the order they were produced. Metrics are recorded every
    max(1, budget // 200) evaluations and at the end.
    """
    if len(cfg.resolution) != problem.spec.feature_dim:
        raise ArgumentError(f"resolution {cfg.resolution} does not match feature_dim "
                            f"{problem.spec.feature_dim} of {problem.name}")
    rng = rng if rng is not None else make_rng(cfg.seed)
    source = fitness_source or true_fitness_source(problem)
    archive = Archive(cfg.resolution)
    result = IlluminationResult(archive=archive)
    cadence = max(1, cfg.total_evaluations // HISTORY_POINTS)
    next_record = cadence

    def consume(X):
        nonlocal next_record
        F = checked_features(problem, X)
        fitness = np.asarray(source(X, F), dtype=float)
        for x, f, fit in zip(X, F, fitness):
            archive.offer(Elite(x=x, features=f, fitness=float(fit)))
            result.evaluations += 1
            if result.evaluations >= next_record:
                m = archive.metrics()
                result.history.append((result.evaluations, m.coverage, m.qd_score, m.best))
                next_record += cadence

    consume(latin_or_uniform_init(problem.spec, cfg.init_count, rng, cfg.init_strategy))
    if log_func:
        log_func(f"{problem.name}: initial set of {cfg.init_count} placed, "
                 f"{archive.occupied} bins occupied", "info")

    while result.evaluations < cfg.total_evaluations:
        n = min(cfg.batch_size, cfg.total_evaluations - result.evaluations)
        parents = np.array([e.x for e in archive.random_elites(rng, n)])
        consume(mutate_batch(parents, cfg.sigma_frac, problem.spec, rng))

    if not result.history or result.history[-1][0] != result.evaluations:
        m = archive.metrics()
        result.history.append((result.evaluations, m.coverage, m.qd_score, m.best))
    if log_func:
        m = archive.metrics()
        log_func(f"{problem.name}: {result.evaluations} evaluations, coverage {m.coverage:.3f}, "
                 f"QD-score {m.qd_score:.4g}", "success")
    return result


def write_history_csv(history, path):
    return write_csv(path, ["evals", "coverage", "qd_score", "best"], history)


# ================= HILL CLIMBER =================

@dataclass(frozen=True)
class ClimbResult:
    x_best: np.ndarray
    f_best: float
    iterations: int
    trace: tuple = ()


def hill_climb(surface, start, spec: DomainSpec, step: float,
               max_iters: int = HILL_MAX_ITERS) -> ClimbResult:
    """Deterministic coordinate-search ascent on `surface`.

    Each iteration tries x +/- step along every dimension (clamped to the
    bounds) and moves to the best strictly improving trial point; when none
    improves the step is halved. Stops once the step falls below
    1e-6 times the smallest bound range or after max_iters iterations.
    """
    if step <= 0:
        raise ArgumentError(f"step must be > 0, got {step}")
    x = spec.clip(np.asarray(start, dtype=float))
    fx = float(surface(x))
    min_step = HILL_MIN_STEP_FRAC * float(np.min(spec.range))
    trace = [fx]
    it = 0
    while it < max_iters and step >= min_step:
        it += 1
        best_x, best_f = None, fx
        for i in range(spec.dim):
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] = trial[i] + sign * step
                trial = spec.clip(trial)
                if np.array_equal(trial, x):
                    continue
                fp = float(surface(trial))
                if fp > best_f:
                    best_x, best_f = trial, fp
        if best_x is None:
            step *= 0.5
        else:
            x, fx = best_x, best_f
        trace.append(fx)
    return ClimbResult(x_best=x, f_best=fx, iterations=it, trace=tuple(trace))
