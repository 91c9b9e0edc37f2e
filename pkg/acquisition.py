"""
HierSAIL - Acquisition Module
UCB acquisition, the surrogate factory and the SAIL outer loop: illuminate the
acquisition surface, truly evaluate selected elites, retrain, and finally
illuminate the surrogate mean into a prediction archive.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from config import (
    UCB_KAPPA, SAIL_BATCH, SAIL_ROUNDS, SAIL_SURROGATE, SAIL_ACQ_EVALUATIONS,
    SAIL_PREDICTION_EVALUATIONS, SAIL_ACQ_BATCH,
)
from core import (
    ToolkitError, ArgumentError, TrainingError, Sample, make_rng, split_rng,
    latin_or_uniform_init, mutate_batch, samples_to_arrays,
)
from archive import Archive
from illumination import IlluminationConfig, Problem, map_elites, checked_features
from surrogates import BaseModelConfig, BASE_KINDS, train_base_model
from hierarchy import HierarchyConfig, build_hierarchy
from utils import run_parallel, write_csv

SURROGATE_KINDS = BASE_KINDS + ("hierarchical",)


class SailError(ToolkitError):
    """A SAIL round could not complete."""
    pass


# ================= SURROGATE FACTORY =================

@dataclass(frozen=True)
class SurrogateConfig:
    """Which surrogate to train; `base` also sets the node models of a hierarchy."""

    kind: str = SAIL_SURROGATE
    base: BaseModelConfig = field(default_factory=BaseModelConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ArgumentError(f"unknown surrogate kind '{self.kind}', choose from {SURROGATE_KINDS}")


def train_surrogate(cfg: SurrogateConfig, X, y, rng: np.random.Generator, F=None, lower=None, upper=None,
                    workers: int = 1, log_func=None):
    if cfg.kind == "hierarchical":
        if F is None:
            raise ArgumentError("a hierarchical surrogate needs the samples' feature coordinates")
        return build_hierarchy((X, F, y), cfg.hierarchy, cfg.base, rng, log_func=log_func, workers=workers)
    return train_base_model(cfg.base, X, y, rng, lower, upper, kind=cfg.kind, workers=workers,
                            log_func=log_func)


# ================= UCB =================

def ucb(mean, variance, kappa: float):
    """mean + kappa * sqrt(variance); scalars or arrays."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ArgumentError(f"variance must be non-negative, got {variance.min()}")
    value = np.asarray(mean, dtype=float) + kappa * np.sqrt(variance)
    return float(value) if value.ndim == 0 else value


def acquisition_source(surrogate, kappa: float):
    """Fitness source scoring a batch by the surrogate's UCB."""
    def source(X, F):
        mean, var = surrogate.predict(X, F)
        return ucb(mean, var, kappa)
    return source


def mean_source(surrogate):
    def source(X, F):
        return surrogate.predict(X, F)[0]
    return source


# ================= SAIL =================

@dataclass(frozen=True)
class AcquisitionConfig:
    kappa: float = UCB_KAPPA
    batch_size: int = SAIL_BATCH
    rounds: int = SAIL_ROUNDS
    surrogate_kind: str = SAIL_SURROGATE
    acq_evaluations: int = SAIL_ACQ_EVALUATIONS
    prediction_evaluations: int = SAIL_PREDICTION_EVALUATIONS
    acq_batch: int = SAIL_ACQ_BATCH
    compare_baseline: bool = False

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ArgumentError(f"kappa must be >= 0, got {self.kappa}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.rounds < 0:
            raise ArgumentError(f"rounds must be >= 0, got {self.rounds}")
        if self.surrogate_kind not in SURROGATE_KINDS:
            raise ArgumentError(f"unknown surrogate kind '{self.surrogate_kind}', choose from {SURROGATE_KINDS}")
        if self.acq_evaluations < 1 or self.prediction_evaluations < 1:
            raise ArgumentError("acquisition and prediction illuminations need at least one evaluation")
        if self.acq_batch < 1:
            raise ArgumentError(f"acq_batch must be >= 1, got {self.acq_batch}")


@dataclass
class SailResult:
    prediction_archive: Archive
    true_samples: list
    history: list = field(default_factory=list)     # rows (round, true_evals, acq_coverage, pred_qd, train_s)
    surrogate: object = None
    acquisition_archive: Archive = None


def _inner_config(illum: IlluminationConfig, evaluations: int, batch: int, seed: int) -> IlluminationConfig:
    return replace(illum, init_count=min(illum.init_count, evaluations), total_evaluations=evaluations,
                   batch_size=batch, seed=seed)


def _evaluate_true(problem: Problem, X, round_index: int, workers: int) -> list:
    F = checked_features(problem, X)
    fitness = run_parallel([lambda x=x: problem.evaluate(x) for x in X], workers=workers)
    return [Sample(x=np.asarray(x, dtype=float), features=f, fitness=float(fit), meta={"round": round_index})
            for x, f, fit in zip(X, F, fitness)]


def _train(cfg: SurrogateConfig, samples: list, problem: Problem, rng, round_label: str, workers, log_func):
    X, F, y = samples_to_arrays(samples)
    t0 = time.perf_counter()
    try:
        model = train_surrogate(cfg, X, y, rng, F=F, lower=problem.spec.lower_array,
                                upper=problem.spec.upper_array, workers=workers, log_func=log_func)
    except TrainingError as e:
        raise SailError(f"{round_label}: {cfg.kind} surrogate failed to train on {len(samples)} samples: {e}") from e
    return model, time.perf_counter() - t0


def select_from_archive(archive: Archive, count: int, rng: np.random.Generator, problem: Problem,
                        sigma_frac: float) -> np.ndarray:
    """`count` elites from distinct occupied bins chosen uniformly without replacement.

    When fewer bins are occupied, every bin is taken and the remainder is
    made of mutated copies of uniformly drawn elites.
    """
    occupied = archive.occupied_indices()
    take = min(count, len(occupied))
    picks = rng.choice(len(occupied), size=take, replace=False)
    chosen = [archive.get(occupied[int(i)]).x for i in picks]
    if take < count:
        parents = np.array([e.x for e in archive.random_elites(rng, count - take)])
        chosen.extend(mutate_batch(parents, sigma_frac, problem.spec, rng))
    return np.array(chosen)


def sail(problem: Problem, acq: AcquisitionConfig, illum: IlluminationConfig,
         surrogate: SurrogateConfig = None, rng: np.random.Generator = None,
         workers: int = 1, log_func=None) -> SailResult:
    """Surrogate-assisted illumination.

    True evaluations: the stratified initial set, then acq.batch_size per
    round, exactly. Each round retrains the surrogate from scratch on every
    true sample, illuminates its UCB surface and evaluates elites of
    uniformly selected bins. A last surrogate trained on all samples is
    illuminated on its mean to give the prediction archive.
    """
    surrogate = surrogate or SurrogateConfig(kind=acq.surrogate_kind)
    if surrogate.kind != acq.surrogate_kind:
        raise ArgumentError(f"surrogate kind '{surrogate.kind}' does not match acquisition.surrogate_kind "
                            f"'{acq.surrogate_kind}'")
    rng = rng if rng is not None else make_rng(illum.seed)

    samples = _evaluate_true(problem, latin_or_uniform_init(problem.spec, illum.init_count, rng,
                                                            illum.init_strategy), 0, workers)
    result = SailResult(prediction_archive=None, true_samples=samples)
    if log_func:
        log_func(f"SAIL {problem.name}: {len(samples)} initial true evaluations", "info")

    for r in range(1, acq.rounds + 1):
        train_rng, map_rng = split_rng(rng, 2)
        model, train_s = _train(surrogate, samples, problem, train_rng, f"round {r}", workers, log_func)
        inner = _inner_config(illum, acq.acq_evaluations, acq.acq_batch, illum.seed)
        acq_map = map_elites(problem, inner, fitness_source=acquisition_source(model, acq.kappa), rng=map_rng).archive

        elites = acq_map.elites()
        pred_qd = float(np.sum(model.predict(np.array([e.x for e in elites]),
                                             np.array([e.features for e in elites]))[0]))
        new_X = select_from_archive(acq_map, acq.batch_size, rng, problem, illum.sigma_frac)
        samples = samples + _evaluate_true(problem, new_X, r, workers)

        m = acq_map.metrics()
        result.history.append((r, len(samples), m.coverage, pred_qd, train_s))
        result.acquisition_archive = acq_map
        if log_func:
            log_func(f"SAIL round {r}/{acq.rounds}: {len(samples)} true samples, "
                     f"acquisition coverage {m.coverage:.3f}", "info")

    train_rng, map_rng = split_rng(rng, 2)
    model, _ = _train(surrogate, samples, problem, train_rng, "prediction map", workers, log_func)
    inner = _inner_config(illum, acq.prediction_evaluations, acq.acq_batch, illum.seed)
    result.prediction_archive = map_elites(problem, inner, fitness_source=mean_source(model), rng=map_rng).archive
    result.true_samples = samples
    result.surrogate = model
    if log_func:
        m = result.prediction_archive.metrics()
        log_func(f"SAIL {problem.name}: prediction map coverage {m.coverage:.3f} from "
                 f"{len(samples)} true evaluations", "success")
    return result


# ================= OUTPUT =================

def write_rounds_csv(history, path):
    return write_csv(path, ["round", "true_evals", "acq_coverage", "pred_qd_score_surrogate",
                            "surrogate_train_seconds"], history)


def write_samples_csv(samples, path):
    if not samples:
        return write_csv(path, ["round", "fitness"], [])
    n_feat = len(samples[0].features)
    n_x = len(samples[0].x)
    header = ["round", "fitness"] + [f"feat_{d}" for d in range(n_feat)] + [f"x_{d}" for d in range(n_x)]
    rows = [[s.meta.get("round", 0), s.fitness] + [float(v) for v in s.features] + [float(v) for v in s.x]
            for s in samples]
    return write_csv(path, header, rows)
