"""
HierSAIL - Experiments Module
Runners behind the command line: plain illumination, SAIL, the hill-climber
surrogate comparison (fig5), the segmentation/dimensionality study (fig6),
the surrogate bakeoff, the surface smoothness study and the hierarchy export.
Every runner writes its files under cfg.out together with a run manifest.
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from core import (
    ArgumentError, TrainingError, make_rng, split_rng, seed_children, latin_or_uniform_init,
)
from archive import export_archive_csv, rescore
from illumination import IlluminationConfig, map_elites, hill_climb, write_history_csv, checked_features
from benchmarks import make_problem
from gp import GpSurrogate
from ann import BannSurrogate, parameter_count
from surrogates import BaseModelConfig, OracleSurrogate, data_bounds, train_base_model
from hierarchy import kmeans, pca_fit, pca_project, export_hierarchy_json
from acquisition import SurrogateConfig, sail, train_surrogate, write_rounds_csv, write_samples_csv
from runconfig import RunConfig
from utils import RunManifest, run_parallel, write_csv


@dataclass
class StudyResult:
    """Tables a runner produced, keyed by output file name, plus the manifest path."""

    tables: dict = field(default_factory=dict)
    manifest: Path = None
    extra: dict = field(default_factory=dict)


class _Run:
    """Output directory bookkeeping shared by the runners."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(self.out, cfg.snapshot(), cfg.seed)
        self.result = StudyResult()

    def csv(self, name: str, header, rows, timing: bool = False):
        rows = [list(r) for r in rows]
        self.manifest.add(write_csv(self.out / name, header, rows), timing=timing)
        self.result.tables[name] = (list(header), rows)

    def file(self, path, timing: bool = False):
        self.manifest.add(path, timing=timing)

    def phase(self, name: str, started: float):
        self.manifest.time(name, time.perf_counter() - started)

    def finish(self) -> StudyResult:
        self.result.manifest = self.manifest.write()
        return self.result


def _problem(cfg: RunConfig):
    return make_problem(cfg.problem, cfg.dim)


def _illumination(cfg: RunConfig, problem, log_func=None, **changes) -> IlluminationConfig:
    """The run's illumination settings with the run seed, fitted to the problem's map dimension."""
    illum = replace(cfg.illumination, seed=cfg.seed, **changes)
    fdim = problem.spec.feature_dim
    if len(illum.resolution) != fdim:
        resolution = (illum.resolution[0],) * fdim
        if log_func:
            log_func(f"{problem.name}: map resolution {illum.resolution} adjusted to {resolution}", "info")
        illum = replace(illum, resolution=resolution)
    return illum


def _blank(value):
    return "" if value is None else value


# ================= MAP-ELITES / SAIL / EXPORT =================

def run_map_elites(cfg: RunConfig, log_func=None) -> StudyResult:
    run = _Run(cfg)
    problem = _problem(cfg)
    started = time.perf_counter()
    result = map_elites(problem, _illumination(cfg, problem, log_func), log_func=log_func)
    run.phase("illumination", started)
    run.file(write_history_csv(result.history, run.out / "history.csv"))
    run.file(export_archive_csv(result.archive, run.out / "archive.csv"))
    run.result.tables["history.csv"] = (["evals", "coverage", "qd_score", "best"], result.history)
    run.result.extra["archive"] = result.archive
    return run.finish()


def compare_with_map_elites(problem, sail_result, illum: IlluminationConfig, log_func=None) -> dict:
    """True QD-scores of SAIL's prediction map and of plain MAP-Elites at the same true budget."""
    budget = len(sail_result.true_samples)
    baseline = map_elites(problem, replace(illum, total_evaluations=budget,
                                           init_count=min(illum.init_count, budget)), log_func=log_func)
    pred = sail_result.prediction_archive.metrics()
    base = baseline.archive.metrics()
    return {
        "sail": (budget, pred.coverage, rescore(sail_result.prediction_archive, problem.evaluate)),
        "map-elites": (budget, base.coverage, base.qd_score),
    }


def run_sail(cfg: RunConfig, log_func=None) -> StudyResult:
    run = _Run(cfg)
    problem = _problem(cfg)
    illum = _illumination(cfg, problem, log_func)
    started = time.perf_counter()
    result = sail(problem, cfg.acquisition, illum, cfg.surrogate, rng=make_rng(cfg.seed),
                  workers=cfg.workers, log_func=log_func)
    run.phase("sail", started)
    run.file(write_rounds_csv(result.history, run.out / "rounds.csv"), timing=True)
    run.file(write_samples_csv(result.true_samples, run.out / "samples.csv"))
    run.file(export_archive_csv(result.prediction_archive, run.out / "prediction_archive.csv"))
    run.result.extra["sail"] = result
    if cfg.acquisition.compare_baseline:
        started = time.perf_counter()
        scores = compare_with_map_elites(problem, result, illum, log_func)
        run.phase("baseline", started)
        run.csv("sail_summary.csv", ["method", "true_evals", "coverage", "true_qd_score"],
                [(name,) + values for name, values in scores.items()])
    return run.finish()


def run_export(cfg: RunConfig, log_func=None) -> StudyResult:
    """Illuminate on the true objective, then build the hierarchical surrogate on the elites."""
    run = _Run(cfg)
    problem = _problem(cfg)
    started = time.perf_counter()
    result = map_elites(problem, _illumination(cfg, problem, log_func), log_func=log_func)
    run.phase("illumination", started)
    elites = result.archive.elites()
    X = np.array([e.x for e in elites])
    F = np.array([e.features for e in elites])
    y = np.array([e.fitness for e in elites])
    started = time.perf_counter()
    hier = train_surrogate(replace(cfg.surrogate, kind="hierarchical"), X, y, make_rng(cfg.seed), F=F,
                           workers=cfg.workers, log_func=log_func)
    run.phase("hierarchy", started)
    run.file(write_history_csv(result.history, run.out / "history.csv"))
    run.file(export_archive_csv(result.archive, run.out / "archive.csv"))
    run.file(export_hierarchy_json(hier, run.out / "hierarchy.json"))
    run.result.extra["hierarchy"] = hier
    return run.finish()


# ================= SURROGATE HILL-CLIMB STUDY =================

FIG5_MODELS = ("bann", "gp")


def equidistant_starts(spec, count: int) -> np.ndarray:
    """Centres of `count` equal cells along every dimension of the box."""
    frac = (np.arange(count) + 0.5) / count
    return spec.lower_array + frac[:, None] * spec.range


def _fig5_replicate(problem, fc, base: BaseModelConfig, rng: np.random.Generator, replicate: int) -> dict:
    sample_rng, gp_rng, bann_rng = split_rng(rng, 3)
    X = latin_or_uniform_init(problem.spec, fc.train_size, sample_rng)
    y = problem.evaluate_batch(X)
    lower, upper = problem.spec.lower_array, problem.spec.upper_array
    try:
        models = {
            "gp": GpSurrogate.fit(X, y, lower, upper, base.gp, rng=gp_rng),
            "bann": BannSurrogate.fit(X, y, lower, upper, members=fc.members, hidden=fc.hidden, cfg=base.lm,
                                      rng=bann_rng),
        }
    except TrainingError as e:
        return {"replicate": replicate, "failed": str(e)}

    step = fc.step_frac * float(np.min(problem.spec.range))
    starts = equidistant_starts(problem.spec, fc.starts)
    rows = []
    for name in FIG5_MODELS:
        model = models[name]

        def surface(x, model=model):
            return float(model.predict(np.asarray(x)[None, :])[0][0])

        for i, start in enumerate(starts):
            climb = hill_climb(surface, start, problem.spec, step, fc.max_iters)
            rows.append((name, replicate, i, float(climb.x_best[0]), problem.objective(climb.x_best)))
    return {"replicate": replicate, "rows": rows,
            "digests": (models["gp"].training_digest, models["bann"].training_digest)}


def run_fig5(cfg: RunConfig, log_func=None) -> StudyResult:
    """Hill climbing on GP and BANN means trained on the same samples, per replicate."""
    run = _Run(cfg)
    problem = _problem(cfg)
    if problem.spec.dim != 1:
        raise ArgumentError(f"fig5 runs on a 1-D problem, {problem.name} has dim {problem.spec.dim}")
    fc = cfg.fig5
    rngs = seed_children(cfg.seed, fc.replicates)
    started = time.perf_counter()
    base = cfg.surrogate.base
    tasks = [lambda r=r: _fig5_replicate(problem, fc, base, rngs[r], r) for r in range(fc.replicates)]
    outcomes = run_parallel(tasks, workers=cfg.workers, log_func=log_func)
    run.phase("replicates", started)

    failed = [o for o in outcomes if "failed" in o]
    for o in failed:
        if log_func:
            log_func(f"fig5: replicate {o['replicate']} excluded, training failed: {o['failed']}", "warning")
    ok = [o for o in outcomes if "failed" not in o]
    rows = sorted((row for o in ok for row in o["rows"]), key=lambda r: (r[0], r[1], r[2]))
    run.csv("fig5.csv", ["model", "replicate", "start_index", "x_final", "f_true"], rows)

    summary = []
    for name in FIG5_MODELS:
        values = np.array([r[4] for r in rows if r[0] == name])
        if values.size:
            summary.append((name, len(ok), len(failed), float(np.median(values)),
                            float(np.var(values, ddof=1)) if values.size > 1 else 0.0,
                            float(np.mean(values)), float(np.min(values))))
        else:
            summary.append((name, 0, len(failed), "", "", "", ""))
    run.csv("fig5_summary.csv", ["model", "replicates", "failed", "median", "variance", "mean", "min"], summary)
    run.csv("fig5_pairs.csv", ["replicate", "gp_digest", "bann_digest"],
            [(o["replicate"],) + o["digests"] for o in ok])
    if log_func:
        for row in summary:
            log_func(f"fig5 {row[0]}: median {row[3]}, variance {row[4]}", "success")
    return run.finish()


# ================= SEGMENT DIMENSIONALITY STUDY =================

FIG6_HEADER = ["segment", "size", "retained_dims", "local_mse", "flat_mse", "flag"]


def holdout_split(n: int, fraction: float, rng: np.random.Generator) -> tuple:
    """Seeded shuffle into (train, holdout) index arrays, holdout ~ fraction of n."""
    order = rng.permutation(n)
    n_hold = int(round(fraction * n))
    return np.sort(order[n_hold:]), np.sort(order[:n_hold])


def sized_for_samples(base: BaseModelConfig, n: int, dim: int, samples_per_weight: float) -> BaseModelConfig:
    """Narrow a network model until it has at most n / samples_per_weight weights; GPs pass through."""
    if base.kind == "gp":
        return base
    hidden = base.hidden
    while hidden > 1 and samples_per_weight * parameter_count(dim, hidden) > n:
        hidden -= 1
    return replace(base, hidden=hidden)


def _segment_rows(X, y, segments, train, test, flat, base: BaseModelConfig, fc, mode: str, rng) -> list:
    rows = []
    for s, members in enumerate(segments):
        tr = np.intersect1d(members, train)
        te = np.intersect1d(members, test)
        flat_mse = None
        if te.size:
            flat_mse = float(np.mean((y[te] - flat.predict(X[te])[0]) ** 2))
        retained, local_mse, flag = None, None, ""
        if tr.size < fc.min_segment or te.size == 0:
            flag = "too-small"
            if tr.size >= 2:
                retained = pca_fit(X[tr], fc.pca_cutoff).retained
            rows.append((s, members.size, _blank(retained), "", _blank(flat_mse), flag))
            continue
        pca = pca_fit(X[tr], fc.pca_cutoff)
        retained = pca.retained
        if pca.degenerate:
            flag = "degenerate"
        Z_tr, Z_te = pca_project(pca, X[tr]), pca_project(pca, X[te])
        targets = y[tr] if mode == "raw" else y[tr] - flat.predict(X[tr])[0]
        lower, upper = data_bounds(Z_tr)
        try:
            local_base = sized_for_samples(base, tr.size, Z_tr.shape[1], fc.samples_per_weight)
            local = train_base_model(local_base, Z_tr, targets, rng, lower, upper)
        except TrainingError:
            rows.append((s, members.size, retained, "", flat_mse, "train-failed"))
            continue
        pred = local.predict(Z_te)[0]
        if mode == "residual":
            pred = pred + flat.predict(X[te])[0]
        local_mse = float(np.mean((y[te] - pred) ** 2))
        rows.append((s, members.size, retained, local_mse, flat_mse, flag))
    return rows


def _fig6_summary(mode: str, rows: list, dim: int) -> tuple:
    with_dims = [r for r in rows if r[2] != ""]
    compared = [r for r in rows if r[3] != "" and r[4] != ""]
    reduced = sum(1 for r in with_dims if r[2] < dim)
    better = sum(1 for r in compared if r[3] < r[4])
    return (mode, len(rows), len(with_dims), reduced / len(with_dims) if with_dims else 0.0,
            len(compared), better / len(compared) if compared else 0.0,
            float(np.median([r[2] for r in with_dims])) if with_dims else "")


def run_fig6(cfg: RunConfig, log_func=None) -> StudyResult:
    """Per-segment PCA reduction and local-versus-flat holdout error on an elite set."""
    run = _Run(cfg)
    problem = _problem(cfg)
    fc = cfg.fig6
    if log_func and problem.name == "foil_proxy":
        log_func(f"fig6: {problem.description}", "warning")
    illum = _illumination(cfg, problem, log_func, total_evaluations=fc.evaluations,
                          init_count=min(cfg.illumination.init_count, fc.evaluations))
    holdout_rng, kmeans_rng, flat_rng, local_rng = split_rng(make_rng(cfg.seed), 4)

    started = time.perf_counter()
    elites = map_elites(problem, illum, log_func=log_func).archive.elites()
    run.phase("illumination", started)
    X = np.array([e.x for e in elites])
    F = np.array([e.features for e in elites])
    y = np.array([e.fitness for e in elites])
    if X.shape[0] < fc.segments:
        raise ArgumentError(f"fig6: {X.shape[0]} elites cannot form {fc.segments} segments")
    train, test = holdout_split(X.shape[0], fc.holdout_fraction, holdout_rng)

    started = time.perf_counter()
    km = kmeans(F, fc.segments, rng=kmeans_rng)
    segments = [np.flatnonzero(km.assignment == s) for s in range(fc.segments)]
    base = replace(cfg.surrogate.base, kind=fc.model, members=fc.members)
    flat_base = sized_for_samples(base, train.size, X.shape[1], fc.samples_per_weight)
    flat = train_base_model(flat_base, X[train], y[train], flat_rng, problem.spec.lower_array,
                            problem.spec.upper_array, workers=cfg.workers, log_func=log_func)
    raw_rng, residual_rng = split_rng(local_rng, 2)
    raw_rows = _segment_rows(X, y, segments, train, test, flat, base, fc, "raw", raw_rng)
    residual_rows = _segment_rows(X, y, segments, train, test, flat, base, fc, "residual", residual_rng)
    run.phase("segments", started)

    run.csv("fig6.csv", FIG6_HEADER, raw_rows)
    run.csv("fig6_residual.csv", FIG6_HEADER, residual_rows)
    summary = [_fig6_summary("raw", raw_rows, problem.spec.dim),
               _fig6_summary("residual", residual_rows, problem.spec.dim)]
    run.csv("fig6_summary.csv", ["mode", "segments", "segments_with_pca", "reduced_fraction",
                                 "segments_compared", "local_better_fraction", "median_retained"], summary)
    if log_func:
        for row in summary:
            log_func(f"fig6 {row[0]}: {row[3]:.2f} of segments reduced below {problem.spec.dim} dims, "
                     f"local model better in {row[5]:.2f}", "success")
    return run.finish()


# ================= BAKEOFF =================

BAKEOFF_HEADER = ["model", "n", "train_s", "predict_us", "rmse", "spearman", "status"]


def _bakeoff_cell(problem, name: str, n: int, seed, holdout, surrogate: SurrogateConfig,
                  log_func=None) -> tuple:
    X_h, F_h, y_h = holdout
    sample_rng, model_rng = split_rng(make_rng(seed), 2)
    if name == "oracle":
        model, train_s = OracleSurrogate(problem), 0.0
    else:
        X = latin_or_uniform_init(problem.spec, n, sample_rng)
        F = checked_features(problem, X)
        y = problem.evaluate_batch(X)
        started = time.perf_counter()
        try:
            model = train_surrogate(replace(surrogate, kind=name), X, y, model_rng, F=F,
                                    lower=problem.spec.lower_array, upper=problem.spec.upper_array,
                                    log_func=log_func)
        except TrainingError as e:
            if log_func:
                log_func(f"bakeoff: {name} failed at n={n}: {e}", "warning")
            return (name, n, "", "", "", "", "failed")
        train_s = time.perf_counter() - started
    started = time.perf_counter()
    pred = model.predict(X_h, F_h)[0]
    predict_us = (time.perf_counter() - started) / X_h.shape[0] * 1e6
    rmse = float(np.sqrt(np.mean((pred - y_h) ** 2)))
    rho = stats.spearmanr(pred, y_h)[0] if np.ptp(pred) > 0 else float("nan")
    return (name, n, train_s, predict_us, rmse, float(rho), "ok")


def gp_time_slope(rows: list, min_n: int = 100):
    """Log-log slope of GP training seconds against n (informational)."""
    pts = [(r[1], r[2]) for r in rows if r[0] == "gp" and r[6] == "ok" and r[1] >= min_n and r[2] > 0]
    if len(pts) < 2:
        return None
    n, t = np.array(pts, dtype=float).T
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def run_bakeoff(cfg: RunConfig, log_func=None) -> StudyResult:
    """Training time, prediction time, holdout RMSE and rank correlation per model and n."""
    run = _Run(cfg)
    problem = _problem(cfg)
    bc = cfg.bakeoff
    holdout_seed, *cell_seeds = np.random.SeedSequence(cfg.seed).spawn(len(bc.grid) + 1)
    holdout_rng = make_rng(holdout_seed)
    X_h = latin_or_uniform_init(problem.spec, bc.holdout, holdout_rng, "uniform")
    holdout = (X_h, checked_features(problem, X_h), problem.evaluate_batch(X_h))

    names = bc.models + (("oracle",) if bc.oracle else ())
    tasks = [lambda name=name, i=i, n=n: _bakeoff_cell(problem, name, n, cell_seeds[i], holdout,
                                                       cfg.surrogate, log_func)
             for i, n in enumerate(bc.grid) for name in names]
    started = time.perf_counter()
    rows = run_parallel(tasks, workers=cfg.workers, log_func=log_func)
    run.phase("grid", started)
    order = {name: k for k, name in enumerate(names)}
    rows = sorted(rows, key=lambda r: (r[1], order[r[0]]))
    run.csv("bakeoff.csv", BAKEOFF_HEADER, rows, timing=True)
    slope = gp_time_slope(rows)
    run.csv("bakeoff_summary.csv", ["gp_loglog_slope"], [(_blank(slope),)], timing=True)
    if log_func and slope is not None:
        log_func(f"bakeoff: GP training time grows as n^{slope:.2f}", "info")
    return run.finish()


# ================= SURFACE SMOOTHNESS =================

def count_local_optima(values) -> int:
    """Interior points strictly above both neighbours."""
    v = np.asarray(values, dtype=float)
    return int(np.sum((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))


def total_variation(values) -> float:
    return float(np.sum(np.abs(np.diff(np.asarray(values, dtype=float)))))


def run_surface(cfg: RunConfig, log_func=None) -> StudyResult:
    """GP and BANN means over a dense 1-D grid, with their number of local optima."""
    run = _Run(cfg)
    problem = _problem(cfg)
    if problem.spec.dim != 1:
        raise ArgumentError(f"surface runs on a 1-D problem, {problem.name} has dim {problem.spec.dim}")
    sc = cfg.surface
    sample_rng, gp_rng, bann_rng = split_rng(make_rng(cfg.seed), 3)
    X = latin_or_uniform_init(problem.spec, sc.train_size, sample_rng)
    y = problem.evaluate_batch(X)
    lower, upper = problem.spec.lower_array, problem.spec.upper_array
    started = time.perf_counter()
    gp = GpSurrogate.fit(X, y, lower, upper, cfg.surrogate.base.gp, rng=gp_rng)
    bann = BannSurrogate.fit(X, y, lower, upper, members=sc.members, hidden=sc.hidden, cfg=cfg.surrogate.base.lm,
                             rng=bann_rng, workers=cfg.workers, log_func=log_func)
    run.phase("training", started)

    grid = np.linspace(lower[0], upper[0], sc.points)[:, None]
    true = problem.evaluate_batch(grid)
    gp_mean, gp_var = gp.predict(grid)
    bann_mean, bann_var = bann.predict(grid)
    run.csv("surface.csv", ["x", "true", "gp_mean", "gp_std", "bann_mean", "bann_std"],
            zip(grid[:, 0], true, gp_mean, np.sqrt(gp_var), bann_mean, np.sqrt(bann_var)))
    summary = [(name, count_local_optima(v), total_variation(v), float(np.sqrt(np.mean((v - true) ** 2))))
               for name, v in (("true", true), ("gp", gp_mean), ("bann", bann_mean))]
    run.csv("surface_summary.csv", ["surface", "local_optima", "total_variation", "rmse"], summary)
    run.csv("surface_samples.csv", ["x", "fitness"], zip(X[:, 0], y))
    return run.finish()


# ================= DISPATCH =================

RUNNERS = {
    "map-elites": run_map_elites,
    "sail": run_sail,
    "fig5": run_fig5,
    "fig6": run_fig6,
    "bakeoff": run_bakeoff,
    "surface": run_surface,
    "export": run_export,
}


def run_experiment(cfg: RunConfig, log_func=None) -> StudyResult:
    return RUNNERS[cfg.experiment](cfg, log_func=log_func)
