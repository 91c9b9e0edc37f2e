"""
HierSAIL - Run Configuration Module
Study settings and the strict YAML run-config parser used by the command line.

A run config is a YAML mapping. Top-level keys:

    experiment: map-elites | sail | fig5 | fig6 | bakeoff | surface | export
    problem:    registered problem name (ackley1d, ackley, rastrigin, foil_proxy)
    dim:        problem dimension (where the problem allows it)
    seed:       master seed
    out:        output directory
    workers:    worker threads for replicates / grid cells / true evaluations

and one section per concern: illumination, acquisition, surrogate (with
nested gp, lm and hierarchy sections), fig5, fig6, bakeoff, surface. Keys of
every section are the fields of the matching settings class below. Unknown
keys, wrong value types and invalid values are errors reported with the
file line they come from.
"""

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from config import (
    OUT_DIR, WORKERS, DEFAULT_SEED, ANN_HIDDEN, BANN_MEMBERS, HILL_STEP_FRAC, HILL_MAX_ITERS,
    FIG5_REPLICATES, FIG5_STARTS, FIG5_TRAIN_SIZE, FIG6_SEGMENTS, FIG6_EVALUATIONS, FIG6_MIN_SEGMENT,
    FIG6_MEMBERS, FIG6_MODEL, FIG6_SAMPLES_PER_WEIGHT, HOLDOUT_FRACTION, BAKEOFF_GRID, BAKEOFF_HOLDOUT,
    SURFACE_POINTS, PCA_CUTOFF,
)
from core import ToolkitError, ArgumentError
from gp import GpSearchConfig
from ann import LmConfig
from surrogates import BaseModelConfig, BASE_KINDS
from hierarchy import HierarchyConfig
from illumination import IlluminationConfig
from acquisition import AcquisitionConfig, SurrogateConfig
from benchmarks import list_problems

EXPERIMENTS = ("map-elites", "sail", "fig5", "fig6", "bakeoff", "surface", "export")

DEFAULT_PROBLEMS = {
    "fig5": "ackley1d",
    "surface": "ackley1d",
    "fig6": "foil_proxy",
}


class ConfigError(ToolkitError):
    """Malformed or invalid run configuration."""
    pass


# ================= STUDY SETTINGS =================

@dataclass(frozen=True)
class Fig5Config:
    replicates: int = FIG5_REPLICATES
    starts: int = FIG5_STARTS
    train_size: int = FIG5_TRAIN_SIZE
    members: int = BANN_MEMBERS
    hidden: int = ANN_HIDDEN
    step_frac: float = HILL_STEP_FRAC
    max_iters: int = HILL_MAX_ITERS

    def __post_init__(self):
        if self.replicates < 1 or self.starts < 1:
            raise ArgumentError("fig5 needs at least one replicate and one start")
        if self.train_size < 2:
            raise ArgumentError(f"train_size must be >= 2, got {self.train_size}")
        if not (0.0 < self.step_frac <= 1.0):
            raise ArgumentError(f"step_frac must be in (0, 1], got {self.step_frac}")


@dataclass(frozen=True)
class Fig6Config:
    segments: int = FIG6_SEGMENTS
    evaluations: int = FIG6_EVALUATIONS
    min_segment: int = FIG6_MIN_SEGMENT
    model: str = FIG6_MODEL
    members: int = FIG6_MEMBERS
    samples_per_weight: float = FIG6_SAMPLES_PER_WEIGHT
    holdout_fraction: float = HOLDOUT_FRACTION
    pca_cutoff: float = PCA_CUTOFF

    def __post_init__(self):
        if self.segments < 1:
            raise ArgumentError(f"segments must be >= 1, got {self.segments}")
        if self.min_segment < 2:
            raise ArgumentError(f"min_segment must be >= 2, got {self.min_segment}")
        if self.model not in BASE_KINDS:
            raise ArgumentError(f"unknown local model '{self.model}', choose from {BASE_KINDS}")
        if not self.samples_per_weight > 0:
            raise ArgumentError(f"samples_per_weight must be positive, got {self.samples_per_weight}")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ArgumentError(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}")


@dataclass(frozen=True)
class BakeoffConfig:
    grid: tuple = BAKEOFF_GRID
    holdout: int = BAKEOFF_HOLDOUT
    models: tuple = ("gp", "bann", "hierarchical")
    oracle: bool = True

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(n) for n in self.grid))
        object.__setattr__(self, "models", tuple(self.models))
        if not self.grid or any(n < 2 for n in self.grid):
            raise ArgumentError(f"grid sizes must be >= 2, got {self.grid}")
        if self.holdout < 2:
            raise ArgumentError(f"holdout must be >= 2, got {self.holdout}")
        for m in self.models:
            if m not in BASE_KINDS + ("hierarchical",):
                raise ArgumentError(f"unknown bakeoff model '{m}'")


@dataclass(frozen=True)
class SurfaceConfig:
    points: int = SURFACE_POINTS
    train_size: int = FIG5_TRAIN_SIZE
    members: int = BANN_MEMBERS
    hidden: int = ANN_HIDDEN

    def __post_init__(self):
        if self.points < 3:
            raise ArgumentError(f"points must be >= 3, got {self.points}")
        if self.train_size < 2:
            raise ArgumentError(f"train_size must be >= 2, got {self.train_size}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    problem: str = None
    dim: int = None
    seed: int = DEFAULT_SEED
    out: Path = OUT_DIR
    workers: int = WORKERS
    illumination: IlluminationConfig = field(default_factory=IlluminationConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    fig5: Fig5Config = field(default_factory=Fig5Config)
    fig6: Fig6Config = field(default_factory=Fig6Config)
    bakeoff: BakeoffConfig = field(default_factory=BakeoffConfig)
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ArgumentError(f"unknown experiment '{self.experiment}', choose from {EXPERIMENTS}")
        object.__setattr__(self, "out", Path(self.out))
        if self.problem is None:
            object.__setattr__(self, "problem", DEFAULT_PROBLEMS.get(self.experiment, "rastrigin"))
        if self.problem not in list_problems():
            raise ArgumentError(f"unknown problem '{self.problem}', choose from {list_problems()}")
        if self.workers < 1:
            raise ArgumentError(f"workers must be >= 1, got {self.workers}")
        if self.acquisition.surrogate_kind != self.surrogate.kind:
            raise ArgumentError(f"acquisition.surrogate_kind '{self.acquisition.surrogate_kind}' and surrogate.kind "
                                f"'{self.surrogate.kind}' must name the same model")

    def snapshot(self) -> dict:
        """JSON-ready copy for the run manifest (output directory left out)."""
        data = dataclasses.asdict(self)
        data.pop("out")
        data.pop("workers")
        return data


# ================= PARSING =================

SECTIONS = {
    "illumination": IlluminationConfig,
    "acquisition": AcquisitionConfig,
    "fig5": Fig5Config,
    "fig6": Fig6Config,
    "bakeoff": BakeoffConfig,
    "surface": SurfaceConfig,
}

# keys owned by the top level, not by the sections
EXCLUDED = {"illumination": {"seed"}}

SURROGATE_KEYS = ("kind", "node_kind", "hidden", "members", "gp", "lm", "hierarchy")
TOP_KEYS = ("experiment", "problem", "dim", "seed", "out", "workers") + tuple(SECTIONS) + ("surrogate",)


def _line_index(node, prefix=(), lines=None) -> dict:
    """Map key paths to 1-based source lines."""
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (str(key_node.value),)
            lines[path] = key_node.start_mark.line + 1
            _line_index(value_node, path, lines)
    return lines


class _Reader:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def error(self, path: tuple, message: str) -> ConfigError:
        line = self.lines.get(path)
        while line is None and path:
            path = path[:-1]
            line = self.lines.get(path)
        return ConfigError(f"{self.source}:{line or 1}: {message}")

    def mapping(self, value, path: tuple, allowed) -> dict:
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(path, f"'{'.'.join(path)}' must be a mapping")
        for key in value:
            if key not in allowed:
                raise self.error(path + (str(key),), f"unknown key '{key}' in "
                                 f"{'.'.join(path) or 'top level'}; allowed: {', '.join(allowed)}")
        return value

    def scalar(self, value, expected, path: tuple):
        name = ".".join(path)
        if expected is bool:
            ok = isinstance(value, bool)
        elif expected is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif expected is float:
            if isinstance(value, str):
                # YAML 1.1 reads exponents without a dot ("1e-6") as strings
                try:
                    value = float(value)
                except ValueError:
                    pass
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif expected is str:
            ok = isinstance(value, str)
        elif expected is tuple:
            ok = isinstance(value, list)
            value = tuple(value) if ok else value
        elif expected is Path:
            ok = isinstance(value, str)
            value = Path(value) if ok else value
        else:
            ok = True
        if not ok:
            raise self.error(path, f"'{name}' expects {expected.__name__}, got {type(value).__name__}")
        return value

    def build(self, cls, value, path: tuple, exclude=()):
        types = {f.name: f.type for f in dataclasses.fields(cls) if f.name not in exclude}
        data = self.mapping(value, path, tuple(types))
        kwargs = {k: self.scalar(v, types[k], path + (k,)) for k, v in data.items()}
        return self.construct(cls, kwargs, path)

    def construct(self, cls, kwargs: dict, path: tuple):
        try:
            return cls(**kwargs)
        except ArgumentError as e:
            raise self.error(path, str(e)) from None


def _surrogate(reader: _Reader, value) -> SurrogateConfig:
    path = ("surrogate",)
    data = reader.mapping(value, path, SURROGATE_KEYS)
    base_kwargs = {}
    if "node_kind" in data:
        base_kwargs["kind"] = reader.scalar(data["node_kind"], str, path + ("node_kind",))
    for key in ("hidden", "members"):
        if key in data:
            base_kwargs[key] = reader.scalar(data[key], int, path + (key,))
    if "gp" in data:
        base_kwargs["gp"] = reader.build(GpSearchConfig, data["gp"], path + ("gp",))
    if "lm" in data:
        base_kwargs["lm"] = reader.build(LmConfig, data["lm"], path + ("lm",))
    kwargs = {"base": reader.construct(BaseModelConfig, base_kwargs, path)}
    if "kind" in data:
        kwargs["kind"] = reader.scalar(data["kind"], str, path + ("kind",))
    if "hierarchy" in data:
        kwargs["hierarchy"] = reader.build(HierarchyConfig, data["hierarchy"], path + ("hierarchy",))
    return reader.construct(SurrogateConfig, kwargs, path)


def _sync_surrogate_kind(reader: _Reader, data: dict, kwargs: dict):
    """acquisition.surrogate_kind and surrogate.kind name one model: either implies the other."""
    acq, surrogate = kwargs.get("acquisition"), kwargs.get("surrogate")
    acq_set = acq is not None and "surrogate_kind" in (data["acquisition"] or {})
    kind_set = surrogate is not None and "kind" in (data["surrogate"] or {})
    if acq_set and kind_set:
        if acq.surrogate_kind != surrogate.kind:
            raise reader.error(("surrogate", "kind"), f"surrogate.kind '{surrogate.kind}' contradicts "
                               f"acquisition.surrogate_kind '{acq.surrogate_kind}'")
    elif acq_set:
        kwargs["surrogate"] = replace(surrogate or SurrogateConfig(), kind=acq.surrogate_kind)
    elif kind_set:
        kwargs["acquisition"] = replace(acq or AcquisitionConfig(), surrogate_kind=surrogate.kind)


def parse_run_config(text: str, source: str = "<config>", experiment: str = None) -> RunConfig:
    """Parse YAML text into a RunConfig; `experiment` (from the command) must agree with the file."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{source}:{line}: {problem}") from None

    reader = _Reader(source, _line_index(node))
    data = reader.mapping(data, (), TOP_KEYS)

    kwargs = {}
    for key, expected in (("experiment", str), ("problem", str), ("dim", int), ("seed", int),
                          ("out", Path), ("workers", int)):
        if key in data and data[key] is not None:
            kwargs[key] = reader.scalar(data[key], expected, (key,))
    if experiment is not None:
        if kwargs.get("experiment", experiment) != experiment:
            raise reader.error(("experiment",), f"config is for '{kwargs['experiment']}', "
                                                f"not '{experiment}'")
        kwargs["experiment"] = experiment
    if "experiment" not in kwargs:
        raise reader.error((), "missing 'experiment'")

    for name, cls in SECTIONS.items():
        if name in data:
            kwargs[name] = reader.build(cls, data[name], (name,), exclude=EXCLUDED.get(name, ()))
    if "surrogate" in data:
        kwargs["surrogate"] = _surrogate(reader, data["surrogate"])
    _sync_surrogate_kind(reader, data, kwargs)
    return reader.construct(RunConfig, kwargs, ())


def load_run_config(path, experiment: str = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config file: {e}") from None
    return parse_run_config(text, source=str(path), experiment=experiment)


def apply_overrides(cfg: RunConfig, seed: int = None, out=None, workers: int = None) -> RunConfig:
    """Command-line values win over the file."""
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out"] = Path(out)
    if workers is not None:
        changes["workers"] = workers
    return replace(cfg, **changes) if changes else cfg
