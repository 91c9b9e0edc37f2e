"""
HierSAIL - Core Domain Module
Search-space bounds, random generation, initialization and mutation shared by
all optimizers.
"""

from dataclasses import dataclass, field

import numpy as np

from config import INIT_STRATEGY


# ================= EXCEPTIONS =================

class ToolkitError(Exception):
    """Base exception for all toolkit operations."""
    pass


class ArgumentError(ToolkitError, ValueError):
    """An argument is outside its allowed range."""
    pass


class DomainError(ToolkitError, ValueError):
    """A value lies outside the domain it must belong to."""
    pass


class StateError(ToolkitError, RuntimeError):
    """The operation is not valid in the current state."""
    pass


class TrainingError(ToolkitError, RuntimeError):
    """A surrogate model could not be trained."""
    pass


# ================= RANDOM STATE =================

def make_rng(seed) -> np.random.Generator:
    """Create the generator used everywhere a RngState is required."""
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list:
    """Derive n independent child generators from a parent generator.

    One 64-bit seed is drawn from the parent and expanded with
    SeedSequence.spawn, so the children depend only on the parent's state.
    """
    root = np.random.SeedSequence(int(rng.integers(0, 2**63 - 1)))
    return [np.random.default_rng(child) for child in root.spawn(n)]


def seed_children(seed: int, n: int) -> list:
    """Independent generators derived from a master seed (replicates, cells)."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(n)]


# ================= DOMAIN TYPES =================

@dataclass(frozen=True)
class DomainSpec:
    """Bounded real search space plus the dimensionality of its feature map."""

    lower: tuple
    upper: tuple
    feature_dim: int = 2

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) < 1:
            raise DomainError("DomainSpec needs at least one dimension")
        if len(lower) != len(upper):
            raise DomainError(f"bound lengths differ: {len(lower)} vs {len(upper)}")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise DomainError(f"dimension {i}: lower bound {lo} must be < upper bound {hi}")
        if int(self.feature_dim) < 1:
            raise DomainError(f"feature_dim must be >= 1, got {self.feature_dim}")

    @classmethod
    def box(cls, dim: int, low: float, high: float, feature_dim: int = 2):
        return cls(lower=(low,) * dim, upper=(high,) * dim, feature_dim=feature_dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def range(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower_array + self.upper_array)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower_array, self.upper_array)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower_array) and np.all(x <= self.upper_array))


@dataclass(frozen=True)
class Sample:
    """A truly evaluated point: parameters, feature coordinates and fitness."""

    x: np.ndarray
    features: np.ndarray
    fitness: float
    meta: dict = field(default_factory=dict)


def samples_to_arrays(samples) -> tuple:
    """Stack a list of Samples into (X, F, y) arrays."""
    X = np.array([s.x for s in samples], dtype=float)
    F = np.array([s.features for s in samples], dtype=float)
    y = np.array([s.fitness for s in samples], dtype=float)
    return X, F, y


# ================= GENERATION / VARIATION =================

def random_vector(spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw inside the bounds."""
    return rng.uniform(spec.lower_array, spec.upper_array)


def _check_sigma(sigma_frac: float):
    if not (0.0 < sigma_frac <= 1.0):
        raise ArgumentError(f"sigma_frac must be in (0, 1], got {sigma_frac}")


def mutate(x, sigma_frac: float, spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian step scaled per dimension by the bound range, clamped to bounds."""
    _check_sigma(sigma_frac)
    x = np.asarray(x, dtype=float)
    child = x + rng.normal(0.0, 1.0, size=x.shape) * (sigma_frac * spec.range)
    return spec.clip(child)


def mutate_batch(X, sigma_frac: float, spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Row-wise mutate for an (n, dim) parent array."""
    _check_sigma(sigma_frac)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    children = X + rng.normal(0.0, 1.0, size=X.shape) * (sigma_frac * spec.range)
    return spec.clip(children)


def latin_or_uniform_init(spec: DomainSpec, n: int, rng: np.random.Generator,
                          strategy: str = INIT_STRATEGY) -> np.ndarray:
    """n initial vectors, stratified (Latin hypercube) or uniform.

    With the stratified strategy each dimension is cut into n equal-width
    strata and every stratum receives exactly one point.
    """
    if n < 1:
        raise ArgumentError(f"initial set size must be >= 1, got {n}")
    if strategy == "uniform":
        return rng.uniform(spec.lower_array, spec.upper_array, size=(n, spec.dim))
    if strategy != "stratified":
        raise ArgumentError(f"unknown init strategy: {strategy}")

    unit = np.empty((n, spec.dim))
    for j in range(spec.dim):
        strata = rng.permutation(n)
        unit[:, j] = (strata + rng.uniform(0.0, 1.0, size=n)) / n
    # keep the last stratum closed at 1.0 and never spill into the next
    unit = np.minimum(unit, np.nextafter(1.0, 0.0))
    return spec.lower_array + unit * spec.range
