"""
HierSAIL - Archive Module
The discretized feature map: bin indexing, elite storage, the insertion rule
and map metrics.
"""

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core import ArgumentError, DomainError, StateError


# ================= TYPES =================

class InsertionOutcome(enum.Enum):
    INSERTED_EMPTY = "inserted-empty"
    REPLACED = "replaced"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Elite:
    x: np.ndarray
    features: np.ndarray
    fitness: float


@dataclass(frozen=True)
class ArchiveMetrics:
    coverage: float
    qd_score: float
    best: float


# ================= BINNING =================

def bin_index(f, resolution) -> tuple:
    """Integer bin coordinates of normalized feature coordinates.

    index[i] = floor(f[i] * resolution[i]), with 1.0 clamped into the last bin.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    resolution = tuple(int(r) for r in resolution)
    if f.shape[0] != len(resolution):
        raise DomainError(f"feature length {f.shape[0]} does not match resolution {resolution}")
    if not np.all(np.isfinite(f)) or np.any(f < 0.0) or np.any(f > 1.0):
        raise DomainError(f"feature coordinates outside [0, 1]: {f.tolist()}")
    index = np.floor(f * np.asarray(resolution)).astype(int)
    index = np.minimum(index, np.asarray(resolution) - 1)
    return tuple(int(i) for i in index)


# ================= ARCHIVE =================

class Archive:
    """Dense grid of optional elites, one per bin."""

    def __init__(self, resolution):
        self.resolution = tuple(int(r) for r in resolution)
        if not self.resolution or any(r < 1 for r in self.resolution):
            raise ArgumentError(f"resolution must be positive bin counts, got {resolution}")
        self.bins = np.empty(self.resolution, dtype=object)
        self._keys = []

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def occupied(self) -> int:
        return len(self._keys)

    def get(self, index):
        return self.bins[tuple(index)]

    def offer(self, candidate: Elite) -> InsertionOutcome:
        """MAP-Elites insertion: empty bin wins, otherwise strictly higher fitness wins."""
        fitness = float(candidate.fitness)
        if not np.isfinite(fitness):
            raise ArgumentError(f"non-finite fitness {fitness} for {np.asarray(candidate.x).tolist()}")
        index = bin_index(candidate.features, self.resolution)
        incumbent = self.bins[index]
        if incumbent is None:
            self.bins[index] = candidate
            self._keys.append(index)
            return InsertionOutcome.INSERTED_EMPTY
        if fitness > incumbent.fitness:
            self.bins[index] = candidate
            return InsertionOutcome.REPLACED
        return InsertionOutcome.REJECTED

    def occupied_indices(self) -> list:
        """Occupied bin coordinates in row-major order."""
        return sorted(self._keys)

    def elites(self) -> list:
        return [self.bins[idx] for idx in self.occupied_indices()]

    def random_elite(self, rng: np.random.Generator) -> Elite:
        """Uniform draw over occupied bins."""
        if not self._keys:
            raise StateError("cannot select a parent from an empty archive")
        return self.bins[self._keys[int(rng.integers(len(self._keys)))]]

    def random_elites(self, rng: np.random.Generator, n: int) -> list:
        """n independent uniform draws over occupied bins."""
        if not self._keys:
            raise StateError("cannot select a parent from an empty archive")
        picks = rng.integers(len(self._keys), size=n)
        return [self.bins[self._keys[int(i)]] for i in picks]

    def metrics(self) -> ArchiveMetrics:
        elites = self.elites()
        if not elites:
            return ArchiveMetrics(coverage=0.0, qd_score=0.0, best=float("-inf"))
        return ArchiveMetrics(
            coverage=len(elites) / self.size,
            qd_score=float(sum(e.fitness for e in elites)),
            best=float(max(e.fitness for e in elites)),
        )

    def copy(self) -> "Archive":
        clone = Archive(self.resolution)
        clone.bins = self.bins.copy()
        clone._keys = list(self._keys)
        return clone


def random_elite(archive: Archive, rng: np.random.Generator) -> Elite:
    return archive.random_elite(rng)


def offer(archive: Archive, candidate: Elite) -> InsertionOutcome:
    return archive.offer(candidate)


def metrics(archive: Archive) -> ArchiveMetrics:
    return archive.metrics()


def rescore(archive: Archive, evaluate) -> float:
    """QD-score of an archive's elites under another fitness function (reporting only)."""
    return float(sum(evaluate(e.x) for e in archive.elites()))


# ================= EXPORT =================

def export_archive_csv(archive: Archive, path) -> Path:
    """One row per occupied bin, row-major bin order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_cols = ["bin_i", "bin_j", "bin_k"][:len(archive.resolution)]
    if len(archive.resolution) > 3:
        bin_cols = [f"bin_{d}" for d in range(len(archive.resolution))]
    elites = archive.elites()
    n_feat = len(elites[0].features) if elites else len(archive.resolution)
    n_x = len(elites[0].x) if elites else 0
    header = bin_cols + ["fitness"] + [f"feat_{d}" for d in range(n_feat)] + [f"x_{d}" for d in range(n_x)]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for idx in archive.occupied_indices():
            e = archive.bins[idx]
            writer.writerow(
                list(idx) + [repr(float(e.fitness))]
                + [repr(float(v)) for v in e.features]
                + [repr(float(v)) for v in e.x]
            )
    return path
