"""
HierSAIL - Hierarchy Module
Feature-space segmentation (k-means), per-segment PCA reduction and the
residual-coupled model tree used as a hierarchical surrogate.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from config import (
    HIER_DEPTH, HIER_BRANCHING, HIER_MIN_LEAF, HIER_RESTARTS, HIER_GAMMA, HIER_MODE,
    HIER_CONFIDENCE, PCA_CUTOFF, KMEANS_MAX_ITERS,
)
from core import ArgumentError, TrainingError, Sample, samples_to_arrays, split_rng
from surrogates import BaseModelConfig, BASE_KINDS, ZeroSurrogate, data_bounds, train_base_model
from utils import run_parallel

BUILD_MODES = ("residual", "independent-subsets")
CONFIDENCE_STRATEGIES = ("flat-variance", "depth-weighted")


# ================= K-MEANS =================

@dataclass(frozen=True)
class KMeansResult:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float


def _sq_distances(P, C) -> np.ndarray:
    diff = P[:, None, :] - C[None, :, :]
    return np.sum(diff * diff, axis=2)


def _inertia(P, C, labels) -> float:
    diff = P - C[labels]
    return float(np.sum(diff * diff))


def kmeans_plusplus(points, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seed k centroids, each new one drawn with probability proportional to D^2."""
    P = np.asarray(points, dtype=float)
    chosen = [int(rng.integers(P.shape[0]))]
    d2 = np.sum((P - P[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(np.sum(d2))
        if total > 0.0:
            nxt = int(rng.choice(P.shape[0], p=d2 / total))
        else:
            nxt = int(rng.integers(P.shape[0]))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((P - P[nxt]) ** 2, axis=1))
    return P[chosen].copy()


def _update_centroids(P, labels, C) -> np.ndarray:
    new = C.copy()
    dist = np.sum((P - C[labels]) ** 2, axis=1)
    for j in range(C.shape[0]):
        members = labels == j
        if np.any(members):
            new[j] = P[members].mean(axis=0)
        else:
            # empty cluster takes over the worst-served point
            far = int(np.argmax(dist))
            new[j] = P[far]
            dist[far] = -1.0
    return new


def _lloyd(P, C, max_iters: int, trace: list = None) -> tuple:
    labels = np.argmin(_sq_distances(P, C), axis=1)
    if trace is not None:
        trace.append(_inertia(P, C, labels))
    for _ in range(max_iters):
        C = _update_centroids(P, labels, C)
        new_labels = np.argmin(_sq_distances(P, C), axis=1)
        if trace is not None:
            trace.append(_inertia(P, C, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return C, labels, _inertia(P, C, labels)


def kmeans(points, k: int, restarts: int = HIER_RESTARTS, rng: np.random.Generator = None,
           max_iters: int = KMEANS_MAX_ITERS, trace: list = None) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds; the lowest-inertia of `restarts` runs wins.

    Each run stops when assignments no longer change or after max_iters
    updates. With `trace` given, one list of per-iteration inertias is
    appended per restart.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    if P.shape[0] < k:
        raise ArgumentError(f"k-means needs at least k={k} points, got {P.shape[0]}")
    if restarts < 1:
        raise ArgumentError(f"restarts must be >= 1, got {restarts}")
    rng = rng if rng is not None else np.random.default_rng(0)

    best = None
    for _ in range(restarts):
        run_trace = [] if trace is not None else None
        C, labels, inertia = _lloyd(P, kmeans_plusplus(P, k, rng), max_iters, run_trace)
        if trace is not None:
            trace.append(run_trace)
        if best is None or inertia < best.inertia:
            best = KMeansResult(k=k, centroids=C, assignment=labels, inertia=inertia)
    return best


# ================= PCA =================

@dataclass(frozen=True)
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray           # (d, r), orthonormal columns
    eigenvalues: np.ndarray          # all d, descending, biased covariance
    explained: np.ndarray            # all d fractions, sum to 1
    retained: int
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def dropped_variance(self) -> float:
        return float(np.sum(self.eigenvalues[self.retained:]))


def pca_fit(X, cutoff: float = PCA_CUTOFF) -> PcaProjection:
    """Eigendecomposition of the sample covariance, dropping components below `cutoff`.

    At least one component is always kept. Identical samples give a
    one-axis projection flagged as degenerate.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise ArgumentError(f"PCA needs at least 2 samples, got {n}")
    if not (0.0 <= cutoff < 1.0):
        raise ArgumentError(f"cutoff must be in [0, 1), got {cutoff}")
    mean = X.mean(axis=0)

    if np.all(np.ptp(X, axis=0) == 0.0):
        explained = np.zeros(d)
        explained[0] = 1.0
        return PcaProjection(mean=mean, components=np.eye(d)[:, :1], eigenvalues=np.zeros(d),
                             explained=explained, retained=1, degenerate=True)

    Xc = X - mean
    cov = Xc.T @ Xc / n
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = np.maximum(values[order], 0.0)
    vectors = vectors[:, order]
    # sign convention: largest-magnitude entry of each axis is positive
    signs = np.sign(vectors[np.argmax(np.abs(vectors), axis=0), np.arange(d)])
    vectors = vectors * np.where(signs == 0, 1.0, signs)

    explained = values / np.sum(values)
    retained = max(1, int(np.sum(explained >= cutoff)))
    return PcaProjection(mean=mean, components=vectors[:, :retained].copy(), eigenvalues=values,
                         explained=explained, retained=retained)


def _check_dim(p: PcaProjection, width: int, what: str):
    if width != p.dim:
        raise ArgumentError(f"{what} has {width} columns, projection expects {p.dim}")


def pca_project(p: PcaProjection, x) -> np.ndarray:
    """components^T (x - mean); accepts one vector or rows of vectors."""
    x = np.asarray(x, dtype=float)
    _check_dim(p, x.shape[-1], "input")
    return (x - p.mean) @ p.components


def pca_lift(p: PcaProjection, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != p.retained:
        raise ArgumentError(f"reduced vector has {z.shape[-1]} entries, projection keeps {p.retained}")
    return p.mean + z @ p.components.T


# ================= CONFIDENCE =================

def hier_confidence(path_variances, strategy: str = HIER_CONFIDENCE, gamma: float = HIER_GAMMA,
                    member_predictions=None) -> float:
    """Combine per-level model variances along one routed path.

    flat-variance: spread of the leaf-level ensemble's full-path member
    predictions (unbiased), or the leaf model's own variance when no member
    predictions are given. depth-weighted: sum_d w_d var_d with
    w_d proportional to gamma^(leaf_depth - d), normalized.
    """
    if strategy not in CONFIDENCE_STRATEGIES:
        raise ArgumentError(f"unknown confidence strategy '{strategy}', choose from {CONFIDENCE_STRATEGIES}")
    v = np.asarray(path_variances, dtype=float)
    if v.size == 0:
        raise ArgumentError("confidence needs at least one path variance")
    if np.any(v < 0):
        raise ArgumentError(f"variances must be non-negative, got {v.tolist()}")
    if strategy == "flat-variance":
        if member_predictions is not None and len(member_predictions) >= 2:
            return float(np.var(np.asarray(member_predictions, dtype=float), ddof=1))
        return float(v[-1])
    if not gamma > 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    w = gamma ** (v.size - 1 - np.arange(v.size, dtype=float))
    return float(np.sum(w * v) / np.sum(w))


# ================= MODEL TREE =================

@dataclass(frozen=True)
class HierarchyConfig:
    depth: int = HIER_DEPTH
    branching: int = HIER_BRANCHING
    min_leaf_samples: int = HIER_MIN_LEAF
    restarts: int = HIER_RESTARTS
    mode: str = HIER_MODE
    confidence: str = HIER_CONFIDENCE
    gamma: float = HIER_GAMMA
    pca_cutoff: float = PCA_CUTOFF
    level_kinds: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "level_kinds", tuple(self.level_kinds))
        if self.depth < 0:
            raise ArgumentError(f"depth must be >= 0, got {self.depth}")
        if self.branching < 2:
            raise ArgumentError(f"branching must be >= 2, got {self.branching}")
        if self.min_leaf_samples < 2:
            raise ArgumentError(f"min_leaf_samples must be >= 2, got {self.min_leaf_samples}")
        if self.restarts < 1:
            raise ArgumentError(f"restarts must be >= 1, got {self.restarts}")
        if self.mode not in BUILD_MODES:
            raise ArgumentError(f"unknown build mode '{self.mode}', choose from {BUILD_MODES}")
        if self.confidence not in CONFIDENCE_STRATEGIES:
            raise ArgumentError(f"unknown confidence strategy '{self.confidence}'")
        if not self.gamma > 0:
            raise ArgumentError(f"gamma must be positive, got {self.gamma}")
        for kind in self.level_kinds:
            if kind not in BASE_KINDS:
                raise ArgumentError(f"unknown node model kind '{kind}', choose from {BASE_KINDS}")

    def kind_at(self, depth: int, default: str) -> str:
        if depth < len(self.level_kinds):
            return self.level_kinds[depth]
        return default


@dataclass
class SegmentNode:
    depth: int
    centroid: np.ndarray
    sample_indices: np.ndarray
    pca: PcaProjection
    model: object
    training_rmse: float = 0.0
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def predict(self, X) -> tuple:
        return self.model.predict(pca_project(self.pca, np.atleast_2d(X)))

    def route(self, F) -> np.ndarray:
        """Index of the nearest child centroid for each feature row."""
        C = np.array([c.centroid for c in self.children])
        return np.argmin(_sq_distances(np.atleast_2d(F), C), axis=1)


class HierarchicalSurrogate:
    """Model tree over feature-space segments.

    In residual mode the mean is the sum of the routed path's node
    predictions; in independent-subsets mode it is their average.
    """

    kind = "hierarchical"

    def __init__(self, root: SegmentNode, config: HierarchyConfig):
        self.root = root
        self.config = config

    def route(self, f) -> list:
        """Nodes from root to leaf reached by nearest-centroid descent."""
        node = self.root
        path = [node]
        while node.children:
            node = node.children[int(node.route(np.atleast_1d(f))[0])]
            path.append(node)
        return path

    def leaves(self) -> list:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    @property
    def max_depth(self) -> int:
        return max(leaf.depth for leaf in self.leaves())

    def predict(self, X, F=None) -> tuple:
        if F is None:
            raise ArgumentError("the hierarchical surrogate routes on feature coordinates; F is required")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = np.atleast_2d(np.asarray(F, dtype=float))
        n = X.shape[0]
        levels = self.max_depth + 1
        means = np.zeros((n, levels))
        variances = np.zeros((n, levels))
        leaf_depth = np.zeros(n, dtype=int)

        stack = [(self.root, np.arange(n))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            m, v = node.predict(X[rows])
            means[rows, node.depth] = m
            variances[rows, node.depth] = v
            if node.is_leaf:
                leaf_depth[rows] = node.depth
                continue
            choice = node.route(F[rows])
            for j, child in enumerate(node.children):
                stack.append((child, rows[choice == j]))

        on_path = np.arange(levels)[None, :] <= leaf_depth[:, None]
        mean = np.zeros(n)
        for d in range(levels):
            mean = mean + np.where(on_path[:, d], means[:, d], 0.0)
        if self.config.mode == "independent-subsets":
            mean = mean / (leaf_depth + 1)

        if self.config.confidence == "flat-variance":
            conf = variances[np.arange(n), leaf_depth]
        else:
            exponent = np.maximum(leaf_depth[:, None] - np.arange(levels)[None, :], 0)
            w = np.where(on_path, self.config.gamma ** exponent.astype(float), 0.0)
            conf = np.sum(w * variances, axis=1) / np.sum(w, axis=1)
        return mean, conf


def path_predictions(h: HierarchicalSurrogate, x, f) -> list:
    """(node, mean, variance) for every node on the routed path."""
    out = []
    for node in h.route(f):
        m, v = node.predict(np.asarray(x, dtype=float)[None, :])
        out.append((node, float(m[0]), float(v[0])))
    return out


def hier_predict(h: HierarchicalSurrogate, x, f) -> dict:
    """Routed prediction at one point: {"mean", "confidence"}."""
    preds = path_predictions(h, x, f)
    means = [m for _, m, _ in preds]
    mean = 0.0
    for m in means:
        mean += m
    if h.config.mode == "independent-subsets":
        mean /= len(means)
    leaf = preds[-1][0]
    members = None
    if h.config.confidence == "flat-variance" and hasattr(leaf.model, "member_predictions"):
        z = pca_project(leaf.pca, np.asarray(x, dtype=float)[None, :])
        offset = sum(means[:-1]) if h.config.mode == "residual" else 0.0
        members = offset + leaf.model.member_predictions(z)[:, 0]
    conf = hier_confidence([v for _, _, v in preds], h.config.confidence, h.config.gamma, members)
    return {"mean": float(mean), "confidence": conf}


# ================= BUILD =================

def _as_arrays(samples) -> tuple:
    if isinstance(samples, tuple) and len(samples) == 3:
        X, F, y = samples
        return (np.atleast_2d(np.asarray(X, dtype=float)), np.atleast_2d(np.asarray(F, dtype=float)),
                np.asarray(y, dtype=float).ravel())
    samples = list(samples)
    if samples and not isinstance(samples[0], Sample):
        raise ArgumentError("build_hierarchy expects Samples or an (X, F, y) tuple")
    return samples_to_arrays(samples)


def build_hierarchy(samples, config: HierarchyConfig = None, base: BaseModelConfig = None,
                    rng: np.random.Generator = None, log_func=None, workers: int = 1) -> HierarchicalSurrogate:
    """Build the model tree on a sample set.

    Every node projects its segment's parameter vectors with its own PCA and
    trains a base model there: the root on raw targets, children (residual
    mode) on y minus the parent chain's prediction. A node splits into
    `branching` k-means segments of feature space while depth allows and
    every segment keeps at least min_leaf_samples samples. A node whose model
    fails to train becomes a zero-predicting leaf.
    """
    config = config or HierarchyConfig()
    base = base or BaseModelConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    X, F, y = _as_arrays(samples)
    if X.shape[0] < 2:
        raise ArgumentError(f"a hierarchy needs at least 2 samples, got {X.shape[0]}")

    def build_node(depth, idx, centroid, targets, node_rng):
        model_rng, split_rng_, child_seed_rng = split_rng(node_rng, 3)
        pca = pca_fit(X[idx], config.pca_cutoff)
        Z = pca_project(pca, X[idx])
        lower, upper = data_bounds(Z)
        kind = config.kind_at(depth, base.kind)
        failed = False
        try:
            model = train_base_model(base, Z, targets, model_rng, lower, upper, kind=kind, log_func=log_func)
        except TrainingError as e:
            if log_func:
                log_func(f"hierarchy: {kind} model at depth {depth} ({idx.size} samples) failed, "
                         f"using a zero-residual leaf: {e}", "warning")
            model = ZeroSurrogate()
            failed = True
        fitted, _ = model.predict(Z)
        node = SegmentNode(depth=depth, centroid=np.asarray(centroid, dtype=float), sample_indices=idx,
                           pca=pca, model=model,
                           training_rmse=float(np.sqrt(np.mean((targets - fitted) ** 2))))
        if failed or depth >= config.depth or idx.size < config.branching * config.min_leaf_samples:
            return node

        km = kmeans(F[idx], config.branching, config.restarts, split_rng_)
        sizes = np.bincount(km.assignment, minlength=config.branching)
        if np.any(sizes < config.min_leaf_samples):
            return node
        child_targets = targets - fitted if config.mode == "residual" else targets
        child_rngs = split_rng(child_seed_rng, config.branching)
        tasks = []
        for j in range(config.branching):
            members = km.assignment == j
            tasks.append(lambda j=j, members=members: build_node(
                depth + 1, idx[members], km.centroids[j], child_targets[members], child_rngs[j]))
        node.children = run_parallel(tasks, workers=workers)
        return node

    root = build_node(0, np.arange(X.shape[0]), F.mean(axis=0), y, rng)
    h = HierarchicalSurrogate(root, config)
    if log_func:
        log_func(f"hierarchy: {len(h.leaves())} leaves, depth {h.max_depth}, {X.shape[0]} samples", "info")
    return h


# ================= EXPORT =================

def hierarchy_to_dict(h: HierarchicalSurrogate) -> dict:
    def node_dict(node):
        return {
            "depth": node.depth,
            "centroid": [float(v) for v in node.centroid],
            "sample_count": int(node.sample_indices.size),
            "retained_dims": int(node.pca.retained),
            "training_rmse": float(node.training_rmse),
            "model": node.model.kind,
            "children": [node_dict(c) for c in node.children],
        }
    return {"mode": h.config.mode, "confidence": h.config.confidence, "root": node_dict(h.root)}


def export_hierarchy_json(h: HierarchicalSurrogate, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(hierarchy_to_dict(h), f, indent=2)
    return path
