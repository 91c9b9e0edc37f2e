"""
HierSAIL - Benchmarks Module
Test objectives and feature functions: Ackley, Rastrigin and the synthetic
15-parameter foil proxy standing in for a CFD drag evaluation.
"""

import math

import numpy as np

from config import (
    ACKLEY_A, ACKLEY_B, ACKLEY_BOUND, RASTRIGIN_BOUND,
    FOIL_DIM, FOIL_LATENT_DIM, FOIL_SEED, FOIL_SHAPE_WAVES, FOIL_LOAD_DIRECTION,
)
from core import ArgumentError, DomainError, DomainSpec
from illumination import Problem


# ================= OBJECTIVES =================

def ackley(x, a: float = ACKLEY_A, b: float = ACKLEY_B, c: float = 2.0 * math.pi) -> float:
    """Ackley function, global minimum 0 at the origin."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(
        -a * np.exp(-b * np.sqrt(np.mean(x ** 2)))
        - np.exp(np.mean(np.cos(c * x)))
        + a
        + math.e
    )


def rastrigin(x) -> float:
    """Rastrigin function, global minimum 0 at the origin."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(10.0 * x.size + np.sum(x ** 2 - 10.0 * np.cos(2.0 * np.pi * x)))


def normalized_coordinates(spec: DomainSpec, count: int):
    """Feature function: the first `count` coordinates rescaled to [0, 1]."""
    lower = spec.lower_array[:count]
    span = spec.range[:count]

    def features(x):
        f = (np.asarray(x, dtype=float)[:count] - lower) / span
        return np.clip(f, 0.0, 1.0)

    return features


# ================= FOIL PROXY =================

FOIL_THICKNESS = slice(0, 8)
FOIL_CAMBER = slice(8, FOIL_DIM)


def _foil_latent_map() -> np.ndarray:
    """Fixed 15 -> 4 map: thickness mean, camber mean and two seeded random loadings."""
    m = np.zeros((FOIL_LATENT_DIM, FOIL_DIM))
    m[0, FOIL_THICKNESS] = 1.0 / (FOIL_THICKNESS.stop - FOIL_THICKNESS.start)
    m[1, FOIL_CAMBER] = 1.0 / (FOIL_CAMBER.stop - FOIL_CAMBER.start)
    m[2:] = 0.5 * np.random.default_rng(FOIL_SEED).standard_normal((FOIL_LATENT_DIM - 2, FOIL_DIM))
    return m


# drag depends on x only through FOIL_LATENT_MAP @ (x - 0.5)
FOIL_LATENT_MAP = _foil_latent_map()
FOIL_LOAD_WEIGHTS = np.asarray(FOIL_LOAD_DIRECTION, dtype=float) @ FOIL_LATENT_MAP[2:]
# max of |load| over the unit cube, reached at the corner picked by the weight signs
FOIL_LOAD_SPAN = 0.5 * float(np.sum(np.abs(FOIL_LOAD_WEIGHTS)))


def _check_foil_input(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (FOIL_DIM,):
        raise DomainError(f"foil_proxy expects {FOIL_DIM} parameters, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError(f"foil_proxy input outside the unit cube: {x.tolist()}")
    return x


def foil_latent(x) -> np.ndarray:
    return FOIL_LATENT_MAP @ (np.asarray(x, dtype=float) - 0.5)


def foil_shape_drag(z) -> float:
    """Multimodal part of the drag, a function of the thickness and camber latents only."""
    w = 2.0 * math.pi * FOIL_SHAPE_WAVES
    return (0.1 * (1.0 - math.cos(w * z[0]) * math.cos(w * z[1]))
            + 0.1 * (z[0] ** 2 + z[1] ** 2)
            + 0.03 * math.tanh(4.0 * z[0] * z[1]) ** 2)


def foil_drag(x) -> float:
    """Drag-like value of the 4-D latent projection, in [0.02, 0.54].

    The shape term is fixed once the thickness and camber means are. The load term
    is linear in the two seeded latents and lowest at one corner of the cube, so the
    best design for a given pair of means sits on the box boundary in all but a few
    parameters.
    """
    x = _check_foil_input(x)
    z = foil_latent(x)
    load = float(np.dot(FOIL_LOAD_DIRECTION, z[2:])) / FOIL_LOAD_SPAN
    return 0.02 + foil_shape_drag(z) + 0.125 * (1.0 - load)


def foil_features(x) -> np.ndarray:
    """("area-like", "camber-like") functionals of the thickness and camber means, in [0, 1]."""
    x = _check_foil_input(x)
    t = float(np.mean(x[FOIL_THICKNESS]))
    c = float(np.mean(x[FOIL_CAMBER]))
    area = t * t * (3.0 - 2.0 * t)
    camber = 0.5 + 0.5 * math.sin(math.pi * (c - 0.5))
    return np.clip(np.array([area, camber]), 0.0, 1.0)


def foil_proxy(x) -> dict:
    return {"drag": foil_drag(x), "features": foil_features(x)}


# ================= PROBLEM REGISTRY =================

def make_ackley_problem(dim: int = 1) -> Problem:
    spec = DomainSpec.box(dim, -ACKLEY_BOUND, ACKLEY_BOUND, feature_dim=min(dim, 2))
    return Problem(
        name="ackley1d" if dim == 1 else "ackley",
        spec=spec,
        objective=ackley,
        features=normalized_coordinates(spec, spec.feature_dim),
        fitness_offset=ACKLEY_A + math.e,
        optimum_x=(0.0,) * dim,
        optimum_value=0.0,
        description=f"Ackley, {dim}-D, domain [-{ACKLEY_BOUND}, {ACKLEY_BOUND}]",
    )


def make_rastrigin_problem(dim: int = 2) -> Problem:
    spec = DomainSpec.box(dim, -RASTRIGIN_BOUND, RASTRIGIN_BOUND, feature_dim=min(dim, 2))
    return Problem(
        name="rastrigin",
        spec=spec,
        objective=rastrigin,
        features=normalized_coordinates(spec, spec.feature_dim),
        # per-dimension upper bound of x^2 - 10 cos(2 pi x) + 10 on the domain
        fitness_offset=dim * (RASTRIGIN_BOUND ** 2 + 20.0),
        optimum_x=(0.0,) * dim,
        optimum_value=0.0,
        description=f"Rastrigin, {dim}-D, features = first two coordinates",
    )


def make_foil_problem(dim: int = FOIL_DIM) -> Problem:
    if dim != FOIL_DIM:
        raise ArgumentError(f"foil_proxy is fixed at {FOIL_DIM} parameters, got dim={dim}")
    return Problem(
        name="foil_proxy",
        spec=DomainSpec.box(FOIL_DIM, 0.0, 1.0, feature_dim=2),
        objective=foil_drag,
        features=foil_features,
        fitness_offset=1.0,
        description="synthetic stand-in for CFD airfoil drag (not an aerodynamic simulation)",
    )


PROBLEMS = {
    "ackley1d": lambda dim=None: make_ackley_problem(1),
    "ackley": lambda dim=None: make_ackley_problem(dim or 2),
    "rastrigin": lambda dim=None: make_rastrigin_problem(dim or 2),
    "foil_proxy": lambda dim=None: make_foil_problem(dim or FOIL_DIM),
}


def make_problem(name: str, dim: int = None) -> Problem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ArgumentError(f"unknown problem '{name}', choose from {sorted(PROBLEMS)}") from None
    return factory(dim)


def list_problems() -> list:
    return sorted(PROBLEMS)
