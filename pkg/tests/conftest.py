"""
Shared fixtures for the HierSAIL test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core import DomainSpec  # noqa: E402
from benchmarks import make_problem  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def unit_square():
    return DomainSpec.box(2, 0.0, 1.0, feature_dim=2)


@pytest.fixture
def rastrigin2d():
    return make_problem("rastrigin", 2)


@pytest.fixture
def ackley1d():
    return make_problem("ackley1d")


@pytest.fixture
def foil():
    return make_problem("foil_proxy")
