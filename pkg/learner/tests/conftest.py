import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.graphs import Dag
from src.protocol import ScoreParams
from src.sem import Dataset, SemModel, sample_data


def sem_from_edges(p: int, edges, weight: float = 1.0) -> SemModel:
    """Unit-variance SEM over 0-based edges with a common coefficient."""
    B = np.zeros((p, p))
    for i, j in edges:
        B[i, j] = weight
    return SemModel(B, np.ones(p))


def draw(p: int, edges, n: int, seed: int, weight: float = 1.0) -> tuple[Dag, Dataset]:
    m = sem_from_edges(p, edges, weight)
    return m.dag, sample_data(m, n, np.random.default_rng(seed))


@pytest.fixture
def weak_p3():
    """Chain 1->2->3 with few samples so that every class keeps posterior mass."""
    dag, data = draw(3, [(0, 1), (1, 2)], n=20, seed=11, weight=0.6)
    params = ScoreParams(c2=0.5, d_in=2, d_out=2)
    return dag, data, params


@pytest.fixture
def strong_p3():
    dag, data = draw(3, [(0, 1), (1, 2)], n=200, seed=5)
    params = ScoreParams(c2=4.0, d_in=2, d_out=2)
    return dag, data, params


@pytest.fixture
def strong_p4():
    """Chain 1->2->3 with node 4 isolated."""
    dag, data = draw(4, [(0, 1), (1, 2)], n=2000, seed=3)
    params = ScoreParams(c2=2.0, d_in=2, d_out=4)
    return dag, data, params


@pytest.fixture(scope="session")
def strong_p5():
    """1->2->3 and 4->5, n = 5000."""
    dag, data = draw(5, [(0, 1), (1, 2), (3, 4)], n=5000, seed=2024)
    params = ScoreParams(c2=4.0, c1=1.0, alpha=0.5, gamma=1.0, kappa=0.0, d_in=2, d_out=5)
    return dag, data, params
