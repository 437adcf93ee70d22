import math

import numpy as np
import pytest

from omp_lab.quantum import Ensemble

R1 = (1 / math.sqrt(2), 1 / math.sqrt(2), 0.0)
R2 = (-3 / 8, 3 * math.sqrt(3) / 8, 0.0)
TRINE = [(math.cos(a), math.sin(a), 0.0) for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)]


@pytest.fixture
def reference_pair():
    return Ensemble.from_bloch([0.5, 0.5], [R1, R2])


@pytest.fixture
def trine():
    return Ensemble.from_bloch([1 / 3] * 3, TRINE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
