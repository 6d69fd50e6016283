from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

# the (alpha, beta) grid used by derivative and monotonicity checks
AB_GRID = [(a, b) for a in (0.7, 0.8, 1.0, 1.2, 1.3, 2.0) for b in (-1.0, -0.5, 0.0, 0.5, 1.0)
           if a + b != 0] + [(-1.0, 2.0), (0.0, 1.0)]


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def assert_nonincreasing(trace, slack=1e-9):
    trace = np.asarray(trace)
    bad = np.nonzero(trace[1:] > trace[:-1] + slack * np.abs(trace[:-1]))[0]
    assert bad.size == 0, f"loss rose at steps {bad[:5] + 1}: {trace[bad[:5]]} -> {trace[bad[:5] + 1]}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cp_fixture_path():
    return DATA / "cp_3x4x5.coo"
