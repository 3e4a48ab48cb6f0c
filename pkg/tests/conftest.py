import numpy as np
import pytest

from anytime_ppi.stats.running_moments import Observation, StreamState


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks that take more than a few seconds")


@pytest.fixture
def rng():
    return np.random.default_rng(20240317)


def stream_of(labels, predictions, unlabelled=(), buffered=True, pool_labelled=False):
    """A state fed record by record: the labelled pairs, then the unlabelled predictions."""
    state = StreamState(buffered=buffered, pool_labelled=pool_labelled)
    for y, f in zip(labels, predictions):
        state.update(Observation(prediction=float(f), label=float(y)))
    for f in unlabelled:
        state.update(Observation(prediction=float(f)))
    return state


@pytest.fixture
def noisy_stream(rng):
    """n = 200 labelled pairs with f = Y + N(0, 0.5^2) and N = 2000 unlabelled predictions."""
    y = rng.standard_normal(200)
    f = y + 0.5 * rng.standard_normal(200)
    pool = rng.standard_normal(2000) + 0.5 * rng.standard_normal(2000)
    return stream_of(y, f, pool)


@pytest.fixture
def make_stream():
    return stream_of
