import numpy as np
import pytest

from resonorm.diophantine import golden_frequency, cubic_frequency


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def golden():
    return golden_frequency()


@pytest.fixture(scope="session")
def cubic():
    return cubic_frequency()
