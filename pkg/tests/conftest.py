import numpy as np
import pytest

from spmpinn.config import default_cell


@pytest.fixture(scope="session")
def cell():
    return default_cell()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
