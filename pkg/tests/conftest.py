import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _single_threaded_torch():
    # keep numeric comparisons stable regardless of the host's core count
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
