import os
import sys

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

sys.path.insert(0, os.path.dirname(__file__))

from hifigan import tensor as T  # noqa: E402


@pytest.fixture(autouse=True)
def _float64_single_thread():
    # every test starts in 64-bit mode on one BLAS thread
    with T.default_dtype(np.float64), threadpool_limits(1):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
