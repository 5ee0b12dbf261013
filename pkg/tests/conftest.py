import numpy as np
import pytest
from hypothesis import settings

from dropsense import _kernels
from dropsense import reference as ref
from dropsense.synth import synthesize

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def noiseless():
    """15 s noiseless trace, f_D = 29 Hz, C = 0.056, plus its ground truth."""
    return synthesize(ref.noiseless(15.0))


@pytest.fixture(scope="session")
def matched_10min():
    return synthesize(ref.matched_budget(600.0, seed=0))


@pytest.fixture
def numpy_backend():
    old = _kernels.backend()
    _kernels.set_backend("numpy")
    yield
    _kernels.set_backend(old)


def cosine(fs, duration, f, amp=1.0, phase=0.0):
    t = np.arange(int(round(fs * duration))) / fs
    return amp * np.cos(2 * np.pi * f * t + phase)
