import numpy as np
import pytest

from deskbot.simcore import CameraConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_camera():
    """Low-resolution camera to keep render-heavy tests fast."""
    return CameraConfig(width=64, height=24)
