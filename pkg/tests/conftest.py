import numpy as np
import pytest

from proximon.camera import CameraParams
from proximon.model import FrameGeometry


@pytest.fixture
def camera():
    return CameraParams(3.0, 0.9, 0.5)


@pytest.fixture
def geom():
    return FrameGeometry(1920, 1080)


@pytest.fixture
def rng():
    return np.random.default_rng(20210905)
