import numpy as np
import pytest
from hypothesis import settings

from ledips.geometry import CameraCalibration, VehicleGeometry
from ledips.identification import build_id_table

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def geom():
    return VehicleGeometry()


@pytest.fixture
def cal():
    return CameraCalibration.for_map()


@pytest.fixture
def table():
    return build_id_table(50.0, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
