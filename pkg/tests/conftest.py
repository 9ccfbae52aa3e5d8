import pathlib

import numpy as np
import pytest

from synthetic import blob_scene, orbit_cameras

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_scene():
    return blob_scene(np.random.default_rng(2024))


@pytest.fixture
def cameras():
    return orbit_cameras(6, size=64)
