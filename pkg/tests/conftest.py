import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fovsplat import fixtures


@pytest.fixture(scope="session")
def plane_fixture():
    """Dense overcomplete textured-plane fit; anchors most training tests."""
    return fixtures.build_plane_fixture()


@pytest.fixture(scope="session")
def l1_result(plane_fixture):
    return fixtures.build_l1_model(plane_fixture)


@pytest.fixture(scope="session")
def fr_result(plane_fixture, l1_result):
    return fixtures.build_fr_model(plane_fixture, l1_result.model)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
