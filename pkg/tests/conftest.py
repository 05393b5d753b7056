import numpy as np
import pytest

from mvring.data import make_scene, render_views
from mvring.geometry import ViewRing


@pytest.fixture(scope="session")
def ring32():
    return ViewRing(f=12, W=32, H=32)


@pytest.fixture(scope="session")
def scene0():
    return make_scene(0)


@pytest.fixture(scope="session")
def rset0(scene0, ring32):
    return render_views(scene0, ring32)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
