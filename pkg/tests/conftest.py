import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

from pfinsler import lie_algebra as la  # noqa: E402
from pfinsler import polynorm as pn  # noqa: E402

ALGEBRAS_3D = ["heisenberg3", "so3", "sl2", "e2", "sol3", "hyperbolic3", "abelian3"]


def norms_3d():
    return {
        "cube": pn.cube(3),
        "cross": pn.cross_polytope(3),
        "diamond": pn.diamond_prism(),
        "skew": pn.skew_box(3),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def square():
    return pn.cube(2)


@pytest.fixture
def heis():
    return la.catalog("heisenberg3")


@pytest.fixture
def so3():
    return la.catalog("so3")
