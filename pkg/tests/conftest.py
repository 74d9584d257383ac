import numpy as np
import pytest

from meshcurv.mesh import Mesh
from meshcurv.shapes import ShapeSpec, synth_shape


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running end-to-end checks (acceptance suite)")


@pytest.fixture
def tetrahedron():
    verts = np.array([[1.0, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(verts, faces)


@pytest.fixture
def single_triangle():
    return Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                np.array([[0, 1, 2]]))


@pytest.fixture
def unit_grid():
    return synth_shape(ShapeSpec("plane-grid", nx=10, ny=10, edge=1.0))


@pytest.fixture
def small_sphere():
    return synth_shape(ShapeSpec("icosphere", radius=1.0, subdivisions=2))
