import numpy as np
import pytest

from spectralweight.mesh import TriangleMesh
from spectralweight.pipeline import synth_radius
from spectralweight.shapes import fibonacci_directions, sphere_mesh
from spectralweight.spectral import build_laplacian, solve_eigs


@pytest.fixture(scope="session")
def sphere200():
    return sphere_mesh(200)


@pytest.fixture(scope="session")
def sphere200_eigs(sphere200):
    return solve_eigs(build_laplacian(sphere200), 50)


@pytest.fixture(scope="session")
def bumpy_mesh():
    """Ellipsoid-ish closed mesh without symmetries, ~400 vertices."""
    d = fibonacci_directions(400)
    bumps = [(np.array([0.0, 0.6, 0.8]), 0.05, 0.4), (np.array([1.0, 0.0, 0.0]), 0.03, 0.3)]
    v = d * synth_radius(d, (3.0, 1.5, 1.0), bumps)[:, None]
    return TriangleMesh(v, sphere_mesh(400).faces)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if any(acceptance_log.RESULTS.values()):
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.summary_lines():
            terminalreporter.write_line(line)
