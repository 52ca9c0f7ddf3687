import math

import numpy as np
import pytest

from lamflow.geometry.generators import gen_genus2, octagon_genus2_one_vertex
from lamflow.geometry.metric import curvature


def scaled_to_curvature(mesh, target):
    """Scale a constant-curvature mesh so that R == target at u = 0."""
    R = curvature(mesh).R
    assert np.ptp(R) < 1e-12 * abs(R[0])
    return mesh.scaled(math.sqrt(R[0] / target))


def homogeneous_u(t, r=-1.0, R0=-2.0, u0=0.0):
    """Closed form for spatially constant u on a surface of constant curvature R0."""
    w0 = math.exp(u0)
    return np.log((w0 - R0 / r) * np.exp(r * np.asarray(t)) + R0 / r)


@pytest.fixture(scope="session")
def homogeneous_mesh():
    return scaled_to_curvature(gen_genus2(0), -2.0)


@pytest.fixture(scope="session")
def one_vertex_mesh():
    return scaled_to_curvature(octagon_genus2_one_vertex(), -2.0)


@pytest.fixture(scope="session")
def genus2_fine():
    return gen_genus2(2)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines.extend(v for k, v in getattr(rep, "user_properties", []) if k == "acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
