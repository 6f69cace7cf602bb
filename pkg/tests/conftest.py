import numpy as np
import pytest

from mrhomog.cellmesh import CellSpec, build_cell
from mrhomog.effective import solve_cell
from mrhomog.magnetostatics import MaterialParams

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square_mesh():
    return build_cell(CellSpec(1.0, 1.0, 0.19))


@pytest.fixture(scope="session")
def chain_mesh():
    return build_cell(CellSpec(2.0, 0.5, 0.19))


@pytest.fixture(scope="session")
def empty_mesh():
    return build_cell(CellSpec(1.0, 1.0, 0.0))


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_cell(CellSpec(1.0, 1.0, 0.19, circle_segments=32, grid_density=0.1))


@pytest.fixture(scope="session")
def square_result(square_mesh):
    return solve_cell(square_mesh, MaterialParams())


@pytest.fixture(scope="session")
def chain_result(chain_mesh):
    return solve_cell(chain_mesh, MaterialParams())


@pytest.fixture(scope="session")
def uniform_mu_result(square_mesh):
    return solve_cell(square_mesh, MaterialParams(mu_particle=1.0, mu_fluid=1.0))


def mirror_index(mesh, sx, sy):
    """Index map ``j -> k`` with ``nodes[k] = (sx x_j, sy y_j)``."""
    lookup = {(float(x), float(y)): i for i, (x, y) in enumerate(mesh.nodes)}
    return np.array([lookup[(float(sx * x) + 0.0, float(sy * y) + 0.0)]
                     for x, y in mesh.nodes])


@pytest.fixture(scope="session")
def mirror():
    return mirror_index
