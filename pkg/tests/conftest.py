import math

import numpy as np
import pytest

from acmonopole.abelian import PointCharges, solve_dirac_potential
from acmonopole.geometry import ManifoldModel

_LINES = []


def record_line(line: str) -> None:
    _LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record():
    return record_line


@pytest.fixture(scope="session")
def cone():
    return ManifoldModel(kind="ConePerturbation", amplitude=0.05, rate=-1.0)


@pytest.fixture(scope="session")
def flat():
    return ManifoldModel()


@pytest.fixture(scope="session")
def cone_dirac(cone):
    return solve_dirac_potential(cone, PointCharges([[0.0, 0.0, 0.0]], [1], 1.0))


@pytest.fixture(scope="session")
def cone_states(cone, cone_dirac):
    """Glued radial states on the cone for the mass sweep."""
    from acmonopole.gluing import assemble_radial, make_params

    out = {}
    for m0 in (20.0, 40.0, 80.0):
        d = cone_dirac.with_mass(m0)
        out[m0] = assemble_radial(cone, make_params(d), d)
    return out


@pytest.fixture(scope="session")
def cone_solves(cone_states):
    from acmonopole.solver import monopole_solve_radial

    return {m0: monopole_solve_radial(st) for m0, st in cone_states.items()}


def random_ball_points(n: int, radius: float, seed: int = 0, center=(0.0, 0.0, 0.0)):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    return np.asarray(center) + u * (radius * rng.random(n) ** (1.0 / 3.0))[:, None]


TWO_PI = 2.0 * math.pi
