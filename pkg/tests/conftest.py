import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bellnc.geometry import make_shape  # noqa: E402
from bellnc.inequalities import classify_orbits, enumerate_facets  # noqa: E402
from bellnc.polytopes import assignment_vertices, product_vertices  # noqa: E402
from bellnc.quantum import effects  # noqa: E402

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def shapes():
    return {n: make_shape(n) for n in ("square", "octahedron", "cube",
                                        "icosahedron", "dodecahedron")}


@pytest.fixture(scope="session")
def ico_dodeca(shapes):
    ico, dod = shapes["icosahedron"], shapes["dodecahedron"]
    return ico, dod, effects(ico), effects(dod)


@pytest.fixture(scope="session")
def T_ico_dodeca(shapes):
    return product_vertices(assignment_vertices(shapes["icosahedron"]),
                            assignment_vertices(shapes["dodecahedron"]))


@pytest.fixture(scope="session")
def T_oct_cube(shapes):
    return product_vertices(assignment_vertices(shapes["octahedron"], exact=True),
                            assignment_vertices(shapes["cube"], exact=True))


@pytest.fixture(scope="session")
def oct_cube_facets(T_oct_cube):
    return enumerate_facets(T_oct_cube)


@pytest.fixture(scope="session")
def oct_cube_orbits(shapes, oct_cube_facets, T_oct_cube):
    nontrivial = [f for f in oct_cube_facets if f.kind == "facet"]
    return classify_orbits(nontrivial, shapes["octahedron"], shapes["cube"], T_oct_cube)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        yield


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
