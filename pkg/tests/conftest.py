import numpy as np
import pytest

from texcamo.scene import bundled_car_path, load_obj
from texcamo.surrogate import Surrogate


@pytest.fixture(scope="session")
def car():
    return load_obj(bundled_car_path())


@pytest.fixture(scope="session")
def surrogate():
    return Surrogate(42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


QUAD_OBJ = """\
v -1 -1 0
v 1 -1 0
v 1 1 0
v -1 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 1/1 2/2 3/3 4/4
"""


@pytest.fixture
def quad_path(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text(QUAD_OBJ)
    return path


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(passed, detail)`` per criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
