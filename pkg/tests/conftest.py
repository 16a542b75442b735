import sys

import pytest

from doublephase.mesh import build_interval_mesh, build_rectangle_mesh


@pytest.fixture(scope="session")
def mesh1d():
    return build_interval_mesh(0.0, 1.0, 64)


@pytest.fixture(scope="session")
def mesh2d():
    return build_rectangle_mesh(1.0, 1.0, 16, 16)


@pytest.fixture(scope="session")
def small2d():
    return build_rectangle_mesh(1.0, 1.0, 6, 6)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
