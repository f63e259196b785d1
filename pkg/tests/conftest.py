from __future__ import annotations

import pytest

from preshape_opt import data_path
from preshape_opt.mesh import load_msh


@pytest.fixture(scope="session")
def model_mesh_path():
    return data_path("disc_in_rect.msh")


@pytest.fixture
def model_mesh(model_mesh_path):
    return load_msh(model_mesh_path)


@pytest.fixture(scope="session")
def target_mesh():
    return load_msh(data_path("bottle_target.msh"))


@pytest.fixture
def hexagon():
    return load_msh(data_path("hexagon.msh"))


@pytest.fixture
def square_in_square():
    return load_msh(data_path("square_in_square.msh"))


@pytest.fixture
def graded_rect():
    return load_msh(data_path("graded_rect.msh"))


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
