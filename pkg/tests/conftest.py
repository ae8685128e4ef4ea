import math
from importlib import resources

import pytest

from acceptance_support import RESULTS
from qpmforge.config import load_config
from qpmforge.pipeline import build_setup


def example_path(name):
    return resources.files("qpmforge") / "examples" / f"{name}.toml"


@pytest.fixture(scope="session")
def fig1_setup():
    return build_setup(load_config(example_path("fig1")))


@pytest.fixture(scope="session")
def fig2_setup():
    return build_setup(load_config(example_path("fig2")))


@pytest.fixture(scope="session")
def fig3_setup():
    return build_setup(load_config(example_path("fig3")))


@pytest.fixture(scope="session")
def fig2_jsa(fig2_setup):
    return fig2_setup.jsa()


@pytest.fixture(scope="session")
def fig3_jsa(fig3_setup):
    return fig3_setup.jsa()


@pytest.fixture
def sigma():
    return 2 * math.pi * 0.127e12


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        status, title, detail = RESULTS[number]
        line = f"criterion {number:2d} {status:5s} {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
