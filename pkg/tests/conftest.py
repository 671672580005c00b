import numpy as np
import pytest

import fractalrcm as fr

# acceptance tests append "criterion N: PASS/FAIL ..." here; printed after the run
ACCEPTANCE_LINES = []


def interval_spec():
    # two maps on [0, 1]: x/2 and x/2 + 1/2; the classic 1d nested set
    return fr.IFSSpec(1, 2.0, [(np.eye(1), np.zeros(1)), (np.eye(1), np.array([0.5]))])


@pytest.fixture(scope="session")
def gasket():
    return fr.preset("sierpinski-gasket")


@pytest.fixture(scope="session")
def vicsek():
    return fr.preset("vicsek-2d")


@pytest.fixture(scope="session")
def gasket_fp(gasket):
    return fr.find_fixed_point(gasket)


@pytest.fixture(scope="session")
def gasket_g2(gasket):
    return fr.build_graph(gasket, 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
