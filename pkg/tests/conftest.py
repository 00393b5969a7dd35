import pytest

from kolmoflow.domain import GeometryParams, PhysicalParams
from kolmoflow.linstab import critical_reynolds


@pytest.fixture(scope="session")
def geom():
    return GeometryParams(0.7, 4, 1)


@pytest.fixture(scope="session")
def rc(geom):
    return critical_reynolds(20.0, geom)


@pytest.fixture(scope="session")
def phys_rc(rc):
    return PhysicalParams(20.0, rc)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
