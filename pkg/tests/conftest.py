import pytest

from neckspec.analysis import sweep
from neckspec.config import ConfigGraph

GRID = (1e-2, 1e-3, 1e-4, 1e-5)


def dumbbell(s_grid=GRID, **kw):
    return ConfigGraph.build([("A", 4.0), ("B", 4.0)], [("e1", ("A", "B"))], s_grid, **kw)


def chain3(s_grid=GRID, **kw):
    return ConfigGraph.build([("A", 4.0), ("B", 8.0), ("C", 4.0)],
                             [("e1", ("A", "B")), ("e2", ("B", "C"))], s_grid, **kw)


def single(s_grid=GRID, **kw):
    return ConfigGraph.build([("A", 4.0)], [], s_grid, **kw)


@pytest.fixture(scope="session")
def dumbbell_cfg():
    return dumbbell()


@pytest.fixture(scope="session")
def chain_cfg():
    return chain3()


@pytest.fixture(scope="session")
def dumbbell_table(dumbbell_cfg):
    return sweep(dumbbell_cfg)


@pytest.fixture(scope="session")
def chain_table(chain_cfg):
    return sweep(chain_cfg)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
