import functools

import pytest
from hypothesis import settings

from gpmlab.density import anchor_grid, invariant_density, model_grid
from gpmlab.kernel import kernel_matrix
from gpmlab.maps import make_lsv

settings.register_profile("gpmlab", max_examples=40, deadline=None)
settings.load_profile("gpmlab")


@functools.lru_cache(maxsize=None)
def lsv_model(gamma, cells=1000):
    """(map, density, kernel) on a graded grid with 1/2 as a cell boundary."""
    m = make_lsv(gamma)
    g = anchor_grid(model_grid(m, cells), [0.5])
    d = invariant_density(m, g)
    return m, d, kernel_matrix(d, m, g)


@pytest.fixture(scope="session")
def lsv():
    return lsv_model


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
