import numpy as np
import pytest

from stratlab import group as G
from stratlab.grid import default_grid, lattice_grid
from stratlab.spectral import decompose_grid


@pytest.fixture(scope="session")
def h1():
    return G.heisenberg()


@pytest.fixture(scope="session")
def grid7(h1):
    return lattice_grid(h1, (7, 7, 7), 0.5)


@pytest.fixture(scope="session")
def grid9(h1):
    return lattice_grid(h1, (9, 9, 9), 0.5)


@pytest.fixture(scope="session")
def dec7(grid7, tmp_path_factory):
    return decompose_grid(grid7, cache_dir=tmp_path_factory.mktemp("cache7"))


@pytest.fixture(scope="session")
def dec9(grid9, tmp_path_factory):
    return decompose_grid(grid9, cache_dir=tmp_path_factory.mktemp("cache9"))


@pytest.fixture(scope="session")
def default_dec():
    """Acceptance platform decomposition; cached on disk after the first run."""
    return decompose_grid(default_grid())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary: one PASS/FAIL line per criterion


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """``record(criterion, ok, detail)``; several calls for one criterion are AND-ed."""
    table = request.config._acceptance

    def _record(criterion: int, ok: bool, detail: str) -> None:
        prev = table.get(criterion)
        if prev is None:
            table[criterion] = (bool(ok), [detail])
        else:
            table[criterion] = (prev[0] and bool(ok), prev[1] + [detail])

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = getattr(config, "_acceptance", {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(table):
        ok, details = table[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
