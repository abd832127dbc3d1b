import numpy as np
import pytest

from fpme.grid import Grid
from fpme.kernel import kernel_matrix

_ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def kernel_cache():
    cache = {}

    def get(d, n, sigma=0.5, **kw):
        key = (d, n, sigma, tuple(sorted(kw.items())))
        if key not in cache:
            from fpme.kernel import KernelConfig

            cache[key] = kernel_matrix(Grid(d, n), sigma, KernelConfig(**kw) if kw else None)
        return cache[key]

    return get


def random_density(rng, grid, low=0.2):
    r = low + rng.random(grid.shape)
    return r / (r.sum() * grid.cell_volume)


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one status line per acceptance criterion for the terminal summary."""
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def make_density(rng):
    return lambda grid, low=0.2: random_density(rng, grid, low)
