import functools

import pytest

from bernstein_lab import models

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def cached_model(kind, *args):
    if kind == "circle":
        m = models.circle_model(*args)
    elif kind == "dirichlet_x2":
        n, = args
        m = models.dirichlet_interval_model(n, 12.0, lambda x: x * x, left=-6.0)
    elif kind == "dirichlet":
        m = models.dirichlet_interval_model(*args)
    elif kind == "divergence":
        n, seed = args
        m = models.divergence_form_model(
            n, 1.0, models.random_piecewise_coefficient(16, 1.0, 4.0, 1.0, seed))
    elif kind == "oscillator":
        m = models.harmonic_oscillator_model(*args)
    else:
        raise KeyError(kind)
    return m, models.eigensystem(m)


@pytest.fixture(scope="session")
def model():
    return cached_model


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
