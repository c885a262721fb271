import numpy as np
import pytest

from footprint_ergodic.dynamics import StateProjection
from footprint_ergodic.spectral import SpectralBasis


@pytest.fixture
def unit_basis():
    return SpectralBasis.build((1.0, 1.0), (10, 10))


@pytest.fixture
def drone_proj():
    return StateProjection((0, 1), 2)


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record a one-line acceptance verdict, printed in the terminal summary."""
    def record(n, ok, detail):
        _VERDICTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
