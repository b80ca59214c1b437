import numpy as np
import pytest

from micropolar import spectral_core as sc


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def g3():
    return sc.make_grid(3, 16)


@pytest.fixture
def g2():
    return sc.make_grid(2, 32)


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


# acceptance report: one line per criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
