import numpy as np
import pytest

from ccmlab.hardy_grid import HardyField, make_grid


def random_hardy(grid, seed, decay=1.5):
    """Random Hardy spectrum with algebraic decay; fills the whole ladder."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(grid.n_modes) + 1j * rng.standard_normal(grid.n_modes)
    return HardyField(grid, (1.0 + grid.xi) ** (-decay) * g / np.sqrt(2.0))


@pytest.fixture
def small_grid():
    return make_grid(256, 40.0)


@pytest.fixture
def grid():
    return make_grid(1024, 100.0)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, ok, detail)`` for the per-criterion summary, then assert ``ok``."""

    def report(number, ok, detail):
        _ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {detail}")
