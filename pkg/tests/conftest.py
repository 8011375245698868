import numpy as np
import pytest

from blemu.data import split
from blemu.emulator import fit_emulator
from blemu.synthetic import ScenarioSpec, generate_grid

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(name: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


SHAPES = ("monotone", "constant", "step", "kernel-draw")


@pytest.fixture(scope="session")
def scenarios():
    """One 13x13 grid per synthetic shape, each split 80/20."""
    out = {}
    for i, shape in enumerate(SHAPES):
        grid = generate_grid(ScenarioSpec(shape=shape, seed=11 + i))
        parts = split(grid, 0.8, seed=5)
        out[shape] = (parts, fit_emulator(parts.train))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)
