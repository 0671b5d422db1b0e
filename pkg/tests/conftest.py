import numpy as np
import pytest

from shapdag.data import Dataset

# acceptance criteria append (name, passed, detail) here; printed at the end of the run
CRITERIA: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(columns, values) -> Dataset:
    return Dataset(tuple(columns), np.asarray(values, dtype=float))
