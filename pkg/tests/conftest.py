import numpy as np
import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    _CRITERIA[number] = (ok, line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n][1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
