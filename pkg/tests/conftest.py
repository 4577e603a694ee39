from __future__ import annotations

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    """Records one acceptance line; the test still asserts on its own."""

    def __init__(self, number: int):
        self.number = number

    def record(self, ok: bool, detail: str) -> bool:
        _RESULTS[self.number] = (bool(ok), detail)
        print(f"criterion {self.number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok


@pytest.fixture
def criterion(request):
    return Criterion(request.node.get_closest_marker("criterion").args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
