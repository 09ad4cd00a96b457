import time

import pytest

_RESULTS: dict[int, tuple[str, str, float]] = {}


class Criterion:
    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.detail = ""

    def __enter__(self):
        self._t0 = time.perf_counter()
        _RESULTS[self.number] = ("FAIL", self.title, 0.0)
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self._t0
        ok = exc_type is None and dt < self.limit_s
        status = "PASS" if ok else "FAIL"
        _RESULTS[self.number] = (status, f"{self.title}{' | ' + self.detail if self.detail else ''}", dt)
        print(f"criterion {self.number:2d} {status} ({dt:.2f}s) {self.title} {self.detail}")
        if exc_type is None and not ok:
            raise AssertionError(f"criterion {self.number} exceeded its {self.limit_s}s budget ({dt:.1f}s)")
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, text, dt = _RESULTS[n]
        terminalreporter.write_line(f"[{status}] criterion {n:2d} ({dt:6.2f}s): {text}")
