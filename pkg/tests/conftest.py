import time

SUITE_BUDGET_S = 120.0
_start = {}


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    secs = time.perf_counter() - _start.get("t", time.perf_counter())
    verdict = "PASS" if secs < SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"[acceptance 11] {verdict}  full suite wall time {secs:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
