import pytest

# (criterion number, PASS/FAIL/INFO, text) recorded by the acceptance suite
ACCEPTANCE_LINES: list[tuple[int, str, str]] = []


@pytest.fixture
def acceptance_report():
    def report(number: int, ok, text: str) -> None:
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append((number, status, text))
        print(f"[{status}] criterion {number}: {text}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    order = {"PASS": 0, "FAIL": 0, "INFO": 1}
    for number, status, text in sorted(ACCEPTANCE_LINES, key=lambda x: (x[0], order[x[1]])):
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")
