"""Shared test fixtures and the acceptance-criteria summary hook."""
import pytest

# One line per acceptance criterion, collected as the tests run and printed
# in a dedicated section at the end of the pytest output.
_criterion_lines = []


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for one acceptance criterion."""
    def record(line: str) -> None:
        _criterion_lines.append(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_criterion_lines):
        terminalreporter.write_line(line)
