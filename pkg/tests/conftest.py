import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture(scope="session")
def verdict(request):
    """Record one PASS/FAIL/WARN line per acceptance criterion, printed at the end of the run."""
    lines = request.config.acceptance_lines

    def record(number, status, detail):
        line = f"criterion {number}: {status} - {detail}"
        lines[number] = line
        print(line)
        return status != "FAIL"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
