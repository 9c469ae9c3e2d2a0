from __future__ import annotations

_criterion_lines: list[str] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _criterion_lines.extend(
            line for line in report.capstdout.splitlines() if line.startswith("[criterion")
        )


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
