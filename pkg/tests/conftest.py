import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Re-emit the acceptance verdict lines after the test table, where they
    # survive output capture. The acceptance module appends to VERDICTS as
    # each criterion resolves.
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod is not None else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
