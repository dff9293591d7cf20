import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion after the run."""
    module = sys.modules.get("test_acceptance")
    log = getattr(module, "ACCEPTANCE_LOG", None) if module else None
    if log:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in log:
            terminalreporter.write_line(line)
