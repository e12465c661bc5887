"""Shared test configuration: acceptance result collection and summary."""

ACCEPTANCE_RESULTS = []


def record_acceptance(tag, passed, detail):
    """Register one acceptance check outcome for the end-of-run summary."""
    ACCEPTANCE_RESULTS.append((tag, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for tag, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {tag}: {detail}")
    failed = sum(1 for _, ok, _ in ACCEPTANCE_RESULTS if not ok)
    total = len(ACCEPTANCE_RESULTS)
    terminalreporter.write_line(f"{total - failed}/{total} acceptance criteria passed")
