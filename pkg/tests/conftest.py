import pytest

_criteria = {}


@pytest.fixture
def record_criterion():
    """Store the check rows behind one acceptance criterion for the end-of-run report."""

    def record(number, title, results):
        _criteria[number] = (title, list(results))
        return all(r.passed for r in results)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        title, results = _criteria[number]
        status = "PASS" if results and all(r.passed for r in results) else "FAIL"
        tr.write_line(f"{status} {number:2d}. {title}")
        for r in results:
            tr.write_line(f"       {r.line()}")
