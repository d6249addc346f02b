import pytest

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one verdict line per acceptance criterion; shown in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, passed: bool, detail: str, seconds: float, budget: float | None):
        limit = f" (budget {budget:g} s)" if budget is not None else ""
        line = (f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}  "
                f"[{seconds:.2f} s{limit}]")
        print(line)
        lines.append((number, line))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
