import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Print one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""
    lines = request.config.stash.setdefault(_LINES, [])

    def report(number, title, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}: {detail} ({elapsed:.2f} s / limit {limit:g} s)"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
