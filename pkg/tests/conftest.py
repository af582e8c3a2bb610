import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_report(request, capsys):
    """Print a PASS/FAIL line immediately and repeat it in the run summary."""

    def report(line):
        request.config.stash[_LINES].append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
