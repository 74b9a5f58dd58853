import re

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def record(request):
    """Store one summary line per acceptance criterion."""
    lines = request.config.stash[_LINES]

    def add(criterion, passed, detail):
        lines.append((criterion, bool(passed), detail))
        return passed

    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    # criteria are ints or labels such as "10i"
    order = lambda r: (int(re.match(r"\d+", str(r[0])).group()), str(r[0]))
    for criterion, passed, detail in sorted(lines, key=order):
        terminalreporter.write_line(f"criterion {criterion:>4}: {'PASS' if passed else 'FAIL'}  {detail}")
