import contextlib

import pytest

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL line per acceptance criterion."""
    log = request.config.stash[_ACCEPTANCE_KEY]

    @contextlib.contextmanager
    def _record(number, title):
        details = []
        try:
            yield details
        except BaseException:
            log.append((number, title, False, "; ".join(details)))
            raise
        log.append((number, title, True, "; ".join(details)))

    return _record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(log):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
