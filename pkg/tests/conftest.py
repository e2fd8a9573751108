import pytest

from hvperiods.numerics import PrecisionContext

# Contexts are frozen dataclasses; equal contexts share the module-level caches.
LOW = PrecisionContext(40, 150, 1e-18)
MID = PrecisionContext(60, 200, 1e-25)


@pytest.fixture(scope="session")
def low():
    return LOW


@pytest.fixture(scope="session")
def mid():
    return MID


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record the outcome of one acceptance criterion for the terminal summary."""
    board = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        board[number] = (passed, title, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {title} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    board = config.stash.get(_ACCEPTANCE, {})
    if not board:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(board):
        passed, title, detail = board[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n:2d}. {title}  {detail}".rstrip())
