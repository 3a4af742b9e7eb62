import contextlib
import time

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with criterion(3, "rank recovery") as note: ...; note("ndcg=1.0")``.
    """
    lines = request.config.stash[_LINES]

    @contextlib.contextmanager
    def record(number: int, title: str):
        details: list[str] = []
        start = time.perf_counter()
        try:
            yield details.append
        except BaseException as exc:
            lines.append(f"criterion {number:>2} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        else:
            extra = f" ({'; '.join(details)})" if details else ""
            lines.append(f"criterion {number:>2} PASS  {title}{extra} [{time.perf_counter() - start:.2f}s]")
        finally:
            print(lines[-1])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
