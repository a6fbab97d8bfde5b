import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE = {}


@contextmanager
def _record(number, title, budget=None):
    """Run one acceptance criterion, print and keep a one-line verdict."""
    start = time.perf_counter()
    failure = None
    try:
        yield
    except BaseException as exc:
        text = str(exc).strip().splitlines()
        failure = f"{type(exc).__name__}: {text[0] if text else ''}"
        raise
    finally:
        elapsed = time.perf_counter() - start
        if failure is None and budget is not None and elapsed >= budget:
            failure = f"over the {budget:g} s budget"
        verdict = "PASS" if failure is None else f"FAIL  [{failure}]"
        line = f"criterion {number:>2}: {verdict}  {title} ({elapsed:.2f} s)"
        _ACCEPTANCE[number] = line
        print(line)
    if failure is not None:
        pytest.fail(f"criterion {number}: {failure}")


@pytest.fixture
def criterion():
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
