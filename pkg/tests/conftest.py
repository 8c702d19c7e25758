import contextlib
import time

ACCEPTANCE: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record one acceptance line; the block passes iff it raises nothing."""
    notes: list[str] = []
    start = time.perf_counter()
    try:
        yield notes
    except BaseException:
        status = "FAIL"
        raise
    else:
        status = "PASS"
    finally:
        took = time.perf_counter() - start
        extra = f" ({'; '.join(notes)})" if notes else ""
        ACCEPTANCE[number] = f"[{status}] criterion {number}: {title} [{took:.1f}s]{extra}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
