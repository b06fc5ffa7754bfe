import contextlib
import time

import numpy as np
import pytest

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion(request):
    """Time a block against its budget and log one PASS/FAIL line for it."""
    log = request.config.stash.setdefault(_ACCEPTANCE, [])

    @contextlib.contextmanager
    def run(number: int, title: str, budget_s: float):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            line = f"FAIL  [{number}] {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            log.append(line)
            print(line)
            raise
        elapsed = time.perf_counter() - t0
        ok = elapsed <= budget_s
        line = (f"{'PASS' if ok else 'FAIL'}  [{number}] {title} "
                f"({elapsed:.1f} s of {budget_s:g} s budget)")
        log.append(line)
        print(line)
        assert ok, f"runtime {elapsed:.1f} s exceeds the {budget_s:g} s budget"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
