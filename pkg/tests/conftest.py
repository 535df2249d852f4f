import numpy as np
import pytest

from vagcn.autodiff import default_dtype

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
STARTED: set[int] = set()


@pytest.fixture(autouse=True)
def float64_mode():
    """Tests run in float64 unless they opt into float32 themselves."""
    with default_dtype(np.float64):
        yield


def pytest_terminal_summary(terminalreporter):
    if not STARTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(STARTED):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (stopped before reaching a verdict)")
