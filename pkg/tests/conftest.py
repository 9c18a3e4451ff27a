import os

import pytest

# keep worker pools small by default; tests that need more ask explicitly
os.environ.setdefault("MOLELAB_WORKERS", "1")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Print and record one PASS/FAIL line; returns ``ok`` for the caller to assert."""

    def emit(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)
        return ok

    return emit


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"
