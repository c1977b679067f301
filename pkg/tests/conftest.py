import numpy as np
import pytest

from fdharvest.model import table1_instance

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def table1():
    return table1_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def verdict(request, capsys):
    """Record and print one PASS/FAIL line per acceptance check."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def report(tag: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} [{tag}] {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
