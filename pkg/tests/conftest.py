import numpy as np
import pytest

from vflsim.paillier import keygen


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def keys512():
    return keygen(512, seed=7)


@pytest.fixture(scope="session")
def keys128():
    return keygen(128, seed=3)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def record():
    """Collect one summary line per acceptance criterion."""

    def add(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((number, passed, detail))
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
