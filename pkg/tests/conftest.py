import numpy as np
import pytest

from wflab.spectral import MetricModel, solve

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a named acceptance outcome for the terminal summary."""

    def record(number, passed, detail):
        # a criterion with several clauses passes only if every clause does
        _CRITERIA.setdefault(number, []).append((bool(passed), detail))
        print("criterion %2d %s  %s" % (number, "PASS" if passed else "FAIL", detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        clauses = _CRITERIA[number]
        passed = all(ok for ok, _ in clauses)
        detail = "; ".join(d for _, d in clauses)
        terminalreporter.write_line("criterion %2d %s  %s" % (number, "PASS" if passed else "FAIL", detail))


@pytest.fixture(scope="session")
def flat1():
    return MetricModel.flat(1)


@pytest.fixture(scope="session")
def flat_basis_512(flat1):
    return solve(flat1, 512, 256)


@pytest.fixture(scope="session")
def rough_c11():
    return MetricModel.weierstrass(2.0, 0.15, 8, seed=1)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
