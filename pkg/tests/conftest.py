"""Shared potentials and droplets (computed once per session)."""

import pytest

from coulombgas import droplet as dl
from coulombgas import families


@pytest.fixture(scope="session")
def ginibre():
    P = families.ginibre()
    return P, dl.compute_droplet(P)


@pytest.fixture(scope="session")
def annulus():
    """``q = r^4 - 2 r^2``: a single annulus."""
    P = families.even_polynomial([-2.0, 1.0])
    return P, dl.compute_droplet(P)


@pytest.fixture(scope="session")
def two_well():
    """Central disk plus an annulus separated by a spectral gap."""
    P = families.two_component()
    return P, dl.compute_droplet(P)


@pytest.fixture(scope="session")
def outpost():
    """Ginibre disk with a tuned bump creating an outer outpost circle."""
    P = families.ginibre_with_outpost()
    return P, dl.compute_droplet(P)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """``record(k, ok, detail)`` prints and stores one line per acceptance criterion."""

    def record(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
