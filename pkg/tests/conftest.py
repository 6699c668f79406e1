import pytest

from odomutant.dynamics import OdomutantSystem
from odomutant.families import (FeldmanParams, cyclic_family, dyadic_swap_family, entropy_family, feldman_family,
                                identity_family)
from odomutant.space import make_space


def const(q):
    return make_space({"kind": "rule", "rule": "constant", "value": q})


def toy_systems():
    """The five small systems the acceptance checks run on."""
    return {
        "identity": OdomutantSystem.of(identity_family(make_space({"kind": "explicit", "values": [3, 2, 3], "periodic": True}))),
        "cyclic": OdomutantSystem.of(cyclic_family(const(4))),
        "dyadic_swap": OdomutantSystem.of(dyadic_swap_family(const(2))),
        "entropy": OdomutantSystem.of(entropy_family(const(6), 1)),
        "feldman": OdomutantSystem.of(feldman_family(FeldmanParams((2,)))),
    }


@pytest.fixture(scope="session")
def toys():
    return toy_systems()


@pytest.fixture
def swap():
    return OdomutantSystem.of(dyadic_swap_family(const(2)))


# -- acceptance lines ----------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def accept():
    """Record one PASS/FAIL line per acceptance criterion; they are echoed in the terminal summary."""

    def record(tag: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)
