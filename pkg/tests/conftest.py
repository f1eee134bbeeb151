from __future__ import annotations

import math

import pytest

from shotnoise.model import TWO_PI, CavityMode, QubitParams, SystemModel

OMEGA_C = TWO_PI * 8.01e9


def make_system(
    n_bar: float = 0.0,
    kappa: float | None = None,
    chi: float = TWO_PI * 7e6,
    t1: float = math.inf,
    gamma_res: float = 0.0,
    q: float = 1.0e15,
) -> SystemModel:
    """Single-mode system; ``kappa`` (1/s) overrides ``q`` when given."""
    if kappa is not None:
        q = OMEGA_C / kappa
    qubit = QubitParams(TWO_PI * 6.65e9, TWO_PI * 340e6, t1=t1, gamma_res=gamma_res)
    mode = CavityMode(1, OMEGA_C, TWO_PI * 127e6, chi, (q,), n_bar=n_bar)
    return SystemModel(qubit, (mode,))


@pytest.fixture
def system_factory():
    return make_system


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
