from __future__ import annotations

from pathlib import Path

import pytest

from ftmas.model import COMPL, INCOMPL, SystemState, build_machine
from ftmas.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

I, C = INCOMPL, COMPL

# Canonical two-zone state written out by hand.
SIGMA0 = SystemState(
    n=2,
    k=1,
    stations=("B1", "B2"),
    robots=("R1", "R2"),
    territory=((I,), (I,)),
    responsible=("B1", "B2"),
    attached=("B1", "B2"),
    local_map=(((I,), (I,)), ((I,), (I,))),
    msg=frozenset(),
    asgn_z=(0, 0),
    asgn_s=(0, 0),
    active=frozenset({"R1", "R2"}),
    operating=frozenset({"B1", "B2"}),
    counter=2,
)


def scenario(name: str):
    return load_scenario(SCENARIOS / f"{name}.yaml")


@pytest.fixture
def sigma0() -> SystemState:
    return SIGMA0


@pytest.fixture
def machine():
    """σ0 machine with a 1 robot + 1 station fault budget."""
    return build_machine(scenario("sigma0_faults"))


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number: int, text: str, ok: bool) -> None:
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
