"""Shared fixtures: bundled scenarios and their nominal traces (simulated once per session)."""

from __future__ import annotations

import pytest

from bfppc.engine import simulate
from bfppc.scenario import load_scenario

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def example1():
    return load_scenario("example1")


@pytest.fixture(scope="session")
def example1_synth():
    return load_scenario("example1_synth")


@pytest.fixture(scope="session")
def example2():
    return load_scenario("example2")


@pytest.fixture(scope="session")
def example1_trace(example1):
    return simulate(example1, step=1e-4, t_end=10.0)


@pytest.fixture(scope="session")
def example2_trace(example2):
    return simulate(example2, step=1e-4, t_end=15.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
