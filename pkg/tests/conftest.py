"""Small reference instances shared across the test modules."""

from __future__ import annotations

import numpy as np
import pytest

from phdamp.phmodel import to_port_hamiltonian
from phdamp.structure import spring_mass_chain


def oscillator(m=1.0, k=1.0, c=0.1):
    """Single damped mass-spring, force applied to the mass."""
    return to_port_hamiltonian(spring_mass_chain([m], [k], alpha1=c / m, alpha2=0.0))


def two_mass_two_actuators():
    """Four states, two actuators; used for the unconstrained Riccati comparison."""
    model = spring_mass_chain([1.0, 1.0], [4.0, 4.0], actuated=((-1, 0), (0, 1)), alpha1=0.1, alpha2=0.01)
    return to_port_hamiltonian(model), np.array([0.5, -0.3, 1.0, 0.4])


def two_mass_one_actuator():
    """Four states, one ground actuator; supplied-energy solutions show singular arcs."""
    model = spring_mass_chain([1.0, 1.0], [1.0, 1.0], alpha1=0.05, alpha2=0.05)
    return to_port_hamiltonian(model), np.array([0.0, 0.0, 1.0, 1.5])


@pytest.fixture
def osc():
    return oscillator()


@pytest.fixture
def chain2():
    return two_mass_two_actuators()


@pytest.fixture
def chain1():
    return two_mass_one_actuator()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed live and in the summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
