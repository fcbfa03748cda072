"""Shared generators for random transducers, oracles and programs."""

import numpy as np
import pytest

from transducers.canonical import CanonicalTransducer, OracleSlot
from transducers.linalg import haar_unitary, random_state
from transducers.program import QuantumProgram, QuerySite


def random_canonical(rng, h, work, slots, name=""):
    """slots: list of (name, dim, mult)."""
    sl = [OracleSlot(nm, d, m) for nm, d, m in slots]
    n = h + work + sum(d * m for _, d, m in slots)
    return CanonicalTransducer(h, work, sl, haar_unitary(n, rng), name=name)


def random_oracles(rng, S):
    return {s.name: haar_unitary(s.dim, rng) for s in S.slots}


def random_program(rng, dim=4, n_steps=5, n_slots=2):
    names = [f"o{i}" for i in range(n_slots)]
    slots = {}
    for nm in names:
        d = int(rng.choice([2, dim // 2]))
        cols = rng.permutation(dim)[: (dim // d) * d].reshape(-1, d)
        slots[nm] = QuerySite(cols[: int(rng.integers(1, cols.shape[0] + 1))])
    steps = []
    for _ in range(n_steps):
        if rng.random() < 0.5:
            steps.append(("gate", haar_unitary(dim, rng)))
        else:
            steps.append(("query", names[int(rng.integers(n_slots))]))
    return QuantumProgram(dim, slots, steps, name="rand")


def program_oracles(rng, A):
    return {nm: haar_unitary(site.dim, rng) for nm, site in A.slots.items()}


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


__all__ = ["ACCEPTANCE", "random_canonical", "random_oracles", "random_program", "program_oracles", "random_state"]
