from __future__ import annotations

import pytest

from ddfem.equilibrium import build_projector
from ddfem.material import generate_grid
from ddfem.mesh import build_mesh
from ddfem.problems import source_fourier
from ddfem.spaces import PhaseField


@pytest.fixture(scope="session")
def fourier_projector20():
    return build_projector(build_mesh(20), source_fourier)


@pytest.fixture(scope="session")
def fourier_grid():
    return generate_grid(105, "fourier")


def random_field(rng, nt, scale=1.0, with_flux=None):
    y = PhaseField(scale * rng.standard_normal((nt, 2)), scale * rng.standard_normal((nt, 2)))
    if with_flux is not None:
        y = PhaseField(y.r, y.w, scale * rng.standard_normal(with_flux))
    return y


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
