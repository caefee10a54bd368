import numpy as np
import pytest

from rte_rbm.fom import build_system
from rte_rbm.problems import (Box, CrossSectionTerm, Discretization, ProblemDefinition, SourceTerm, const,
                              get_problem, param)


def slab_problem(scattering=(), absorption=(), sources=(), inflow=None, lower=(0.0,), upper=(1.0,),
                 param_lower=(1.0, 1.0), param_upper=(2.0, 2.0), solver="direct"):
    """Small configurable 1D problem for unit tests."""
    return ProblemDefinition(
        name="test-slab", dim_x=1, lower=lower, upper=upper, scattering=tuple(scattering),
        absorption=tuple(absorption), sources=tuple(sources), inflow=inflow, param_lower=param_lower,
        param_upper=param_upper, train_shape=(3, 3), n_test=4, tol_sratio=1e-8, solver=solver,
    )


def constant_source(value):
    return lambda pts: np.full(pts.shape[0], value)


@pytest.fixture(scope="session")
def homogeneous_small():
    """Homogeneous slab at N_x = 16, 4 directions."""
    p = get_problem("homogeneous-1d")
    return build_system(p, Discretization((16,), ("gl", 4)))


@pytest.fixture(scope="session")
def homogeneous_full():
    return build_system(get_problem("homogeneous-1d"), "paper")


@pytest.fixture(scope="session")
def two_material_quick():
    return build_system(get_problem("two-material-1d"), "quick")


@pytest.fixture(scope="session")
def varying_quick():
    return build_system(get_problem("varying-scattering-1d"), "quick")


@pytest.fixture(scope="session")
def lattice_tiny():
    """Lattice geometry on a 7x7 mesh with the (4,2) sphere rule."""
    return build_system(get_problem("lattice-2d"), Discretization((7, 7), ("cl", 4, 2)))


ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion(capsys):
    """report(n, ok, detail): print one verdict line per acceptance criterion, then assert it."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


__all__ = ["slab_problem", "constant_source", "Box", "CrossSectionTerm", "SourceTerm", "const", "param"]
