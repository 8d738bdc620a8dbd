import numpy as np
import pytest

import arcdyn as ad


@pytest.fixture(scope="session")
def params():
    # tiny-grid workhorse: strong-coupling window, JL = 0.1 gx
    return ad.ModelParams()


@pytest.fixture(scope="session")
def grid():
    # coarse but leak-free grid for fast unit tests
    return ad.GridSpec(201, 0.15)


@pytest.fixture(scope="session")
def bo(params, grid):
    return ad.diagonalize_bo(params, grid)


@pytest.fixture(scope="session")
def ham(params, grid):
    return ad.assemble_hamiltonian(params, grid)


@pytest.fixture(scope="session")
def omega_b(ham):
    return ad.energy_width(ham)


@pytest.fixture(scope="session")
def schedule():
    return np.array([1.0, 2.0, 4.0])


@pytest.fixture(scope="session")
def runs(params, grid, bo, ham, omega_b, schedule):
    """Component, superposition and adiabatic records on the tiny grid."""
    kw = dict(tol=1e-13, bo=bo, omega_b=omega_b)
    return {
        0: ad.run_component(0, params, grid, schedule, h=ham, **kw),
        1: ad.run_component(1, params, grid, schedule, h=ham, **kw),
        "sup": ad.run_superposition(params, grid, schedule, h=ham, **kw),
        "ad0": ad.run_adiabatic(0, params, grid, schedule, **kw),
        "ad1": ad.run_adiabatic(1, params, grid, schedule, **kw),
    }
