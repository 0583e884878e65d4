import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from beltrami.fields import ModalBeltrami, ShearBeltrami, evaluate_analytic  # noqa: E402
from beltrami.geometry import IdentityMap, PeriodicFunction, graph_lift  # noqa: E402
from beltrami.grid import Lattice, QuadratureGrid  # noqa: E402
from beltrami.potential import assemble_potential, spectral_potential_flat  # noqa: E402

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def lattice():
    return Lattice.square()


@pytest.fixture(scope="session")
def oblique():
    return Lattice((TWO_PI, 0.0), (1.3, 5.0))


@pytest.fixture(scope="session")
def flat():
    return IdentityMap(1.0)


@pytest.fixture(scope="session")
def grid32(lattice):
    return QuadratureGrid(lattice, 1.0, 32, 32, 32)


@pytest.fixture(scope="session")
def bumpy(lattice):
    eta = PeriodicFunction(lattice, ((1, 0), (1, 1)), (0.1, 0.03), (0.0, 0.04))
    return graph_lift(1.0, eta)


@pytest.fixture(scope="session")
def shear():
    return ShearBeltrami(2.0)


@pytest.fixture(scope="session")
def modal():
    return ModalBeltrami((1.0, 0.0), 1, 1.0)


@pytest.fixture(scope="session")
def shear32(shear, grid32, flat):
    u = evaluate_analytic(shear, grid32, flat)
    return u, spectral_potential_flat(u, flat)


@pytest.fixture(scope="session")
def modal32(modal, grid32, flat):
    u = evaluate_analytic(modal, grid32, flat)
    return u, spectral_potential_flat(u, flat)


@pytest.fixture(scope="session")
def shear_potential_coarse(lattice, shear, flat):
    grid = QuadratureGrid(lattice, 1.0, 8, 8, 8)
    u = evaluate_analytic(shear, grid, flat)
    return u, assemble_potential(u, flat, 4)


@pytest.fixture(scope="session")
def shear_potential_16(lattice, shear, flat):
    """Acceptance-size construction: 16^3 grid, L = 8 (about a minute)."""
    import time
    grid = QuadratureGrid(lattice, 1.0, 16, 16, 16)
    u = evaluate_analytic(shear, grid, flat)
    t0 = time.perf_counter()
    res = assemble_potential(u, flat, 8)
    return u, res, time.perf_counter() - t0
