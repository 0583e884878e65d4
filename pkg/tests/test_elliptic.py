import numpy as np
import pytest

from beltrami.elliptic import (DirichletProblem, laplacian, periodic_laplacian_2d, solve_dirichlet,
                               solve_periodic_poisson_2d)
from beltrami.errors import CompatibilityError
from beltrami.grid import QuadratureGrid


def _harmonic(x):
    return np.cos(x[0]) * np.exp(x[2]) + np.sin(x[0] + x[1]) * np.exp(np.sqrt(2) * x[2])


@pytest.mark.parametrize("mapname", ["flat", "bumpy"])
def test_dirichlet_recovers_harmonic_function(request, lattice, mapname):
    dmap = request.getfixturevalue(mapname)
    errs = []
    for n in (16, 32):
        g = QuadratureGrid(lattice, 1.0, n, n, n)
        x = dmap.on_grid(g).x
        exact = _harmonic(x)
        sol = solve_dirichlet(DirichletProblem(dmap, top=exact[-1], bottom=exact[0]), g)
        errs.append(np.max(np.abs(sol.phi - exact)))
        assert sol.residual < 1e-8
    assert errs[1] < 1e-6
    assert errs[1] < errs[0]


def test_dirichlet_with_source(lattice, bumpy):
    g = QuadratureGrid(lattice, 1.0, 16, 16, 16)
    x = bumpy.on_grid(g).x
    exact = np.sin(x[0]) * x[2] ** 3
    rho = np.sin(x[0]) * (6 * x[2] - x[2] ** 3)
    sol = solve_dirichlet(DirichletProblem(bumpy, rho=rho, top=exact[-1], bottom=exact[0]), g)
    assert np.max(np.abs(sol.phi - exact)) < 1e-6
    assert np.max(np.abs(laplacian(exact, bumpy, g) - rho)[1:-1]) < 1e-5


def test_periodic_poisson(oblique):
    g = QuadratureGrid(oblique, 1.0, 32, 32, 8)
    X, Y = g.horizontal
    k = oblique.wavevector(1, 2)
    f = np.cos(k[0] * X + k[1] * Y)
    sol = solve_periodic_poisson_2d(oblique, periodic_laplacian_2d(oblique, f))
    assert np.max(np.abs(sol - f)) < 1e-10
    with pytest.raises(CompatibilityError):
        solve_periodic_poisson_2d(oblique, 1.0 + f)
