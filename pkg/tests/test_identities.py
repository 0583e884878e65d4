"""Pointwise identities used in the first-variation formulas, on graph-lift surfaces at 32^2."""

import numpy as np
import pytest

from beltrami.fields import SampledVectorField, curl_from_jacobian, mapped_jacobian
from beltrami.functionals import j_tangential_formula, j_vector, tangential_part, transport
from beltrami.geometry import PeriodicFunction, build_frame, graph_lift
from beltrami.grid import QuadratureGrid

TOL = 1e-6


@pytest.fixture(scope="module", params=[0, 1])
def setup(request, lattice):
    eta = [PeriodicFunction(lattice, ((1, 0), (1, 1)), (0.1, 0.03), (0.0, 0.04)),
           PeriodicFunction(lattice, ((0, 1), (2, -1)), (0.08, 0.0), (0.05, 0.02))][request.param]
    dmap = graph_lift(1.0, eta)
    grid = QuadratureGrid(lattice, 1.0, 32, 32, 32)
    X, Y = grid.horizontal
    return dmap, grid, build_frame(dmap, X, Y)


def _delta_S(grid):
    X, Y = grid.horizontal
    return np.stack([0.3 * np.sin(Y), 0.2 * np.cos(X - Y), np.cos(X) + 0.5 * np.sin(X + 2 * Y)])


def test_div_of_cross_product(setup):
    dmap, grid, _ = setup
    x, y, z = dmap.on_grid(grid).x
    A = np.stack([np.sin(y) * np.exp(z), np.cos(x) * z, np.sin(x + y) * (1 + z**2)])
    B = np.stack([np.cos(x + 2 * y), z**2 * np.sin(x), np.cos(y) * np.exp(0.5 * z)])
    DA = mapped_jacobian(A, dmap, grid)
    DB = mapped_jacobian(B, dmap, grid)
    AxB = np.cross(A, B, axis=0)
    lhs = np.einsum("ii...->...", mapped_jacobian(AxB, dmap, grid))
    rhs = np.sum(curl_from_jacobian(DA) * B, axis=0) - np.sum(A * curl_from_jacobian(DB), axis=0)
    assert np.max(np.abs(lhs - rhs)) < TOL


def test_j_tangential_formula(setup):
    _, grid, fr = setup
    dS = _delta_S(grid)
    dS_X = np.stack([grid.dX(c) for c in dS])
    dS_Y = np.stack([grid.dY(c) for c in dS])
    d_eta = np.sum(dS * fr.n, axis=0)
    j = j_vector(fr, dS, dS_X, dS_Y)
    formula = j_tangential_formula(fr, grid.dX(d_eta), grid.dY(d_eta), dS)
    assert np.max(np.abs(tangential_part(fr, j) - formula)) < TOL


def test_tangential_derivative_relation(setup):
    dmap, grid, fr = setup
    X, Y, Z = grid.nodes
    Ahat = np.stack([Z * np.cos(X), Z * np.sin(Y), 1.0 + 0.5 * np.cos(X + Y)])
    A = transport(dmap, SampledVectorField(grid, Ahat)).top
    for v_deriv, n_deriv in ((grid.dX, fr.n_X), (grid.dY, fr.n_Y)):
        DAv = np.stack([v_deriv(c) for c in A])
        lhs = np.cross(DAv, fr.n, axis=0)
        rhs = -np.cross(A, n_deriv, axis=0)
        assert np.max(np.abs(lhs - rhs)) < TOL


def test_delta_eta_differentiation(setup):
    _, grid, fr = setup
    dS = _delta_S(grid)
    d_eta = np.sum(dS * fr.n, axis=0)
    dS_X = np.stack([grid.dX(c) for c in dS])
    dS_Y = np.stack([grid.dY(c) for c in dS])
    assert np.max(np.abs(grid.dX(d_eta) - np.sum(dS_X * fr.n + dS * fr.n_X, axis=0))) < TOL
    assert np.max(np.abs(grid.dY(d_eta) - np.sum(dS_Y * fr.n + dS * fr.n_Y, axis=0))) < TOL


def test_duality_and_shape_operator(setup):
    _, _, fr = setup
    dot = lambda u, v: np.sum(u * v, axis=0)  # noqa: E731
    G = [[dot(fr.a, fr.S_X), dot(fr.a, fr.S_Y)], [dot(fr.b, fr.S_X), dot(fr.b, fr.S_Y)]]
    assert np.max(np.abs(np.array(G) - np.eye(2)[:, :, None, None])) < TOL
    assert np.max(np.abs(dot(fr.n_X, fr.S_Y) - dot(fr.n_Y, fr.S_X))) < TOL


def test_mean_curvature_is_minus_half_div_n(setup):
    _, grid, fr = setup
    # extended normal n(x, y) of a graph does not depend on z; the graph-lift surface chart is x = X
    div_n = grid.dX(fr.n[0]) + grid.dY(fr.n[1])
    assert np.max(np.abs(2 * fr.K_M + div_n)) < TOL
