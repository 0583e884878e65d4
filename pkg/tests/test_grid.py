import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from beltrami.errors import ContractViolation
from beltrami.grid import Lattice, QuadratureGrid, fd_matrix, fd_weights, simpson_z


@given(st.integers(0, 6), st.floats(-3, 3))
def test_fd_weights_exact_on_polynomials(k, x0):
    xs = np.arange(-3, 4, dtype=float)
    w = fd_weights(x0, xs, 1)
    expected = k * x0 ** (k - 1) if k else 0.0
    assert np.dot(w, xs**k) == pytest.approx(expected, abs=1e-9 * (1 + abs(x0)) ** 6)


def test_fd_matrix_exact_up_to_degree_six():
    z = np.linspace(-1, 0, 17)
    D = fd_matrix(17, z[1] - z[0], 6)
    for k in range(7):
        exact = k * z ** (k - 1) if k else 0 * z
        assert np.max(np.abs(D @ z**k - exact)) < 1e-9


def test_reciprocal_basis(oblique):
    r = oblique.reciprocal
    assert np.allclose(r @ oblique.basis, 2 * np.pi * np.eye(2))


def test_dependent_generators_rejected():
    with pytest.raises(ContractViolation):
        Lattice((1.0, 2.0), (2.0, 4.0))


def test_grid_preconditions(lattice):
    with pytest.raises(ContractViolation):
        QuadratureGrid(lattice, 1.0, 8, 8, 9)
    with pytest.raises(ContractViolation):
        QuadratureGrid(lattice, -1.0, 8, 8, 8)


@given(st.integers(-3, 3), st.integers(-3, 3))
@settings(max_examples=20)
def test_spectral_derivative_exact_on_lattice_modes(p, q):
    lat = Lattice((2 * np.pi, 0.0), (1.3, 5.0))
    g = QuadratureGrid(lat, 1.0, 16, 16, 8)
    X, Y = g.horizontal
    k = lat.wavevector(p, q)
    f = np.cos(k[0] * X + k[1] * Y)
    assert np.max(np.abs(g.dX(f) + k[0] * np.sin(k[0] * X + k[1] * Y))) < 1e-10
    assert np.max(np.abs(g.dY(f) + k[1] * np.sin(k[0] * X + k[1] * Y))) < 1e-10


def test_simpson_weights_match_scipy(lattice):
    g = QuadratureGrid(lattice, 1.3, 8, 8, 16)
    f = np.exp(g.z) * np.cos(3 * g.z)
    assert np.dot(g.z_weights, f) == pytest.approx(simpson(f, x=g.z), rel=1e-12)
    samples = np.broadcast_to(f[:, None, None], g.shape)
    assert np.allclose(simpson_z(samples, g), np.dot(g.z_weights, f))
    assert g.z_weights.sum() == pytest.approx(1.3)
    assert g.horizontal_weight * g.nx * g.ny == pytest.approx(lattice.cell_area)
