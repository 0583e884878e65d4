import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beltrami.errors import ContractViolation, StepSizeError
from beltrami.fields import SampledVectorField
from beltrami.functionals import (AdmissibleCurve, PhysicalParams, cutoff, el_residuals,
                                  evaluate_functionals, finite_difference_dJ, first_variation,
                                  interior_pair, interior_variation_integral, inverse_transport,
                                  make_admissible, transport)
from beltrami.geometry import PeriodicFunction
from beltrami.potential import divergence_clean

PI2 = np.pi**2


def _l1(dmap, grid, eta):
    return dmap.on_grid(grid).integrate_surface(np.abs(eta))


def test_params_require_positive_sigma():
    with pytest.raises(ContractViolation):
        PhysicalParams(sigma=0.0)
    with pytest.raises(ContractViolation):
        PhysicalParams(g=float("nan"))


def test_zero_potential_functionals(grid32, flat):
    rep = evaluate_functionals(SampledVectorField.zeros(grid32), flat, PhysicalParams(1.0, 0.1))
    assert rep.kinetic == 0.0
    assert rep.gravity == pytest.approx(4 * PI2, rel=1e-12)
    assert rep.surface == pytest.approx(-0.4 * PI2, rel=1e-12)
    assert rep.M == pytest.approx(4 * PI2, rel=1e-12)


def test_shear_functionals_with_oracle(shear32, flat):
    u, A = shear32
    p = PhysicalParams(1.0, 0.1, 2.0, -1.0)
    rep = evaluate_functionals(A, flat, p)
    assert rep.kinetic == pytest.approx(4 * PI2, rel=1e-8)
    # A x n = 0 on top forces A = u/alpha - e1/2 + grad(...), and the constant shifts K
    assert rep.K == pytest.approx(2 * PI2 - PI2 * np.sin(2), rel=1e-6)
    assert rep.J == rep.E - 2.0 * rep.K + 1.0 * rep.M


def test_transport_identity_and_round_trip(bumpy, grid32, flat):
    rng = np.random.default_rng(3)
    Ahat = SampledVectorField(grid32, rng.normal(size=(3,) + grid32.shape))
    assert np.array_equal(transport(flat, Ahat).values, Ahat.values)
    back = inverse_transport(bumpy, transport(bumpy, Ahat))
    assert np.max(np.abs(back.values - Ahat.values)) < 1e-10


def test_transport_boundary_condition_equivalence(bumpy, grid32):
    X, Y, Z = grid32.nodes
    Ahat = np.stack([Z * np.cos(X), Z * np.sin(Y), 1.0 + np.cos(X + Y)])
    A = transport(bumpy, SampledVectorField(grid32, Ahat))
    n = bumpy.on_grid(grid32).top.n
    assert np.max(np.abs(np.cross(A.top, n, axis=0))) < 1e-10


def test_cutoff():
    z = np.linspace(-1, 0, 101)
    c = cutoff(z, 1.0)
    assert c[-1] == 1.0
    assert np.all(c[z <= -0.5] == 0.0)
    assert np.all(np.diff(c) >= 0)


def _potential_on(dmap, grid):
    X, Y, Z = grid.nodes
    Ahat = np.stack([Z * np.cos(X), Z * np.sin(Y), 1.0 + 0.5 * np.cos(X + Y)])
    return transport(dmap, SampledVectorField(grid, Ahat))


def test_zero_variation(grid32, flat):
    A = _potential_on(flat, grid32)
    pair = make_admissible(flat, A, np.zeros(grid32.surface_shape))
    assert not np.any(pair.dF)
    assert not np.any(pair.dA)


def test_admissible_on_flat_slab(shear32, flat, lattice):
    _, A = shear32
    pair = make_admissible(flat, A, PeriodicFunction.cosine(lattice, 1, 0, 1.0))
    X, _ = A.grid.horizontal
    assert np.allclose(pair.dF[:, -1], np.stack([0 * X, 0 * X, np.cos(X)]), atol=1e-14)
    assert pair.residuals["var5_top"] < 1e-8
    assert pair.provenance == "transport-generated"


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=5, deadline=None)
def test_admissible_on_graph_lift(seed):
    from beltrami.geometry import graph_lift
    from beltrami.grid import Lattice, QuadratureGrid
    lat = Lattice.square()
    g = QuadratureGrid(lat, 1.0, 24, 24, 16)
    dmap = graph_lift(1.0, PeriodicFunction(lat, ((1, 0), (1, 1)), (0.1, 0.03), (0.0, 0.04)))
    A = _potential_on(dmap, g)
    pair = make_admissible(dmap, A, PeriodicFunction.random(lat, np.random.default_rng(seed), 2))
    assert pair.residuals["var5_top"] < 1e-6
    assert pair.residuals["bottom_dAxn"] < 1e-10
    assert pair.residuals["bottom_dF"] == 0.0
    assert pair.residuals["d_eta_mismatch"] < 1e-12


def test_mollification_changes_realised_eta(shear32, flat, lattice):
    _, A = shear32
    eta = PeriodicFunction.cosine(lattice, 3, 0, 1.0)
    pair = make_admissible(flat, A, eta, eps=0.1)
    X, _ = A.grid.horizontal
    assert np.allclose(pair.d_eta, np.exp(-0.5 * 0.01 * 9) * np.cos(3 * X), atol=1e-12)


def test_step_size_error(shear32, flat, lattice):
    _, A = shear32
    with pytest.raises(StepSizeError):
        make_admissible(flat, A, PeriodicFunction.cosine(lattice, 1, 0, 1e4), t_max=1e-1)


def test_interior_variation(modal32, flat, modal):
    u, A = modal32
    X, Y, Z = A.grid.nodes
    dA = Z * (Z + 1) * np.stack([np.cos(X), np.sin(Y), np.cos(X + Y)])
    p = PhysicalParams(1.0, 0.1, modal.alpha + 0.3, -0.5)
    pair = interior_pair(A.grid, dA)
    fv = first_variation(A, flat, p, pair)
    direct = interior_variation_integral(A, flat, p.alpha, dA)
    fd = finite_difference_dJ(AdmissibleCurve(flat, A, pair), p)
    assert fv.dJ == pytest.approx(direct, rel=1e-12, abs=1e-12)
    assert fd.value == pytest.approx(fv.dJ, rel=1e-5, abs=1e-8)


def test_zero_potential_cosine_variation(grid32, flat, lattice):
    A = SampledVectorField.zeros(grid32)
    pair = make_admissible(flat, A, PeriodicFunction.cosine(lattice, 1, 0, 1.0))
    fv = first_variation(A, flat, PhysicalParams(1.0, 0.1, 0.0, 0.7), pair)
    assert abs(fv.dJ) < 1e-12
    assert abs(fv.dE) < 1e-12


def test_shear_is_critical(shear32, flat, lattice):
    _, A = shear32
    p = PhysicalParams(1.0, 0.1, 2.0, -1.0)
    rng = np.random.default_rng(7)
    for _ in range(3):
        pair = make_admissible(flat, A, PeriodicFunction.random(lattice, rng, 2))
        fv = first_variation(A, flat, p, pair)
        fd = finite_difference_dJ(AdmissibleCurve(flat, A, pair), p)
        l1 = _l1(flat, A.grid, pair.d_eta)
        assert abs(fv.dJ) < 1e-4 * l1
        assert abs(fd.value) < 1e-4 * l1


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=4, deadline=None)
def test_modal_variation_consistency(seed):
    from beltrami.fields import ModalBeltrami, evaluate_analytic
    from beltrami.geometry import IdentityMap
    from beltrami.grid import Lattice, QuadratureGrid
    from beltrami.potential import spectral_potential_flat
    lat = Lattice.square()
    g = QuadratureGrid(lat, 1.0, 16, 16, 32)
    flat = IdentityMap(1.0)
    fam = ModalBeltrami((1.0, 0.0), 1, 1.0)
    u = evaluate_analytic(fam, g, flat)
    A = spectral_potential_flat(u, flat)
    p = PhysicalParams(1.0, 0.1, fam.alpha, -0.45)
    pair = make_admissible(flat, A, PeriodicFunction.random(lat, np.random.default_rng(seed), 2))
    fv = first_variation(A, flat, p, pair)
    fd = finite_difference_dJ(AdmissibleCurve(flat, A, pair), p)
    scale = _l1(flat, g, pair.d_eta)
    assert abs(fv.reduced - fv.dJ) < 1e-6 * scale
    assert abs(fd.value - fv.dJ) < 1e-3 * max(abs(fv.dJ), 1e-3 * scale)
    assert abs(fv.parts["I"] - fv.parts["I_direct"]) < 1e-10 * scale


def test_el_residuals(shear32, modal32, flat, grid32, modal):
    el = el_residuals(shear32[1], flat, PhysicalParams(1.0, 0.1, 2.0, -1.0))
    assert el["interior_norm"] < 1e-5
    assert el["boundary_norm"] < 1e-5
    assert el["bernoulli_const_dev"] < 1e-12
    u, A = modal32
    el = el_residuals(A, flat, PhysicalParams(1.0, 0.1, modal.alpha, -0.45))
    assert el["interior_norm"] < 1e-4
    assert el["boundary_norm"] > 0.1
    u2 = np.sum(u.top**2, axis=0)
    assert el["bernoulli_const_dev"] == pytest.approx(0.5 * (u2.max() - u2.min()), rel=1e-6)
    zero = el_residuals(SampledVectorField.zeros(grid32), flat, PhysicalParams(1.0, 0.1, 0.0, 0.0))
    assert zero["interior_norm"] == 0.0
    assert zero["boundary_norm"] == 0.0


def test_planted_boundary_residual_recovered_from_variations(modal32, flat, lattice, modal):
    u, A = modal32
    g = A.grid
    p = PhysicalParams(1.0, 0.1, modal.alpha, -0.3)
    cell = flat.on_grid(g)
    X, Y = g.horizontal
    basis = [np.ones_like(X)]
    for pq in [(a, b) for a in range(0, 3) for b in range(-2, 3) if (a, b) > (0, 0)]:
        k = lattice.wavevector(*pq)
        basis += [np.cos(k[0] * X + k[1] * Y), np.sin(k[0] * X + k[1] * Y)]
    recovered = np.zeros_like(X)
    for b in basis:
        dJ = first_variation(A, flat, p, make_admissible(flat, A, b)).dJ
        recovered += -dJ / cell.integrate_surface(b * b) * b
    planted = el_residuals(A, flat, p)["boundary"]
    assert np.max(np.abs(recovered - planted)) < 1e-6 * np.max(np.abs(planted))


def test_planted_interior_residual_recovered(modal32, flat, modal):
    u, A = modal32
    shift = 0.37
    p = PhysicalParams(1.0, 0.1, modal.alpha + shift, 0.0)
    Z = A.grid.nodes[2]
    bump = Z * (Z + 1)
    dA = bump * u.values
    dJ = first_variation(A, flat, p, interior_pair(A.grid, dA)).dJ
    weight = 2 * flat.on_grid(A.grid).integrate_volume(bump * np.sum(u.values**2, axis=0))
    assert -dJ / weight == pytest.approx(shift, rel=1e-5)


def test_gauge_invariance_of_functionals(modal32, flat, modal):
    _, A = modal32
    p = PhysicalParams(1.0, 0.1, modal.alpha, -0.4)
    a = evaluate_functionals(A, flat, p)
    b = evaluate_functionals(divergence_clean(A, flat).A, flat, p)
    assert b.K == pytest.approx(a.K, rel=1e-6)
    assert b.J == pytest.approx(a.J, rel=1e-6)
