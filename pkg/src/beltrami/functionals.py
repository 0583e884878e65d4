"""Energy, helicity and volume functionals, admissible variations and first variations.

    E = int (|curl A|^2 - 2 g z) dV - sigma int dS
    K = int A . curl A dV,   M = int dV,   J = E - alpha K - mu M

Admissible curves are generated by the transport map
``T_F Ahat = Ahat_1 F_X + Ahat_2 F_Y + Ahat_3 F_X x F_Y`` as
``A(t) = T_{F + t dF} T_F^{-1} A`` with ``dF`` a cut-off normal field.
Variations of ``A`` come in two flavours: the Lagrangian one (rate of change
of the samples at fixed reference nodes) and the Eulerian one used in the
variational formulas, ``dA o F = dA_L - DA dF``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, StepSizeError
from .fields import SampledVectorField, curl_from_jacobian, mapped_jacobian
from .geometry import DET_MIN, DomainMap, PeriodicFunction, SampledMap
from .grid import QuadratureGrid
from .potential import smoothstep

FD_STEPS = (1e-3, 5e-4)


@dataclass(frozen=True)
class PhysicalParams:
    g: float = 1.0
    sigma: float = 0.1
    alpha: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        vals = (self.g, self.sigma, self.alpha, self.mu)
        if not all(np.isfinite(vals)):
            raise ContractViolation("physical parameters must be finite")
        if self.sigma <= 0:
            raise ContractViolation("surface tension sigma must be positive")


@dataclass(frozen=True)
class FunctionalReport:
    kinetic: float
    gravity: float
    surface: float
    K: float
    M: float
    alpha: float
    mu: float

    @property
    def E(self) -> float:
        return self.kinetic + self.gravity + self.surface

    @property
    def J(self) -> float:
        return self.E - self.alpha * self.K - self.mu * self.M

    def as_dict(self) -> dict:
        return {"E": self.E, "K": self.K, "M": self.M, "J": self.J,
                "kinetic": self.kinetic, "gravity": self.gravity, "surface": self.surface}


def _curl(A: SampledVectorField, dmap: DomainMap) -> np.ndarray:
    return curl_from_jacobian(mapped_jacobian(A.values, dmap, A.grid))


def evaluate_functionals(A: SampledVectorField, dmap: DomainMap, params: PhysicalParams,
                         u: np.ndarray | None = None) -> FunctionalReport:
    """Quadratures of E (split into its three terms), K and M over one cell.

    ``u`` defaults to the discrete curl of ``A``.
    """
    cell = dmap.on_grid(A.grid)
    u = _curl(A, dmap) if u is None else np.asarray(u)
    kinetic = cell.integrate_volume(np.sum(u * u, axis=0))
    gravity = cell.integrate_volume(-2.0 * params.g * cell.z)
    surface = -params.sigma * float(np.sum(cell.surface_weights))
    K = cell.integrate_volume(np.sum(A.values * u, axis=0))
    M = float(np.sum(cell.volume_weights))
    return FunctionalReport(kinetic, gravity, surface, K, M, params.alpha, params.mu)


# ---------------------------------------------------------------------------
# transport map
# ---------------------------------------------------------------------------

def transport_basis(jac: np.ndarray) -> np.ndarray:
    """Matrix with columns ``F_X, F_Y, F_X x F_Y``; shape (3, 3, ...)."""
    FX, FY = jac[:, 0], jac[:, 1]
    return np.stack([FX, FY, np.cross(FX, FY, axis=0)], axis=1)


def transport(dmap: DomainMap, Ahat: SampledVectorField) -> SampledVectorField:
    """``T_F Ahat`` sampled at the mapped nodes."""
    cell = dmap.on_grid(Ahat.grid)
    B = transport_basis(cell.jac)
    return SampledVectorField(Ahat.grid, np.einsum("ij...,j...->i...", B, Ahat.values))


def inverse_transport(dmap: DomainMap, A: SampledVectorField) -> SampledVectorField:
    cell = dmap.on_grid(A.grid)
    B = np.moveaxis(transport_basis(cell.jac), (0, 1), (-2, -1))
    sol = np.linalg.solve(B, np.moveaxis(A.values, 0, -1)[..., None])[..., 0]
    return SampledVectorField(A.grid, np.moveaxis(sol, -1, 0))


# ---------------------------------------------------------------------------
# admissible variations
# ---------------------------------------------------------------------------

def cutoff(Z, depth: float):
    """Smooth vertical cut-off: 1 at Z = 0, identically 0 for Z <= -depth/2."""
    return smoothstep(1.0 + 2.0 * np.asarray(Z, float) / depth)


def _surface_samples(delta_eta, grid: QuadratureGrid) -> np.ndarray:
    if isinstance(delta_eta, PeriodicFunction):
        return delta_eta(*grid.horizontal)
    arr = np.asarray(delta_eta, float)
    grid.check_samples(arr, surface=True)
    return arr


def _mollify(f: np.ndarray, grid: QuadratureGrid, eps: float) -> np.ndarray:
    if eps <= 0:
        return f
    k2 = grid.kx**2 + grid.ky**2
    return np.fft.ifft2(np.fft.fft2(f) * np.exp(-0.5 * eps * eps * k2)).real


@dataclass
class AdmissiblePair:
    """Paired variation of the domain map and the potential.

    ``dA`` is the Eulerian variation at the mapped nodes; ``dA_lagrangian`` is
    the rate of change of the samples along the generating curve.
    """

    dF: np.ndarray
    dA: np.ndarray
    d_eta: np.ndarray
    provenance: str
    dA_lagrangian: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)


def _var5_residual(A: SampledVectorField, dmap: DomainMap, dA: np.ndarray, dF: np.ndarray,
                   DA: np.ndarray) -> float:
    grid = A.grid
    top = dmap.on_grid(grid).top
    n = top.n
    dS = dF[:, -1]
    dS_X = np.stack([grid.dX(c) for c in dS])
    dS_Y = np.stack([grid.dY(c) for c in dS])
    j = (np.cross(top.S_X, dS_Y, axis=0) + np.cross(dS_X, top.S_Y, axis=0)) / top.area
    DAdF = np.einsum("ij...,j...->i...", DA[:, :, -1], dS)
    res = np.cross(dA[:, -1], n, axis=0) + np.cross(DAdF, n, axis=0) + np.cross(A.top, j, axis=0)
    return float(np.max(np.linalg.norm(res, axis=0)))


def check_admissible(A: SampledVectorField, dmap: DomainMap, pair: AdmissiblePair) -> dict:
    """Residuals of the top relation (var5), the bottom relation and ``dF = 0`` at Z = -d."""
    DA = mapped_jacobian(A.values, dmap, A.grid)
    return {
        "var5_top": _var5_residual(A, dmap, pair.dA, pair.dF, DA),
        "bottom_dAxn": float(np.max(np.abs(pair.dA[:2, 0]))),
        "bottom_dF": float(np.max(np.abs(pair.dF[:, 0]))),
    }


def make_admissible(dmap: DomainMap, A: SampledVectorField, delta_eta, eps: float = 0.0,
                    t_max: float = 2 * FD_STEPS[0]) -> AdmissiblePair:
    """Normal-extension variation ``dF = d_eta chi(Z) N/|N|`` and its transported ``dA``.

    ``d_eta`` is a :class:`PeriodicFunction` or surface samples.  ``eps`` is
    the width of an optional horizontal Gaussian mollifier.  Raises
    :class:`StepSizeError` if ``F + t dF`` degenerates for ``|t| <= t_max``.
    """
    grid = A.grid
    cell = dmap.on_grid(grid)
    eta = _surface_samples(delta_eta, grid)
    N = np.cross(cell.jac[:, 0], cell.jac[:, 1], axis=0)
    chi = cutoff(grid.z, grid.depth)[:, None, None]
    dF = eta[None, None] * chi[None] * N / np.linalg.norm(N, axis=0)
    dF = np.stack([_mollify(c, grid, eps) for c in dF])
    dF[:, 0] = 0.0

    dJac = np.stack([grid.ref_gradient(c) for c in dF])  # [i, j] = d dF_i / dX_j
    for t in (-t_max, t_max):
        det = np.linalg.det(np.moveaxis(cell.jac + t * dJac, (0, 1), (-2, -1)))
        if np.min(det) < DET_MIN:
            raise StepSizeError(f"F + t dF degenerates at t = {t:g} (min det {np.min(det):.2e})")

    Ahat = inverse_transport(dmap, A).values
    FX, FY = cell.jac[:, 0], cell.jac[:, 1]
    dX, dY = dJac[:, 0], dJac[:, 1]
    dB = np.stack([dX, dY, np.cross(dX, FY, axis=0) + np.cross(FX, dY, axis=0)], axis=1)
    dA_L = np.einsum("ij...,j...->i...", dB, Ahat)
    DA = mapped_jacobian(A.values, dmap, grid)
    dA = dA_L - np.einsum("ij...,j...->i...", DA, dF)
    realized = np.sum(dF[:, -1] * cell.top.n, axis=0)
    pair = AdmissiblePair(dF, dA, realized, "transport-generated", dA_L)
    pair.residuals = {
        "var5_top": _var5_residual(A, dmap, dA, dF, DA),
        "bottom_dAxn": float(np.max(np.abs(dA[:2, 0]))),
        "bottom_dF": float(np.max(np.abs(dF[:, 0]))),
        "d_eta_mismatch": float(np.max(np.abs(realized - eta))),
    }
    return pair


def interior_pair(grid: QuadratureGrid, dA: np.ndarray) -> AdmissiblePair:
    """Variation of ``A`` alone (fixed domain); ``dA`` must vanish tangentially on the boundary."""
    grid.check_samples(dA, vector=True)
    zero = grid.vector_zeros()
    return AdmissiblePair(zero, np.asarray(dA, float), np.zeros(grid.surface_shape), "manual",
                          np.asarray(dA, float))


# ---------------------------------------------------------------------------
# curves and finite differences
# ---------------------------------------------------------------------------

def perturbed_map(dmap: DomainMap, grid: QuadratureGrid, dF: np.ndarray, t: float) -> DomainMap:
    if t == 0.0:
        return dmap
    if isinstance(dmap, SampledMap):
        return SampledMap(dmap.base, grid, dmap.displacement + t * dF)
    return SampledMap(dmap, grid, t * dF)


@dataclass
class AdmissibleCurve:
    """``t -> (F + t dF, A(t))`` with ``A(t) = T_{F + t dF} T_F^{-1} A`` (or ``A + t dA`` if ``dF = 0``)."""

    dmap: DomainMap
    A: SampledVectorField
    pair: AdmissiblePair

    def at(self, t: float):
        grid = self.A.grid
        if not np.any(self.pair.dF):
            return self.dmap, SampledVectorField(grid, self.A.values + t * self.pair.dA)
        mt = perturbed_map(self.dmap, grid, self.pair.dF, t)
        Ahat = inverse_transport(self.dmap, self.A)
        return mt, transport(mt, Ahat)

    def J(self, t: float, params: PhysicalParams) -> float:
        mt, At = self.at(t)
        return evaluate_functionals(At, mt, params).J


@dataclass
class FDResult:
    value: float
    error: float
    raw: tuple


def finite_difference_dJ(curve: AdmissibleCurve, params: PhysicalParams,
                         steps=FD_STEPS) -> FDResult:
    """Central differences of J at two steps, combined by Richardson extrapolation."""
    h1, h2 = steps
    d1 = (curve.J(h1, params) - curve.J(-h1, params)) / (2 * h1)
    d2 = (curve.J(h2, params) - curve.J(-h2, params)) / (2 * h2)
    r = (h1 / h2) ** 2
    value = (r * d2 - d1) / (r - 1)
    return FDResult(float(value), float(abs(value - d2)), (float(d1), float(d2)))


# ---------------------------------------------------------------------------
# analytic first variation
# ---------------------------------------------------------------------------

def j_vector(frame, dS, dS_X, dS_Y) -> np.ndarray:
    """``(S_X x dS_Y + dS_X x S_Y) / |S_X x S_Y|``."""
    return (np.cross(frame.S_X, dS_Y, axis=0) + np.cross(dS_X, frame.S_Y, axis=0)) / frame.area


def j_tangential_formula(frame, d_eta_X, d_eta_Y, dS) -> np.ndarray:
    """``-grad_|| d_eta + (dS . n_X) a + (dS . n_Y) b``."""
    return (-(d_eta_X * frame.a + d_eta_Y * frame.b)
            + np.sum(dS * frame.n_X, axis=0) * frame.a + np.sum(dS * frame.n_Y, axis=0) * frame.b)


def tangential_part(frame, v) -> np.ndarray:
    return v - frame.n * np.sum(v * frame.n, axis=0)


@dataclass
class FirstVariation:
    dE: float
    dK: float
    dM: float
    dJ: float
    reduced: float
    parts: dict


def first_variation(A: SampledVectorField, dmap: DomainMap, params: PhysicalParams,
                    pair: AdmissiblePair) -> FirstVariation:
    """Analytic dE, dK, dM and dJ from volume and surface quadratures.

    The top boundary term ``I = -int (dA x n) . u dS`` is evaluated through
    ``I1 + I2`` (the compatibility relation) and also directly; both are
    reported.  ``reduced`` is ``-int [|u|^2 + 2 g z - 2 sigma K_M + mu] d_eta dS``,
    which equals dJ at a Beltrami field satisfying the boundary conditions.
    """
    grid = A.grid
    cell = dmap.on_grid(grid)
    top = cell.top
    DA = mapped_jacobian(A.values, dmap, grid)
    u = curl_from_jacobian(DA)
    cc = curl_from_jacobian(mapped_jacobian(u, dmap, grid))
    dA = pair.dA
    eta = pair.d_eta
    ut, At = u[:, -1], A.top
    z_top = cell.x[2, -1]

    vol_E = 2 * cell.integrate_volume(np.sum(cc * dA, axis=0))
    vol_K = 2 * cell.integrate_volume(np.sum(u * dA, axis=0))
    I_direct = -cell.integrate_surface(np.sum(np.cross(dA[:, -1], top.n, axis=0) * ut, axis=0))

    dS = pair.dF[:, -1]
    dS_X = np.stack([grid.dX(c) for c in dS])
    dS_Y = np.stack([grid.dY(c) for c in dS])
    DAdS = np.einsum("ij...,j...->i...", DA[:, :, -1], dS)
    I1 = -cell.integrate_surface(np.sum(np.cross(DAdS, ut, axis=0) * top.n, axis=0))
    j = j_vector(top, dS, dS_X, dS_Y)
    I2 = -cell.integrate_surface(np.sum(np.cross(At, ut, axis=0) * j, axis=0))
    I = I1 + I2

    u2 = np.sum(ut * ut, axis=0)
    Au = np.sum(At * ut, axis=0)
    bnd_E = cell.integrate_surface((u2 - 2 * params.g * z_top + 2 * params.sigma * top.K_M) * eta)
    bnd_K = cell.integrate_surface(Au * eta)
    dM = cell.integrate_surface(eta)
    dE = vol_E + 2 * I + bnd_E
    dK = vol_K + bnd_K
    dJ = dE - params.alpha * dK - params.mu * dM
    reduced = -cell.integrate_surface(
        (u2 + 2 * params.g * z_top - 2 * params.sigma * top.K_M + params.mu) * eta)
    parts = {
        "interior": vol_E - params.alpha * vol_K,
        "I": I, "I1": I1, "I2": I2, "I_direct": I_direct,
        "boundary": bnd_E - params.alpha * bnd_K - params.mu * dM,
    }
    return FirstVariation(float(dE), float(dK), float(dM), float(dJ), float(reduced), parts)


def interior_variation_integral(A: SampledVectorField, dmap: DomainMap, alpha: float,
                                dA: np.ndarray) -> float:
    """``2 int [curl curl A - alpha curl A] . dA dV``."""
    u = _curl(A, dmap)
    cc = curl_from_jacobian(mapped_jacobian(u, dmap, A.grid))
    return 2 * dmap.on_grid(A.grid).integrate_volume(np.sum((cc - alpha * u) * dA, axis=0))


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals
# ---------------------------------------------------------------------------

def el_residuals(A: SampledVectorField, dmap: DomainMap, params: PhysicalParams) -> dict:
    """Interior and boundary Euler-Lagrange residuals and the Bernoulli-constant spread.

    ``boundary = |curl A|^2 + 2 g z - 2 sigma K_M + mu`` on the surface;
    ``bernoulli_const_dev`` is max - min of ``|u|^2/2 + g z - 2 sigma K_M`` there.
    """
    grid = A.grid
    cell = dmap.on_grid(grid)
    u = _curl(A, dmap)
    cc = curl_from_jacobian(mapped_jacobian(u, dmap, grid))
    interior = cc - params.alpha * u
    ut = u[:, -1]
    u2 = np.sum(ut * ut, axis=0)
    z = cell.x[2, -1]
    K_M = cell.top.K_M
    boundary = u2 + 2 * params.g * z - 2 * params.sigma * K_M + params.mu
    bern = 0.5 * u2 + params.g * z - 2 * params.sigma * K_M
    return {
        "interior": interior,
        "boundary": boundary,
        "interior_norm": float(np.max(np.linalg.norm(interior, axis=0))),
        "boundary_norm": float(np.max(np.abs(boundary))),
        "bernoulli_const_dev": float(np.max(bern) - np.min(bern)),
    }
