"""Vector fields sampled on a mapped cell, mapped derivatives and Beltrami families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, UnsupportedConfiguration
from .geometry import DomainMap, IdentityMap
from .grid import QuadratureGrid


@dataclass
class SampledVectorField:
    """Values at the physical points ``F(node)`` of one periodic cell.

    Samples live on one cell only, so the lattice-periodic continuation is
    exact by construction.
    """

    grid: QuadratureGrid
    values: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grid.check_samples(self.values, vector=True)

    @classmethod
    def zeros(cls, grid: QuadratureGrid) -> "SampledVectorField":
        return cls(grid, grid.vector_zeros())

    @classmethod
    def constant(cls, grid: QuadratureGrid, vec) -> "SampledVectorField":
        vals = np.broadcast_to(np.asarray(vec, float)[:, None, None, None], (3,) + grid.shape)
        return cls(grid, vals.copy())

    def __add__(self, other):
        return SampledVectorField(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return SampledVectorField(self.grid, self.values - _values(other))

    def __mul__(self, factor: float):
        return SampledVectorField(self.grid, self.values * factor)

    __rmul__ = __mul__

    @property
    def top(self) -> np.ndarray:
        return self.values[:, -1]

    @property
    def bottom(self) -> np.ndarray:
        return self.values[:, 0]

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=0)))


def _values(f):
    return f.values if isinstance(f, SampledVectorField) else np.asarray(f)


@dataclass
class FieldDerivatives:
    jacobian: np.ndarray  # [i, j] = d u_i / d x_j
    curl: np.ndarray
    div: np.ndarray


def mapped_jacobian(values: np.ndarray, dmap: DomainMap, grid: QuadratureGrid) -> np.ndarray:
    """Physical Jacobian ``d u_i / d x_j`` of vector samples via DF^{-1}."""
    cell = dmap.on_grid(grid)
    ref = np.stack([grid.ref_gradient(values[i]) for i in range(values.shape[0])])
    return np.einsum("kj...,ik...->ij...", cell.jac_inv, ref)


def scalar_gradient(values: np.ndarray, dmap: DomainMap, grid: QuadratureGrid) -> np.ndarray:
    """Physical gradient of scalar samples."""
    grid.check_samples(values)
    return dmap.on_grid(grid).physical_gradient(grid.ref_gradient(values))


def curl_from_jacobian(J: np.ndarray) -> np.ndarray:
    return np.stack([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def mapped_derivatives(field: SampledVectorField, dmap: DomainMap) -> FieldDerivatives:
    J = mapped_jacobian(field.values, dmap, field.grid)
    return FieldDerivatives(J, curl_from_jacobian(J), J[0, 0] + J[1, 1] + J[2, 2])


def curl(field: SampledVectorField, dmap: DomainMap) -> SampledVectorField:
    return SampledVectorField(field.grid, mapped_derivatives(field, dmap).curl)


def divergence(field: SampledVectorField, dmap: DomainMap) -> np.ndarray:
    return mapped_derivatives(field, dmap).div


def beltrami_residuals(field: SampledVectorField, dmap: DomainMap, alpha: float) -> dict:
    """Sup norms of the Beltrami system residuals: curl, divergence, normal flow."""
    d = mapped_derivatives(field, dmap)
    cell = dmap.on_grid(field.grid)
    top_normal = np.sum(field.top * cell.top.n, axis=0)
    bottom_normal = -field.bottom[2]
    return {
        "curl": float(np.max(np.abs(d.curl - alpha * field.values))),
        "div": float(np.max(np.abs(d.div))),
        "top_normal": float(np.max(np.abs(top_normal))),
        "bottom_normal": float(np.max(np.abs(bottom_normal))),
    }


def bernoulli_pressure(field: SampledVectorField, dmap: DomainMap, C: float, g: float) -> np.ndarray:
    """``p = C - |u|^2 / 2 - g z`` at every node."""
    z = dmap.on_grid(field.grid).z
    return C - 0.5 * np.sum(field.values**2, axis=0) - g * z


# ---------------------------------------------------------------------------
# analytic Beltrami families on the flat slab
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShearBeltrami:
    """``u = A (cos(alpha z), -sin(alpha z), 0)``; curl u = alpha u, u_3 = 0."""

    alpha: float
    amplitude: float = 1.0

    family = "shear"

    def velocity(self, x, y, z):
        z = np.asarray(z, float)
        shape = np.broadcast(x, y, z).shape
        z = np.broadcast_to(z, shape)
        A = self.amplitude
        return np.stack([A * np.cos(self.alpha * z), -A * np.sin(self.alpha * z), np.zeros(shape)])

    def jacobian(self, x, y, z):
        z = np.asarray(z, float)
        shape = np.broadcast(x, y, z).shape
        z = np.broadcast_to(z, shape)
        J = np.zeros((3, 3) + shape)
        a, A = self.alpha, self.amplitude
        J[0, 2] = -a * A * np.sin(a * z)
        J[1, 2] = -a * A * np.cos(a * z)
        return J


@dataclass(frozen=True)
class ModalBeltrami:
    """Single-mode Beltrami field between the planes z = -d and z = 0.

    With ``psi = cos(k.x) sin(m pi (z + d) / d)`` the field
    ``alpha curl(psi e3) + curl curl(psi e3)`` has ``curl u = alpha u`` for
    ``alpha^2 = |k|^2 + (m pi / d)^2`` and vanishing normal component on both
    planes.  It is scaled by ``amplitude / (alpha |k|)`` so that max |u| = amplitude.
    """

    k: tuple[float, float]
    m: int
    depth: float
    amplitude: float = 1.0
    sign: int = 1

    family = "modal"

    def __post_init__(self):
        if self.m < 1:
            raise ContractViolation("mode index m must be >= 1")
        if np.hypot(*self.k) == 0:
            raise ContractViolation("modal family needs a nonzero horizontal wavevector")

    @property
    def q(self) -> float:
        return self.m * np.pi / self.depth

    @property
    def alpha(self) -> float:
        return self.sign * float(np.sqrt(self.k[0] ** 2 + self.k[1] ** 2 + self.q**2))

    @property
    def _scale(self) -> float:
        return self.amplitude / (abs(self.alpha) * np.hypot(*self.k))

    def _parts(self, x, y, z):
        x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
        kx, ky = self.k
        th = kx * x + ky * y
        zeta = self.q * (z + self.depth)
        return kx, ky, np.sin(th), np.cos(th), np.sin(zeta), np.cos(zeta)

    def velocity(self, x, y, z):
        kx, ky, st, ct, sz, cz = self._parts(x, y, z)
        a, q, C = self.alpha, self.q, self._scale
        return C * np.stack([
            -a * ky * st * sz - q * kx * st * cz,
            a * kx * st * sz - q * ky * st * cz,
            (kx * kx + ky * ky) * ct * sz,
        ])

    def jacobian(self, x, y, z):
        kx, ky, st, ct, sz, cz = self._parts(x, y, z)
        a, q, C = self.alpha, self.q, self._scale
        k2 = kx * kx + ky * ky
        # horizontal derivatives act on sin/cos(theta), vertical on sin/cos(zeta)
        h1 = -a * ky * ct * sz - q * kx * ct * cz
        h2 = a * kx * ct * sz - q * ky * ct * cz
        h3 = -k2 * st * sz
        v1 = -a * ky * st * q * cz + q * kx * st * q * sz
        v2 = a * kx * st * q * cz + q * ky * st * q * sz
        v3 = k2 * ct * q * cz
        J = np.stack([
            np.stack([kx * h1, ky * h1, v1]),
            np.stack([kx * h2, ky * h2, v2]),
            np.stack([kx * h3, ky * h3, v3]),
        ])
        return C * J


def evaluate_analytic(family, grid: QuadratureGrid, dmap: DomainMap) -> SampledVectorField:
    """Sample a closed-form family on the flat slab."""
    if not isinstance(dmap, IdentityMap):
        raise UnsupportedConfiguration("analytic Beltrami families live on the identity slab")
    if isinstance(family, ModalBeltrami) and abs(family.depth - grid.depth) > 1e-12:
        raise ContractViolation("modal family depth differs from grid depth")
    X, Y, Z = grid.nodes
    return SampledVectorField(grid, family.velocity(X, Y, Z))
