"""Lattice, reference grid and the discrete operators on one periodic cell.

Nodes are uniform in lattice coordinates ``(a1, a2) in [0, 1)^2`` and in
``Z in [-d, 0]``.  Scalar samples have shape ``(nz + 1, ny, nx)`` (Z-major,
then Y, then X); vector samples carry a leading component axis of length 3.
Horizontal derivatives are spectral, vertical ones are finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import simpson

from .errors import ContractViolation


@dataclass(frozen=True)
class Lattice:
    lambda1: tuple[float, float]
    lambda2: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "lambda1", tuple(float(v) for v in self.lambda1))
        object.__setattr__(self, "lambda2", tuple(float(v) for v in self.lambda2))
        if abs(self.det) < 1e-12 * (1.0 + np.hypot(*self.lambda1) * np.hypot(*self.lambda2)):
            raise ContractViolation("lattice generators are linearly dependent")

    @classmethod
    def square(cls, period: float = 2 * np.pi) -> "Lattice":
        return cls((period, 0.0), (0.0, period))

    @property
    def det(self) -> float:
        return self.lambda1[0] * self.lambda2[1] - self.lambda1[1] * self.lambda2[0]

    @property
    def cell_area(self) -> float:
        return abs(self.det)

    @cached_property
    def basis(self) -> np.ndarray:
        """2x2 matrix with the generators as columns."""
        return np.array([self.lambda1, self.lambda2]).T

    @cached_property
    def reciprocal(self) -> np.ndarray:
        """2x2 matrix with rows recip1, recip2: recip_i . lambda_j = 2 pi delta_ij."""
        return 2 * np.pi * np.linalg.inv(self.basis)

    @property
    def recip1(self) -> np.ndarray:
        return self.reciprocal[0]

    @property
    def recip2(self) -> np.ndarray:
        return self.reciprocal[1]

    def point(self, l, j) -> np.ndarray:
        return l * np.asarray(self.lambda1) + j * np.asarray(self.lambda2)

    def wavevector(self, p, q) -> np.ndarray:
        return p * self.recip1 + q * self.recip2


def wavenumbers(lattice: Lattice, nx: int, ny: int):
    """Physical wavevector components of the fft2 modes and a Nyquist mask, shape (ny, nx)."""
    p = np.fft.fftfreq(nx, 1.0 / nx)
    q = np.fft.fftfreq(ny, 1.0 / ny)
    P, Q = np.meshgrid(p, q)
    r = lattice.reciprocal
    kx = P * r[0, 0] + Q * r[1, 0]
    ky = P * r[0, 1] + Q * r[1, 1]
    nyq = np.zeros_like(P, dtype=bool)
    if nx % 2 == 0:
        nyq |= np.abs(P) == nx // 2
    if ny % 2 == 0:
        nyq |= np.abs(Q) == ny // 2
    return kx, ky, nyq


def fd_weights(x0: float, xs, order: int) -> np.ndarray:
    """Fornberg's finite difference weights for the ``order``-th derivative at ``x0``."""
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def fd_matrix(npts: int, h: float, accuracy: int = 6, deriv: int = 1) -> np.ndarray:
    """Dense differentiation matrix on ``npts`` uniform nodes.

    Centered stencils in the interior, shifted one-sided stencils of the same
    width near the ends, so the formal accuracy is uniform.
    """
    width = accuracy + deriv + (1 if (accuracy + deriv) % 2 == 0 else 0)
    width = min(width, npts)
    half = width // 2
    D = np.zeros((npts, npts))
    for i in range(npts):
        start = min(max(i - half, 0), npts - width)
        idx = np.arange(start, start + width)
        D[i, idx] = fd_weights(float(i), idx.astype(float), deriv) / h**deriv
    return D


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform reference grid over one cell of the slab ``D = R^2 x (-d, 0)``.

    ``nz`` is the number of vertical intervals (even, for composite Simpson);
    there are ``nz + 1`` vertical nodes including both boundaries.
    """

    lattice: Lattice
    depth: float
    nx: int
    ny: int
    nz: int
    z_accuracy: int = 6

    def __post_init__(self):
        if self.depth <= 0:
            raise ContractViolation("depth must be positive")
        if self.nz % 2 or self.nz < 8:
            raise ContractViolation("nz must be even and at least 8")
        if self.nx < 4 or self.ny < 4:
            raise ContractViolation("need at least 4 horizontal nodes per direction")

    # -- coordinates ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nz + 1, self.ny, self.nx)

    @property
    def surface_shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def a1(self) -> np.ndarray:
        return np.arange(self.nx) / self.nx

    @cached_property
    def a2(self) -> np.ndarray:
        return np.arange(self.ny) / self.ny

    @cached_property
    def z(self) -> np.ndarray:
        return np.linspace(-self.depth, 0.0, self.nz + 1)

    @property
    def hz(self) -> float:
        return self.depth / self.nz

    @cached_property
    def horizontal(self) -> tuple[np.ndarray, np.ndarray]:
        """Reference (X, Y) of the surface nodes, each of shape (ny, nx)."""
        A1, A2 = np.meshgrid(self.a1, self.a2)
        l1, l2 = self.lattice.lambda1, self.lattice.lambda2
        return A1 * l1[0] + A2 * l2[0], A1 * l1[1] + A2 * l2[1]

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reference (X, Y, Z) of all nodes, each of shape (nz+1, ny, nx)."""
        X, Y = self.horizontal
        shape = self.shape
        Z = np.broadcast_to(self.z[:, None, None], shape)
        return np.broadcast_to(X, shape), np.broadcast_to(Y, shape), Z

    # -- spectral machinery --------------------------------------------------
    @cached_property
    def _wavenumbers(self):
        return wavenumbers(self.lattice, self.nx, self.ny)

    @property
    def kx(self) -> np.ndarray:
        return self._wavenumbers[0]

    @property
    def ky(self) -> np.ndarray:
        return self._wavenumbers[1]

    @property
    def nyquist(self) -> np.ndarray:
        return self._wavenumbers[2]

    @cached_property
    def dx_symbol(self) -> np.ndarray:
        return np.where(self.nyquist, 0.0, 1j * self.kx)

    @cached_property
    def dy_symbol(self) -> np.ndarray:
        return np.where(self.nyquist, 0.0, 1j * self.ky)

    def dX(self, f: np.ndarray) -> np.ndarray:
        """Spectral derivative along reference X over the last two axes."""
        return np.fft.ifft2(np.fft.fft2(f) * self.dx_symbol).real

    def dY(self, f: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(np.fft.fft2(f) * self.dy_symbol).real

    def grad_h(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fh = np.fft.fft2(f)
        return (np.fft.ifft2(fh * self.dx_symbol).real,
                np.fft.ifft2(fh * self.dy_symbol).real)

    # -- vertical finite differences -----------------------------------------
    @cached_property
    def Dz(self) -> np.ndarray:
        return fd_matrix(self.nz + 1, self.hz, self.z_accuracy, 1)

    def dZ(self, f: np.ndarray) -> np.ndarray:
        """Finite-difference derivative along Z (axis ``-3``)."""
        moved = np.moveaxis(f, -3, 0)
        out = np.tensordot(self.Dz, moved, axes=(1, 0))
        return np.moveaxis(out, 0, -3)

    def ref_gradient(self, f: np.ndarray) -> np.ndarray:
        """(d/dX, d/dY, d/dZ) of scalar samples; returns shape (3, *f.shape)."""
        gx, gy = self.grad_h(f)
        return np.stack([gx, gy, self.dZ(f)])

    # -- quadrature ----------------------------------------------------------
    @cached_property
    def z_weights(self) -> np.ndarray:
        """Composite Simpson weights on the vertical nodes."""
        w = np.empty(self.nz + 1)
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * self.hz / 3.0

    @property
    def horizontal_weight(self) -> float:
        return self.lattice.cell_area / (self.nx * self.ny)

    def scalar_zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def vector_zeros(self) -> np.ndarray:
        return np.zeros((3,) + self.shape)

    def check_samples(self, f: np.ndarray, *, vector: bool = False, surface: bool = False):
        expected = self.surface_shape if surface else self.shape
        if vector:
            expected = (3,) + expected
        if np.shape(f) != expected:
            raise ContractViolation(f"sample array has shape {np.shape(f)}, expected {expected}")

    def refined(self, factor: int = 2, *, horizontal: bool = True, vertical: bool = True):
        return QuadratureGrid(
            self.lattice, self.depth,
            self.nx * factor if horizontal else self.nx,
            self.ny * factor if horizontal else self.ny,
            self.nz * factor if vertical else self.nz,
            self.z_accuracy,
        )


def simpson_z(f: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """Integrate over Z (axis -3) with scipy's Simpson rule; used as an independent check."""
    return simpson(f, x=grid.z, axis=-3)
