"""Domain maps ``F: D -> Omega``, surface frames, curvature and surface calculus.

A map sends reference points ``(X, Y, Z)`` of the slab ``R^2 x (-d, 0)`` to
physical points.  Closed-form families (identity, graph-lift, shear) can be
evaluated anywhere with exact derivatives; :class:`SampledMap` carries a
displacement sampled on a grid and is differentiated numerically.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractViolation, GeometryDegenerateError
from .grid import Lattice, QuadratureGrid

EPS_GEOM = 1e-10
DET_MIN = 1e-8

_CELLS: "weakref.WeakKeyDictionary[DomainMap, dict]" = weakref.WeakKeyDictionary()


# ---------------------------------------------------------------------------
# periodic profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicFunction:
    """Finite Fourier series ``sum c cos(k.x) + s sin(k.x)`` on a lattice.

    ``modes`` holds integer pairs ``(p, q)``; the wavevector of a mode is
    ``p * recip1 + q * recip2``.
    """

    lattice: Lattice
    modes: tuple[tuple[int, int], ...] = ()
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    @classmethod
    def zero(cls, lattice: Lattice) -> "PeriodicFunction":
        return cls(lattice)

    @classmethod
    def cosine(cls, lattice: Lattice, p: int, q: int, amplitude: float) -> "PeriodicFunction":
        return cls(lattice, ((p, q),), (amplitude,), (0.0,))

    @classmethod
    def random(cls, lattice: Lattice, rng: np.random.Generator, max_mode: int = 2,
               amplitude: float = 1.0, decay: float = 1.0) -> "PeriodicFunction":
        """Random smooth profile with coefficients ~ N(0, 1) / (1 + p^2 + q^2)^decay."""
        modes, cs, ss = [], [], []
        for p in range(0, max_mode + 1):
            for q in range(-max_mode, max_mode + 1):
                if p == 0 and q <= 0:
                    continue
                scale = amplitude / (1.0 + p * p + q * q) ** decay
                modes.append((p, q))
                cs.append(float(rng.normal() * scale))
                ss.append(float(rng.normal() * scale))
        return cls(lattice, tuple(modes), tuple(cs), tuple(ss))

    def __add__(self, other: "PeriodicFunction") -> "PeriodicFunction":
        return PeriodicFunction(self.lattice, self.modes + other.modes,
                                self.cos + other.cos, self.sin + other.sin)

    def scaled(self, factor: float) -> "PeriodicFunction":
        return PeriodicFunction(self.lattice, self.modes,
                                tuple(factor * c for c in self.cos),
                                tuple(factor * s for s in self.sin))

    def derivatives(self, X, Y, order: int = 2):
        """Return value, gradient (2,...) and Hessian (2,2,...) at (X, Y)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        f = np.zeros(np.broadcast(X, Y).shape)
        g = np.zeros((2,) + f.shape)
        H = np.zeros((2, 2) + f.shape)
        for (p, q), c, s in zip(self.modes, self.cos, self.sin):
            k = self.lattice.wavevector(p, q)
            phase = k[0] * X + k[1] * Y
            cp, sp = np.cos(phase), np.sin(phase)
            f += c * cp + s * sp
            d1 = -c * sp + s * cp
            g[0] += k[0] * d1
            g[1] += k[1] * d1
            if order >= 2:
                d2 = -(c * cp + s * sp)
                for i in range(2):
                    for j in range(2):
                        H[i, j] += k[i] * k[j] * d2
        return f, g, H

    def __call__(self, X, Y):
        return self.derivatives(X, Y, order=0)[0]


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

class DomainMap:
    """Interface shared by all maps.  Arrays broadcast over evaluation points."""

    depth: float
    closed_form = True

    def position(self, X, Y, Z) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, X, Y, Z) -> np.ndarray:
        """``J[i, j] = dF_i / dX_j`` with shape (3, 3, ...)."""
        raise NotImplementedError

    def surface(self, X, Y):
        """S, S_X, S_Y, S_XX, S_XY, S_YY on the top boundary Z = 0."""
        raise NotImplementedError

    def on_grid(self, grid: QuadratureGrid) -> "MappedCell":
        per_map = _CELLS.setdefault(self, {})
        cell = per_map.get(grid)
        if cell is None:
            cell = per_map[grid] = MappedCell(self, grid)
        return cell


@dataclass(frozen=True, eq=False)
class IdentityMap(DomainMap):
    depth: float

    kind = "identity-slab"

    def position(self, X, Y, Z):
        return np.stack(np.broadcast_arrays(
            np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float)))

    def jacobian(self, X, Y, Z):
        shape = np.broadcast(X, Y, Z).shape
        return np.broadcast_to(np.eye(3).reshape(3, 3, *([1] * len(shape))), (3, 3) + shape).copy()

    def surface(self, X, Y):
        X, Y = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float))
        zero = np.zeros_like(X)
        S = np.stack([X, Y, zero])
        e1 = np.stack([zero + 1, zero, zero])
        e2 = np.stack([zero, zero + 1, zero])
        flat = np.zeros_like(S)
        return S, e1, e2, flat, flat.copy(), flat.copy()


@dataclass(frozen=True, eq=False)
class ProfileMap(DomainMap):
    """``F(X, Y, Z) = (X, Y, Z) + (1 + Z/d) * (xi1, xi2, eta)(X, Y)``.

    With ``xi1 = xi2 = 0`` this is the graph-lift family; a nonzero horizontal
    profile gives the shear family.  The bottom ``Z = -d`` is fixed and the
    displacement is lattice periodic.
    """

    depth: float
    eta: PeriodicFunction
    xi1: PeriodicFunction | None = None
    xi2: PeriodicFunction | None = None

    @property
    def kind(self) -> str:
        return "graph-lift" if self.xi1 is None and self.xi2 is None else "shear"

    def _profiles(self, X, Y):
        out = []
        for prof in (self.xi1, self.xi2, self.eta):
            if prof is None:
                z = np.zeros(np.broadcast(X, Y).shape)
                out.append((z, np.zeros((2,) + z.shape), np.zeros((2, 2) + z.shape)))
            else:
                out.append(prof.derivatives(X, Y))
        return out

    def position(self, X, Y, Z):
        X, Y, Z = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float))
        s = 1.0 + Z / self.depth
        prof = self._profiles(X, Y)
        return np.stack([X, Y, Z]) + s * np.stack([p[0] for p in prof])

    def jacobian(self, X, Y, Z):
        X, Y, Z = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float), np.asarray(Z, float))
        s = 1.0 + Z / self.depth
        prof = self._profiles(X, Y)
        J = np.zeros((3, 3) + X.shape)
        for i, (f, g, _) in enumerate(prof):
            J[i, 0] = s * g[0]
            J[i, 1] = s * g[1]
            J[i, 2] = f / self.depth
            J[i, i] += 1.0
        return J

    def surface(self, X, Y):
        X, Y = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float))
        prof = self._profiles(X, Y)
        base = np.stack([X, Y, np.zeros_like(X)])
        S = base + np.stack([p[0] for p in prof])
        S_X = np.stack([p[1][0] for p in prof])
        S_Y = np.stack([p[1][1] for p in prof])
        S_X[0] += 1.0
        S_Y[1] += 1.0
        S_XX = np.stack([p[2][0, 0] for p in prof])
        S_XY = np.stack([p[2][0, 1] for p in prof])
        S_YY = np.stack([p[2][1, 1] for p in prof])
        return S, S_X, S_Y, S_XX, S_XY, S_YY


def graph_lift(depth: float, eta: PeriodicFunction) -> ProfileMap:
    return ProfileMap(depth, eta)


def shear_map(depth: float, xi: PeriodicFunction, direction=(1.0, 0.0),
              eta: PeriodicFunction | None = None) -> ProfileMap:
    eta = eta if eta is not None else PeriodicFunction.zero(xi.lattice)
    return ProfileMap(depth, eta, xi.scaled(direction[0]), xi.scaled(direction[1]))


class SampledMap(DomainMap):
    """``F = base + displacement`` with the displacement sampled on ``grid``.

    The displacement must be lattice periodic and vanish at ``Z = -d``;
    derivatives are spectral horizontally and finite-difference in Z.
    """

    closed_form = False
    kind = "sampled-displacement"

    def __init__(self, base: DomainMap, grid: QuadratureGrid, displacement: np.ndarray):
        grid.check_samples(displacement, vector=True)
        if np.max(np.abs(displacement[:, 0])) > 1e-12 * (1 + np.max(np.abs(displacement))):
            raise ContractViolation("sampled displacement must vanish on the bottom Z = -d")
        self.base = base
        self.grid = grid
        self.depth = base.depth
        self.displacement = displacement

    def _require_grid(self, grid):
        if grid is not self.grid and grid != self.grid:
            raise ContractViolation("a sampled map can only be evaluated on its own grid")

    @cached_property
    def _disp_jacobian(self) -> np.ndarray:
        g = self.grid
        return np.stack([g.ref_gradient(self.displacement[i]) for i in range(3)])

    def node_position(self):
        X, Y, Z = self.grid.nodes
        return self.base.position(X, Y, Z) + self.displacement

    def node_jacobian(self):
        X, Y, Z = self.grid.nodes
        return self.base.jacobian(X, Y, Z) + self._disp_jacobian

    def node_surface(self):
        g = self.grid
        X, Y = g.horizontal
        S, S_X, S_Y, S_XX, S_XY, S_YY = self.base.surface(X, Y)
        top = self.displacement[:, -1]
        dX = np.stack([g.dX(c) for c in top])
        dY = np.stack([g.dY(c) for c in top])
        return (S + top, S_X + dX, S_Y + dY,
                S_XX + np.stack([g.dX(c) for c in dX]),
                S_XY + np.stack([g.dY(c) for c in dX]),
                S_YY + np.stack([g.dY(c) for c in dY]))

    def on_grid(self, grid: QuadratureGrid) -> "MappedCell":
        self._require_grid(grid)
        return super().on_grid(self.grid)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

@dataclass
class SurfaceFrame:
    """Per-point surface data; every field broadcasts over the evaluation points."""

    S: np.ndarray
    S_X: np.ndarray
    S_Y: np.ndarray
    n: np.ndarray
    a: np.ndarray
    b: np.ndarray
    n_X: np.ndarray
    n_Y: np.ndarray
    area: np.ndarray
    K_M: np.ndarray


def frame_from_derivatives(S, S_X, S_Y, S_XX, S_XY, S_YY) -> SurfaceFrame:
    N = np.cross(S_X, S_Y, axis=0)
    area = np.linalg.norm(N, axis=0)
    if np.any(area < EPS_GEOM):
        raise GeometryDegenerateError("surface tangents are degenerate")
    n = N / area
    a = np.cross(S_Y, n, axis=0) / area
    b = np.cross(n, S_X, axis=0) / area
    # derivative of the unit normal: (N' - n (n.N')) / |N|
    N_X = np.cross(S_XX, S_Y, axis=0) + np.cross(S_X, S_XY, axis=0)
    N_Y = np.cross(S_XY, S_Y, axis=0) + np.cross(S_X, S_YY, axis=0)
    n_X = (N_X - n * np.sum(n * N_X, axis=0)) / area
    n_Y = (N_Y - n * np.sum(n * N_Y, axis=0)) / area
    div_n = np.sum(a * n_X, axis=0) + np.sum(b * n_Y, axis=0)
    return SurfaceFrame(S, S_X, S_Y, n, a, b, n_X, n_Y, area, -0.5 * div_n)


def build_frame(dmap: DomainMap, X, Y) -> SurfaceFrame:
    """Surface frame of ``S(X, Y) = F(X, Y, 0)`` for a closed-form map."""
    if not dmap.closed_form:
        raise ContractViolation("pointwise frames need a closed-form map; use MappedCell.top")
    return frame_from_derivatives(*dmap.surface(X, Y))


def mean_curvature(dmap: DomainMap, X, Y):
    """K_M with ``2 K_M = -div n``, n the upward (outward) normal."""
    return build_frame(dmap, X, Y).K_M


def surface_gradient(frame: SurfaceFrame, g_X, g_Y) -> np.ndarray:
    """Surface gradient ``g_X a + g_Y b`` from chart derivatives."""
    return g_X * frame.a + g_Y * frame.b


def surface_divergence(grid: QuadratureGrid, frame: SurfaceFrame, V: np.ndarray,
                       tol: float = 1e-8) -> np.ndarray:
    """Surface divergence ``a . V_X + b . V_Y`` of a tangent field sampled on the top nodes."""
    grid.check_samples(V, vector=True, surface=True)
    normal = np.abs(np.sum(V * frame.n, axis=0))
    if np.max(normal) > tol * (1.0 + np.max(np.abs(V))):
        raise ContractViolation("surface_divergence needs a tangent field")
    V_X = np.stack([grid.dX(c) for c in V])
    V_Y = np.stack([grid.dY(c) for c in V])
    return np.sum(frame.a * V_X, axis=0) + np.sum(frame.b * V_Y, axis=0)


# ---------------------------------------------------------------------------
# a map evaluated on a grid
# ---------------------------------------------------------------------------

class MappedCell:
    """Positions, Jacobians, frames and quadrature weights of ``map`` on ``grid``."""

    def __init__(self, dmap: DomainMap, grid: QuadratureGrid):
        if abs(dmap.depth - grid.depth) > 1e-12 * grid.depth:
            raise ContractViolation("map depth and grid depth differ")
        self.map = dmap
        self.grid = grid
        if isinstance(dmap, SampledMap):
            self.x = dmap.node_position()
            self.jac = dmap.node_jacobian()
            surf = dmap.node_surface()
        else:
            X, Y, Z = grid.nodes
            self.x = dmap.position(X, Y, Z)
            self.jac = dmap.jacobian(X, Y, Z)
            surf = dmap.surface(*grid.horizontal)
        Jm = np.moveaxis(self.jac, (0, 1), (-2, -1))
        self.det = np.linalg.det(Jm)
        if np.min(self.det) < DET_MIN:
            raise GeometryDegenerateError(f"det DF = {np.min(self.det):.3e} below threshold")
        # inv[i, j] = dX_i / dx_j
        self.jac_inv = np.moveaxis(np.linalg.inv(Jm), (-2, -1), (0, 1))
        self.top = frame_from_derivatives(*surf)

    @property
    def z(self) -> np.ndarray:
        return self.x[2]

    @cached_property
    def volume_weights(self) -> np.ndarray:
        g = self.grid
        return self.det * g.z_weights[:, None, None] * g.horizontal_weight

    @cached_property
    def surface_weights(self) -> np.ndarray:
        return self.top.area * self.grid.horizontal_weight

    @cached_property
    def bottom_normal(self) -> np.ndarray:
        return np.array([0.0, 0.0, -1.0])

    def physical_gradient(self, ref_grad: np.ndarray) -> np.ndarray:
        """Chain rule: ``d/dx_j = sum_i dX_i/dx_j d/dX_i`` over the leading axis."""
        return np.einsum("ij...,i...->j...", self.jac_inv, ref_grad)

    def integrate_volume(self, f: np.ndarray) -> float:
        self.grid.check_samples(f)
        return float(np.sum(f * self.volume_weights))

    def integrate_surface(self, f: np.ndarray) -> float:
        self.grid.check_samples(f, surface=True)
        return float(np.sum(f * self.surface_weights))


def integrate_volume(dmap: DomainMap, grid: QuadratureGrid, samples) -> float:
    return dmap.on_grid(grid).integrate_volume(np.asarray(samples, dtype=float))


def integrate_surface(dmap: DomainMap, grid: QuadratureGrid, samples) -> float:
    return dmap.on_grid(grid).integrate_surface(np.asarray(samples, dtype=float))
