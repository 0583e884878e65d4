"""Dirichlet problems on the mapped periodic slab and the 2D periodic Poisson solve.

The physical Laplacian is pulled back to the reference slab,

    Delta phi = (1/det DF) d_i (M_ij d_j phi),   M = det DF * DF^{-1} DF^{-T},

and discretised spectrally in the periodic directions and with finite
differences in Z.  The discrete system is solved by GMRES, preconditioned by
the flat-slab operator, which decouples per Fourier mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import CompatibilityError, ContractViolation, SolverFailure
from .geometry import DomainMap
from .grid import Lattice, QuadratureGrid, wavenumbers

log = logging.getLogger(__name__)

SOLVER_RTOL = 1e-10


@dataclass
class DirichletProblem:
    """Poisson problem ``Delta phi = rho`` with Dirichlet data on top and bottom.

    ``top`` and ``bottom`` are given in the (X, Y) chart, i.e. ``top[j, i]`` is
    the value at the physical point ``S(X_ji, Y_ji)``.
    """

    map: DomainMap
    rho: np.ndarray | None = None
    top: np.ndarray | None = None
    bottom: np.ndarray | None = None


@dataclass
class DirichletSolution:
    phi: np.ndarray
    gradient: np.ndarray
    residual: float
    iterations: int
    info: dict = field(default_factory=dict)


class _PulledBackLaplacian:
    def __init__(self, dmap: DomainMap, grid: QuadratureGrid):
        cell = dmap.on_grid(grid)
        self.grid = grid
        inv = cell.jac_inv
        self.det = cell.det
        self.M = cell.det * np.einsum("ik...,jk...->ij...", inv, inv)
        # flat-slab preconditioner: exact inverse of Dzz - |k|^2 per mode
        Dz = grid.Dz
        Dzz = (Dz @ Dz)[1:-1, 1:-1]
        sym = grid.dx_symbol**2 + grid.dy_symbol**2  # (ny, nx), real <= 0
        eye = np.eye(Dzz.shape[0])
        mats = Dzz[None, :, :] + sym.real.reshape(-1, 1, 1) * eye[None]
        self.pre_inv = np.linalg.inv(mats)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        g = self.grid
        gx, gy = g.grad_h(phi)
        grad = np.stack([gx, gy, g.dZ(phi)])
        flux = np.einsum("ij...,j...->i...", self.M, grad)
        div = g.dX(flux[0]) + g.dY(flux[1]) + g.dZ(flux[2])
        return div / self.det

    def precondition(self, r_int: np.ndarray) -> np.ndarray:
        g = self.grid
        nzi = g.nz - 1
        rh = np.fft.fft2(r_int.reshape(nzi, g.ny, g.nx))
        rh = rh.reshape(nzi, -1).T  # (modes, nzi)
        sol = np.einsum("mij,mj->mi", self.pre_inv, rh)
        return np.fft.ifft2(sol.T.reshape(nzi, g.ny, g.nx)).real.ravel()


def _laplacian_operator(dmap: DomainMap, grid: QuadratureGrid) -> _PulledBackLaplacian:
    cell = dmap.on_grid(grid)
    op = getattr(cell, "_laplacian", None)
    if op is None:
        op = cell._laplacian = _PulledBackLaplacian(dmap, grid)
    return op


def laplacian(phi: np.ndarray, dmap: DomainMap, grid: QuadratureGrid) -> np.ndarray:
    """Discrete physical Laplacian of scalar samples (all nodes)."""
    grid.check_samples(phi)
    return _laplacian_operator(dmap, grid).apply(phi)


def solve_dirichlet(problem: DirichletProblem, grid: QuadratureGrid, *,
                    rtol: float = SOLVER_RTOL, maxiter: int = 400) -> DirichletSolution:
    """Solve the Dirichlet problem; boundary nodes carry the data exactly."""
    op = _laplacian_operator(problem.map, grid)
    shape = grid.shape
    rho = np.zeros(shape) if problem.rho is None else np.asarray(problem.rho, float)
    top = np.zeros(grid.surface_shape) if problem.top is None else np.asarray(problem.top, float)
    bottom = np.zeros(grid.surface_shape) if problem.bottom is None else np.asarray(problem.bottom, float)
    grid.check_samples(rho)
    grid.check_samples(top, surface=True)
    grid.check_samples(bottom, surface=True)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(top)) and np.all(np.isfinite(bottom))):
        raise ContractViolation("non-finite Dirichlet data")

    lift = np.zeros(shape)
    lift[0] = bottom
    lift[-1] = top
    rhs = (rho - op.apply(lift))[1:-1].ravel()
    n = rhs.size

    def matvec(v):
        full = np.zeros(shape)
        full[1:-1] = v.reshape(grid.nz - 1, grid.ny, grid.nx)
        return op.apply(full)[1:-1].ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=op.precondition, dtype=float)
    counter = {"it": 0}

    def cb(_):
        counter["it"] += 1

    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        sol = np.zeros(n)
        info = 0
    else:
        sol, info = gmres(A, rhs, M=M, rtol=rtol, atol=0.0, restart=60, maxiter=maxiter,
                          callback=cb, callback_type="pr_norm")
    phi = lift.copy()
    phi[1:-1] = sol.reshape(grid.nz - 1, grid.ny, grid.nx)
    res_full = op.apply(phi) - rho
    residual = float(np.linalg.norm(res_full[1:-1].ravel()) / max(rhs_norm, 1e-300)) if rhs_norm else 0.0
    if info != 0 and residual > 10 * rtol:
        raise SolverFailure(f"GMRES did not converge (info={info}, relative residual {residual:.2e})",
                            residual)
    cell = problem.map.on_grid(grid)
    grad = cell.physical_gradient(grid.ref_gradient(phi))
    log.debug("dirichlet solve: %d iterations, residual %.2e", counter["it"], residual)
    return DirichletSolution(phi, grad, residual, counter["it"],
                             {"interior_residual_inf": float(np.max(np.abs(res_full[1:-1])))})


def solve_periodic_poisson_2d(lattice: Lattice, source: np.ndarray, *, tol: float = 1e-10) -> np.ndarray:
    """Zero-mean periodic solution of ``Delta f = source`` on the (possibly oblique) cell."""
    source = np.asarray(source, float)
    ny, nx = source.shape
    scale = max(float(np.max(np.abs(source))), 1e-300)
    mean = float(np.mean(source))
    if abs(mean) > tol * scale and abs(mean) > 1e-14:
        raise CompatibilityError(f"source mean {mean:.3e} is not zero")
    kx, ky, _ = wavenumbers(lattice, nx, ny)
    k2 = kx**2 + ky**2
    sh = np.fft.fft2(source)
    fh = np.zeros_like(sh)
    nz = k2 > 0
    fh[nz] = -sh[nz] / k2[nz]
    return np.fft.ifft2(fh).real


def periodic_laplacian_2d(lattice: Lattice, f: np.ndarray) -> np.ndarray:
    ny, nx = f.shape
    kx, ky, _ = wavenumbers(lattice, nx, ny)
    return np.fft.ifft2(-(kx**2 + ky**2) * np.fft.fft2(f)).real
