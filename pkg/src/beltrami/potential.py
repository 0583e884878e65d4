"""Vector potentials with ``A x n = 0`` on the free surface and constant ``A x n`` on the bottom.

Pipeline: cell Biot-Savart integrals of ``phi_00 u`` summed over the lattice in
symmetric pairs, tangential decomposition of the boundary traces of ``B``,
three Dirichlet corrections, assembly, flux bookkeeping.  A spectral
curl-inversion on the flat slab serves as an independent oracle.

Normals: ``n`` is the upward unit normal on the surface and ``e3`` on the
bottom, so ``A x n = (m1, m2, 0)`` there means ``(m1, m2) = (A2, -A1)``.
Fluxes ``a_j`` are taken through the side face spanned by ``lambda_j`` and
``e3`` with normal ``e3 x lambda_j`` (flat case); with these conventions
``a_j = (m2, -m1) . lambda_j``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._kernels import biot_savart_sum, near_sum
from .elliptic import DirichletProblem, solve_dirichlet, solve_periodic_poisson_2d
from .errors import (ContractViolation, DecompositionError, StageError,
                     UnsupportedConfiguration)
from .fields import SampledVectorField, mapped_derivatives
from .geometry import DomainMap, IdentityMap
from .grid import Lattice, QuadratureGrid, fd_weights

log = logging.getLogger(__name__)

TOL_CURL = 5e-2
TOL_BC = 1e-2
TOL_FLUX = 1e-2


# ---------------------------------------------------------------------------
# partition of unity
# ---------------------------------------------------------------------------

def smoothstep(s):
    """C^3 ramp from 0 to 1 on [0, 1] with ``rho(s) + rho(1 - s) = 1``."""
    s = np.clip(s, 0.0, 1.0)
    return np.clip(s**4 * (35.0 - 84.0 * s + 70.0 * s**2 - 20.0 * s**3), 0.0, 1.0)


@dataclass(frozen=True)
class PartitionCell:
    """Tensor-product weight ``phi_00`` in lattice coordinates.

    ``phi_00`` equals 1 on the core ``[delta, 1 - delta]^2``, ramps over a band
    of half-width ``delta`` around each cell face and vanishes outside
    ``(-delta, 1 + delta)^2``, i.e. outside the cell scaled by ``1 + 2 delta``.
    Its lattice translates sum to one everywhere.
    """

    lattice: Lattice
    delta: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ContractViolation("partition overlap must lie in (0, 1/2]")

    def weight1d(self, a):
        a = np.asarray(a, float)
        d = self.delta
        up = smoothstep((a + d) / (2 * d))
        down = 1.0 - smoothstep((a - 1.0 + d) / (2 * d))
        return np.where(a < 0.5, up, down)

    def weight(self, a1, a2, l: int = 0, j: int = 0):
        """``phi_lj`` at lattice coordinates ``(a1, a2)``."""
        return self.weight1d(np.asarray(a1) - l) * self.weight1d(np.asarray(a2) - j)

    def partition_sum(self, a1, a2):
        return sum(self.weight(a1, a2, l, j) for l in (-1, 0, 1) for j in (-1, 0, 1))


# ---------------------------------------------------------------------------
# staggered sources
# ---------------------------------------------------------------------------

def _z_midpoint_matrix(grid: QuadratureGrid, zrefine: int = 1) -> np.ndarray:
    """Lagrange interpolation from the nz+1 nodes to the midpoints of nz * zrefine intervals."""
    n = grid.nz + 1
    width = min(grid.z_accuracy, n)
    half = width // 2
    nm = grid.nz * zrefine
    P = np.zeros((nm, n))
    for k in range(nm):
        zk = (k + 0.5) / zrefine
        start = min(max(int(np.floor(zk)) + 1 - half, 0), n - width)
        idx = np.arange(start, start + width)
        P[k, idx] = fd_weights(zk, idx.astype(float), 0)
    return P


def _to_midpoints(f: np.ndarray, grid: QuadratureGrid, refine: int = 1, zrefine: int = 1) -> np.ndarray:
    """Interpolate samples (..., nz+1, ny, nx) to cell-centred points.

    Horizontally the band-limited interpolant is evaluated at the centres of
    an ``refine``-times finer grid; vertically a Lagrange stencil maps nodes
    to the midpoints of ``zrefine`` subintervals per interval.  Output shape
    (..., zrefine nz, refine ny, refine nx).
    """
    ny, nx = grid.ny, grid.nx
    Ny, Nx = refine * ny, refine * nx
    p = np.fft.fftfreq(nx, 1.0 / nx)
    q = np.fft.fftfreq(ny, 1.0 / ny)
    fh = np.fft.fft2(f)
    fh = np.where(grid.nyquist, 0.0, fh)
    padded = np.zeros(f.shape[:-2] + (Ny, Nx), complex)
    qi = np.where(q < 0, q + Ny, q).astype(int)
    pi_ = np.where(p < 0, p + Nx, p).astype(int)
    padded[..., qi[:, None], pi_[None, :]] = fh
    P2, Q2 = np.meshgrid(np.fft.fftfreq(Nx, 1.0 / Nx), np.fft.fftfreq(Ny, 1.0 / Ny))
    phase = np.exp(2j * np.pi * (P2 * 0.5 / Nx + Q2 * 0.5 / Ny))
    fine = np.fft.ifft2(padded * phase).real * (refine * refine)
    Pz = _z_midpoint_matrix(grid, zrefine)
    moved = np.moveaxis(fine, -3, 0)
    return np.moveaxis(np.tensordot(Pz, moved, axes=(1, 0)), 0, -3)


def _midpoint_data(u: SampledVectorField, dmap: DomainMap, refine: int = 1, zrefine: int = 1):
    """Positions, ``u`` and volume elements at the staggered midpoints of one cell."""
    grid = u.grid
    lat = grid.lattice
    nz = grid.nz * zrefine
    hz = grid.hz / zrefine
    Nx, Ny = refine * grid.nx, refine * grid.ny
    u_mid = _to_midpoints(u.values, grid, refine, zrefine)
    a1m = (np.arange(Nx) + 0.5) / Nx
    a2m = (np.arange(Ny) + 0.5) / Ny
    zm = -grid.depth + (np.arange(nz) + 0.5) * hz
    A1, A2 = np.meshgrid(a1m, a2m)
    l1, l2 = lat.lambda1, lat.lambda2
    X = A1 * l1[0] + A2 * l2[0]
    Y = A1 * l1[1] + A2 * l2[1]
    Xb, Yb, Zb = np.broadcast_arrays(X[None], Y[None], zm[:, None, None])
    if dmap.closed_form:
        pos = dmap.position(Xb, Yb, Zb)
        det = np.linalg.det(np.moveaxis(dmap.jacobian(Xb, Yb, Zb), (0, 1), (-2, -1)))
    else:
        cell = dmap.on_grid(grid)
        Xn, Yn, Zn = grid.nodes
        base = dmap.base
        pos = _to_midpoints(cell.x - base.position(Xn, Yn, Zn), grid, refine, zrefine) + base.position(Xb, Yb, Zb)
        det = _to_midpoints(cell.det, grid, refine, zrefine)
    dV = det * hz * lat.cell_area / (Nx * Ny)
    return np.ascontiguousarray(pos), np.ascontiguousarray(u_mid), dV


@dataclass
class CellSources:
    """Quadrature points and weighted source vectors of ``BS(phi_00 u)``."""

    positions: np.ndarray  # (3, Ns)
    weights: np.ndarray  # (3, Ns): phi_00 u dV

    @property
    def size(self) -> int:
        return self.positions.shape[1]


def cell_sources(u: SampledVectorField, dmap: DomainMap, partition: PartitionCell,
                 midpoints=None) -> CellSources:
    """Staggered midpoint sources covering the support of ``phi_00``.

    Source points sit half a grid step away from every target node in all
    three reference directions, so the kernel is never evaluated at r = 0.
    """
    grid = u.grid
    lat = grid.lattice
    nx, ny = grid.nx, grid.ny
    pos, u_mid, dV = midpoints if midpoints is not None else _midpoint_data(u, dmap)
    d = partition.delta
    m1 = int(np.ceil(d * nx))
    m2 = int(np.ceil(d * ny))
    i_idx = np.arange(-m1, nx + m1)
    j_idx = np.arange(-m2, ny + m2)
    w1 = partition.weight1d((i_idx + 0.5) / nx)
    w2 = partition.weight1d((j_idx + 0.5) / ny)
    i_idx, w1 = i_idx[w1 > 0], w1[w1 > 0]
    j_idx, w2 = j_idx[w2 > 0], w2[w2 > 0]
    ii, jj = np.meshgrid(i_idx, j_idx)  # (nj, ni)
    phi = np.outer(w2, w1)
    iw, jw = ii % nx, jj % ny
    shift = np.multiply.outer(np.asarray(lat.lambda1), ii // nx) + np.multiply.outer(np.asarray(lat.lambda2), jj // ny)
    P = pos[:, :, jw, iw]  # (3, nz, nj, ni)
    P = P + np.concatenate([shift, np.zeros((1,) + shift.shape[1:])])[:, None]
    W = u_mid[:, :, jw, iw] * (phi[None] * dV[:, jw, iw])[None]
    return CellSources(P.reshape(3, -1), W.reshape(3, -1))


def near_field_refinement(grid: QuadratureGrid) -> int:
    """Horizontal refinement that makes the near-field quadrature roughly isotropic."""
    h = max(np.hypot(*grid.lattice.lambda1) / grid.nx, np.hypot(*grid.lattice.lambda2) / grid.ny)
    return max(1, int(np.ceil(h / grid.hz)))


def near_field(u: SampledVectorField, dmap: DomainMap, patch: int = 3, refine: int | None = None,
               coarse=None) -> np.ndarray:
    """Correction replacing the coarse quadrature near each node by a refined one.

    Because the lattice translates of ``phi_00`` sum to one, the lattice sum
    restricted to the ``2 patch x 2 patch`` cells around a node is the
    Biot-Savart integral of ``u`` itself over those cells.  That integral is
    recomputed on two finer midpoint grids (horizontal spacing reduced by
    ``refine`` and ``2 refine``, vertical by 1 and 2) and Richardson
    extrapolated, which removes both the under-resolution of nearby layers in
    anisotropic cells and the first-order defect at boundary nodes.
    Returns shape (3, nz+1, ny, nx).
    """
    grid = u.grid
    refine = refine or near_field_refinement(grid)
    p = min(patch, grid.nx // 2, grid.ny // 2)
    cell = dmap.on_grid(grid)
    targets = cell.x.reshape(3, -1).T
    _, J, I = np.meshgrid(np.arange(grid.nz + 1), np.arange(grid.ny), np.arange(grid.nx), indexing="ij")
    tidx = np.stack([J.ravel(), I.ravel()], axis=1)
    lam1, lam2 = grid.lattice.lambda1, grid.lattice.lambda2

    def patch_sum(data, r):
        pos, uu, dV = data
        return near_sum(targets, tidx, pos, uu * dV[None], lam1, lam2, grid.ny, grid.nx, p, r)

    coarse = coarse if coarse is not None else _midpoint_data(u, dmap)
    s0 = patch_sum(coarse, 1)
    s1 = patch_sum(_midpoint_data(u, dmap, refine), refine)
    s2 = patch_sum(_midpoint_data(u, dmap, 2 * refine, 2), 2 * refine)
    corr = 2.0 * s2 - s1 - s0
    return corr.T.reshape((3,) + grid.shape)


def biot_savart(sources: CellSources, targets: np.ndarray) -> np.ndarray:
    """``(1/4 pi) int w(y) x (x - y) / |x - y|^3 dy`` at targets of shape (Nt, 3)."""
    targets = np.atleast_2d(np.asarray(targets, float))
    if sources.size == 0:
        return np.zeros_like(targets)
    return biot_savart_sum(sources.positions, sources.weights, targets)


# ---------------------------------------------------------------------------
# principal value lattice sum
# ---------------------------------------------------------------------------

def symmetric_pairs(L: int):
    """Cells ``(l, j)`` of the window ``|l|, |j| <= L``, each pair listed once, origin first."""
    out = [(0, 0)]
    for l in range(0, L + 1):
        for j in range(-L, L + 1):
            if l == 0 and j <= 0:
                continue
            out.append((l, j))
    return out


def _pair_weight(l, j):
    return 1.0 / (1.0 + abs(l) ** 3 + abs(j) ** 3)


def tail_factor(L: int, cutoff: int = 2000) -> float:
    """``sum`` of ``1/(1+|l|^3+|j|^3)`` over symmetric pairs outside the window."""
    total = 0.0
    shell = 0.0
    for s in range(L + 1, cutoff + 1):
        r = np.abs(np.arange(-s, s + 1)) ** 3
        inner = np.abs(np.arange(-s + 1, s)) ** 3
        # points with max(|l|, |j|) = s, halved because each pair is counted once
        shell = np.sum(1.0 / (1.0 + s**3 + r)) + np.sum(1.0 / (1.0 + s**3 + inner))
        total += shell
    # shell sums decay like c / s^2, so the remainder is about shell * cutoff
    return float(total + shell * cutoff)


@dataclass
class LatticeSum:
    B: np.ndarray  # (3, *target_shape)
    L: int
    pair_fit: float
    tail_bound: float
    drift: np.ndarray | None = None  # (2, 3, *target_shape) periodicity defects
    pair_maxima: list = field(default_factory=list)


def _shifts(lattice: Lattice, cells) -> np.ndarray:
    out = np.zeros((len(cells), 3))
    for c, (l, j) in enumerate(cells):
        out[c, :2] = lattice.point(l, j)
    return out


def pv_lattice_sum(sources: CellSources, lattice: Lattice, L: int, targets: np.ndarray, *,
                   with_drift: bool = True, probe: np.ndarray | None = None) -> LatticeSum:
    """Symmetric truncation ``sum_{|l|,|j|<=L} B_lj`` with ``B_lj(x) = B_00(x - l lambda1 - j lambda2)``.

    ``targets`` has shape (3, ...).  With ``with_drift`` the periodicity defects
    ``B(x + lambda_i) - B(x)`` of the truncated sum are returned as well; they
    only involve the cells entering and leaving the window.  Pair maxima
    ``|B_lj + B_(-l)(-j)|`` are measured on ``probe`` points (default: a
    subsample of the targets) and fitted to ``C / (1 + |l|^3 + |j|^3)``.
    """
    if L < 1:
        raise ContractViolation("truncation L must be >= 1")
    targets = np.asarray(targets, float)
    tshape = targets.shape[1:]
    flat = targets.reshape(3, -1).T
    cells = []
    coeffs = []
    for (l, j) in symmetric_pairs(L):
        if (l, j) == (0, 0):
            cells.append((0, 0))
            coeffs.append(1.0)
        else:
            cells += [(l, j), (-l, -j)]
            coeffs += [1.0, 1.0]
    B = biot_savart_sum(sources.positions, sources.weights, flat, _shifts(lattice, cells), np.array(coeffs))
    B = B.T.reshape((3,) + tshape)

    drift = None
    if with_drift:
        drift = np.zeros((2, 3) + tshape)
        r = range(-L, L + 1)
        for i, (enter, leave) in enumerate((
                ([(-L - 1, j) for j in r], [(L, j) for j in r]),
                ([(l, -L - 1) for l in r], [(l, L) for l in r]))):
            cl = enter + leave
            co = np.r_[np.ones(len(enter)), -np.ones(len(leave))]
            D = biot_savart_sum(sources.positions, sources.weights, flat, _shifts(lattice, cl), co)
            drift[i] = D.T.reshape((3,) + tshape)

    if probe is None:
        step = max(1, flat.shape[0] // 64)
        probe = flat[::step]
    probe = np.atleast_2d(probe)
    maxima = []
    fit = 0.0
    for (l, j) in symmetric_pairs(L)[1:]:
        Bp = biot_savart_sum(sources.positions, sources.weights, probe,
                             _shifts(lattice, [(l, j), (-l, -j)]), np.ones(2))
        mx = float(np.max(np.linalg.norm(Bp, axis=1)))
        maxima.append(((l, j), mx))
        fit = max(fit, mx / _pair_weight(l, j))
    return LatticeSum(B, L, fit, fit * tail_factor(L), drift, maxima)


def tail_gradient(ls: LatticeSum, lattice: Lattice) -> np.ndarray:
    """Gradient ``G`` of the affine part of the truncation tail, ``B_L ~ B - T0 - G x``.

    The horizontal columns follow from the mean periodicity defects,
    ``D_i = -G lambda_i``.  The tail is generated by distant sources, so it is
    curl- and divergence-free near the cell and ``G`` is symmetric and
    traceless, which fixes the vertical column.
    """
    if ls.drift is None:
        raise ContractViolation("lattice sum was computed without drift data")
    D = ls.drift.reshape(2, 3, -1).mean(axis=2).T  # columns D1, D2
    Gh = -D @ np.linalg.inv(lattice.basis)  # (3, 2): G[:, :2]
    G = np.zeros((3, 3))
    G[:, :2] = Gh
    G[0, 2] = Gh[2, 0]
    G[1, 2] = Gh[2, 1]
    G[2, 2] = -(Gh[0, 0] + Gh[1, 1])
    return G


def drift_corrected(ls: LatticeSum, grid: QuadratureGrid, z: np.ndarray | None = None) -> np.ndarray:
    """Remove the affine part of the truncation tail from a sum sampled on grid nodes.

    Horizontally the measured periodicity defects are interpolated in lattice
    coordinates, ``B - a1 D1 - a2 D2``, which makes the samples periodic; the
    vertical part ``(G e3) z`` uses :func:`tail_gradient`.  ``z`` defaults to
    the reference height of the nodes.
    """
    if ls.drift is None:
        raise ContractViolation("lattice sum was computed without drift data")
    A1, A2 = np.meshgrid(grid.a1, grid.a2)
    G = tail_gradient(ls, grid.lattice)
    z = grid.nodes[2] if z is None else z
    return ls.B - A1 * ls.drift[0] - A2 * ls.drift[1] + G[:, 2, None, None, None] * z[None]


def lattice_field(u: SampledVectorField, dmap: DomainMap, L: int = 8, *,
                  partition: PartitionCell | None = None, drift_correction: bool = True,
                  near: bool = True) -> tuple[np.ndarray, LatticeSum]:
    """``B`` at every grid node: lattice sum, drift removal and near-field quadrature."""
    grid = u.grid
    partition = partition or PartitionCell(grid.lattice)
    cell = dmap.on_grid(grid)
    coarse = _midpoint_data(u, dmap)
    src = cell_sources(u, dmap, partition, coarse)
    ls = pv_lattice_sum(src, grid.lattice, L, cell.x, with_drift=True)
    B = drift_corrected(ls, grid, cell.z) if drift_correction else ls.B
    if near:
        B = B + near_field(u, dmap, coarse=coarse)
    return B, ls


# ---------------------------------------------------------------------------
# tangential decomposition
# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    f0: np.ndarray
    a: tuple[float, float]
    conservativity: float
    reconstruction: float


def tangential_decompose(Bstar: np.ndarray, grid: QuadratureGrid, *, tol: float = 0.1) -> Decomposition:
    """Split ``B* = (B.S_X, B.S_Y)`` into ``grad f0 + (a1, a2)`` with periodic ``f0``.

    ``tol`` bounds the relative conservativity defect ``(B*_2)_X - (B*_1)_Y``.
    """
    Bstar = np.asarray(Bstar, float)
    if Bstar.shape != (2,) + grid.surface_shape:
        raise ContractViolation(f"B* has shape {Bstar.shape}, expected {(2,) + grid.surface_shape}")
    a = (float(np.mean(Bstar[0])), float(np.mean(Bstar[1])))
    rot = grid.dX(Bstar[1]) - grid.dY(Bstar[0])
    g1x, g1y = grid.grad_h(Bstar[0])
    g2x, g2y = grid.grad_h(Bstar[1])
    kmin = min(np.linalg.norm(grid.lattice.recip1), np.linalg.norm(grid.lattice.recip2))
    scale = max(np.max(np.abs(g1x)), np.max(np.abs(g1y)), np.max(np.abs(g2x)), np.max(np.abs(g2y)),
                kmin * np.max(np.abs(Bstar)))
    defect = float(np.max(np.abs(rot)))
    rel = defect / scale if scale > 0 else 0.0
    if rel > tol and defect > 1e-12:
        raise DecompositionError(f"tangential trace is not conservative (relative defect {rel:.2e})")
    src = g1x + g2y
    src = src - np.mean(src)
    f0 = solve_periodic_poisson_2d(grid.lattice, src, tol=1.0)
    fx, fy = grid.grad_h(f0)
    recon = float(max(np.max(np.abs(fx + a[0] - Bstar[0])), np.max(np.abs(fy + a[1] - Bstar[1]))))
    return Decomposition(f0, a, rel, recon)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class PotentialResult:
    A: SampledVectorField
    m: tuple[float, float]
    fluxes: tuple[float, float]
    diagnostics: dict
    status: str = "ok"
    warnings: list = field(default_factory=list)

    @property
    def flux_gap(self) -> float:
        return self.diagnostics["flux_gap"]


def side_fluxes(u: SampledVectorField, dmap: DomainMap) -> tuple[float, float]:
    """Fluxes of ``u`` through the side faces spanned by ``lambda_j`` and the vertical.

    Face ``j`` is ``{F(s lambda_j, Z)}`` with normal ``F_Z x DF lambda_j``,
    which is ``e3 x lambda_j`` on the flat slab.
    """
    grid = u.grid
    cell = dmap.on_grid(grid)
    lat = grid.lattice
    wz = grid.z_weights
    out = []
    for j, lam in enumerate((lat.lambda1, lat.lambda2)):
        if j == 0:
            vals, jac, ns = u.values[:, :, 0, :], cell.jac[:, :, :, 0, :], grid.nx
        else:
            vals, jac, ns = u.values[:, :, :, 0], cell.jac[:, :, :, :, 0], grid.ny
        T_s = jac[:, 0] * lam[0] + jac[:, 1] * lam[1]
        T_z = jac[:, 2]
        nu = np.cross(T_z, T_s, axis=0)
        integrand = np.sum(vals * nu, axis=0)  # (nz+1, ns)
        out.append(float(np.sum(integrand * wz[:, None]) / ns))
    return out[0], out[1]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # tag and re-raise
        raise StageError(name, exc) from exc


def potential_diagnostics(A: SampledVectorField, u: SampledVectorField, dmap: DomainMap) -> dict:
    """Residuals of ``curl A = u`` and both boundary conditions, plus the flux identity."""
    grid = A.grid
    cell = dmap.on_grid(grid)
    der = mapped_derivatives(A, dmap)
    unorm = max(u.max_norm(), 1e-300)
    anorm = max(A.max_norm(), 1e-300)
    top = np.cross(A.top, cell.top.n, axis=0)
    bot = A.bottom
    mloc = np.stack([bot[1], -bot[0]])
    m = (float(np.mean(mloc[0])), float(np.mean(mloc[1])))
    fluxes = side_fluxes(u, dmap)
    lat = grid.lattice
    predicted = [m[1] * lam[0] - m[0] * lam[1] for lam in (lat.lambda1, lat.lambda2)]
    fscale = max(abs(fluxes[0]), abs(fluxes[1]), 1e-300)
    gaps = [abs(f - p) for f, p in zip(fluxes, predicted)]
    return {
        "curl_error": float(np.max(np.linalg.norm(der.curl - u.values, axis=0)) / unorm),
        "top_AxN": float(np.max(np.linalg.norm(top, axis=0)) / anorm),
        "bottom_AxN_deviation": float(max(np.max(np.abs(mloc[0] - m[0])), np.max(np.abs(mloc[1] - m[1]))) / anorm),
        "bottom_A3": float(np.max(np.abs(bot[2])) / anorm),
        "div": float(np.max(np.abs(der.div))),
        "A_max": float(anorm),
        "m": m,
        "fluxes": fluxes,
        "flux_predicted": tuple(predicted),
        "flux_gap": float(max(gaps) / fscale) if max(fluxes, key=abs) != 0 else float(max(gaps)),
        "flux_gap_abs": float(max(gaps)),
    }


def assemble_potential(u: SampledVectorField, dmap: DomainMap, L: int = 8, *,
                       partition: PartitionCell | None = None, drift_correction: bool = True,
                       near: bool = True,
                       tol_curl: float = TOL_CURL, tol_bc: float = TOL_BC, tol_flux: float = TOL_FLUX,
                       normal_tol: float = 1e-6, decomposition_tol: float = 0.1) -> PotentialResult:
    """Build ``A = B - grad(phi + a1 (phi1 + x) + a2 (phi2 + y))`` from ``u`` in Y_T.

    The Biot-Savart stage costs ``O(L^2 N^2)`` kernel evaluations for ``N``
    grid nodes.  Sub-stage failures raise :class:`StageError`; tolerance
    misses only downgrade ``status`` to ``"assembled-with-warnings"``.
    """
    grid = u.grid
    lat = grid.lattice
    partition = partition or PartitionCell(lat)
    cell = _stage("geometry", dmap.on_grid, grid)
    unorm = u.max_norm()
    if unorm > 0:
        nt = np.max(np.abs(np.sum(u.top * cell.top.n, axis=0)))
        nb = np.max(np.abs(u.bottom[2]))
        if max(nt, nb) > normal_tol * unorm:
            raise ContractViolation(f"u is not tangent to the boundary (max |u.n| = {max(nt, nb):.2e})")
    diag_extra = {}
    if unorm == 0:
        B = grid.vector_zeros()
        diag_extra.update(pair_fit=0.0, tail_bound=0.0, periodicity_defect=0.0)
    else:
        B, ls = _stage("lattice-sum", lattice_field, u, dmap, L, partition=partition,
                       drift_correction=drift_correction, near=near)
        diag_extra.update(pair_fit=ls.pair_fit, tail_bound=ls.tail_bound,
                          periodicity_defect=float(np.max(np.linalg.norm(ls.drift, axis=1))),
                          drift_correction=drift_correction, near_field=near)

    # boundary traces in the (X, Y) chart
    top = cell.top
    Bt, Bb = B[:, -1], B[:, 0]
    dec_t = _stage("decompose-top", tangential_decompose,
                   np.stack([np.sum(Bt * top.S_X, axis=0), np.sum(Bt * top.S_Y, axis=0)]), grid,
                   tol=decomposition_tol)
    dec_b = _stage("decompose-bottom", tangential_decompose, Bb[:2], grid, tol=decomposition_tol)

    X, Y = grid.horizontal
    sol = _stage("dirichlet-phi", solve_dirichlet, DirichletProblem(dmap, top=dec_t.f0, bottom=dec_b.f0), grid)
    sol1 = _stage("dirichlet-phi1", solve_dirichlet, DirichletProblem(dmap, top=X - top.S[0]), grid)
    sol2 = _stage("dirichlet-phi2", solve_dirichlet, DirichletProblem(dmap, top=Y - top.S[1]), grid)
    a1, a2 = dec_t.a
    e1 = np.array([1.0, 0.0, 0.0])[:, None, None, None]
    e2 = np.array([0.0, 1.0, 0.0])[:, None, None, None]
    Avals = B - sol.gradient - a1 * (sol1.gradient + e1) - a2 * (sol2.gradient + e2)
    A = SampledVectorField(grid, Avals)

    diag = potential_diagnostics(A, u, dmap)
    diag.update(diag_extra)
    diag["a_top"] = dec_t.a
    diag["a_bottom"] = dec_b.a
    diag["m_from_constants"] = (dec_b.a[1] - a2, a1 - dec_b.a[0])
    diag["conservativity_top"] = dec_t.conservativity
    diag["conservativity_bottom"] = dec_b.conservativity
    diag["dirichlet_residuals"] = (sol.residual, sol1.residual, sol2.residual)
    warnings = []
    if diag["curl_error"] > tol_curl:
        warnings.append(f"curl error {diag['curl_error']:.2e} > {tol_curl:g}")
    if diag["top_AxN"] > tol_bc:
        warnings.append(f"top A x n {diag['top_AxN']:.2e} > {tol_bc:g}")
    if diag["bottom_AxN_deviation"] > tol_bc:
        warnings.append(f"bottom A x n deviation {diag['bottom_AxN_deviation']:.2e} > {tol_bc:g}")
    if diag["flux_gap"] > tol_flux and diag["flux_gap_abs"] > tol_flux * max(unorm, 1e-300):
        warnings.append(f"flux gap {diag['flux_gap']:.2e} > {tol_flux:g}")
    for w in warnings:
        log.warning("assemble_potential: %s", w)
    return PotentialResult(A, diag["m"], diag["fluxes"], diag,
                           "assembled-with-warnings" if warnings else "ok", warnings)


# ---------------------------------------------------------------------------
# spectral oracle and divergence cleaning
# ---------------------------------------------------------------------------

def spectral_potential_flat(u: SampledVectorField, dmap: DomainMap) -> SampledVectorField:
    """Curl inversion on the flat slab, mode by mode in the horizontal.

    Solves ``dA1/dz = u2``, ``dA2/dz = -u1`` with ``A(0) = 0`` and ``A3 = 0``
    (the Z-derivative matrix with its top row replaced by the boundary
    condition), then subtracts ``grad chi`` with ``chi`` linear in z so that the
    bottom trace becomes a constant.
    """
    if not isinstance(dmap, IdentityMap):
        raise UnsupportedConfiguration("the spectral oracle only handles the identity slab")
    grid = u.grid
    D = grid.Dz.copy()
    D[-1] = 0.0
    D[-1, -1] = 1.0
    rhs = np.stack([u.values[1], -u.values[0]])
    rhs[:, -1] = 0.0
    Ah = np.tensordot(np.linalg.inv(D), rhs, axes=(1, 1))  # (nz+1, 2, ny, nx)
    Ah = np.moveaxis(Ah, 1, 0)
    # gauge: make the bottom trace constant
    bh = np.fft.fft2(Ah[:, 0])  # (2, ny, nx)
    k2 = grid.kx**2 + grid.ky**2
    c = np.zeros(grid.surface_shape, complex)
    nz_mask = k2 > 0
    c[nz_mask] = -1j * (grid.kx[nz_mask] * bh[0][nz_mask] + grid.ky[nz_mask] * bh[1][nz_mask]) / k2[nz_mask]
    s = -grid.z / grid.depth  # 1 at the bottom, 0 on top
    chi_h = c[None] * s[:, None, None]
    grad = np.stack([
        np.fft.ifft2(grid.dx_symbol * chi_h).real,
        np.fft.ifft2(grid.dy_symbol * chi_h).real,
        np.broadcast_to(np.fft.ifft2(c).real * (-1.0 / grid.depth), grid.shape),
    ])
    A = np.zeros((3,) + grid.shape)
    A[:2] = Ah
    return SampledVectorField(grid, A - grad)


@dataclass
class CleanResult:
    A: SampledVectorField
    div_before: float
    div_after: float
    boundary_change: float


def divergence_clean(A: SampledVectorField, dmap: DomainMap) -> CleanResult:
    """``A - grad phi`` with ``Delta phi = div A`` and ``phi = 0`` on both boundaries."""
    grid = A.grid
    div = mapped_derivatives(A, dmap).div
    sol = _stage("divergence-clean", solve_dirichlet, DirichletProblem(dmap, rho=div), grid)
    clean = SampledVectorField(grid, A.values - sol.gradient)
    after = mapped_derivatives(clean, dmap).div
    cell = dmap.on_grid(grid)
    n_top = cell.top.n
    dtop = np.cross(clean.top - A.top, n_top, axis=0)
    dbot = (clean.bottom - A.bottom)[:2]
    change = float(max(np.max(np.abs(dtop)), np.max(np.abs(dbot))))
    return CleanResult(clean, float(np.max(np.abs(div))), float(np.max(np.abs(after[1:-1]))), change)
