"""Binary field dumps (BWF1) and CSV export.

A dump is one ASCII header line ``BWF1 NX NY NZ d lam1x lam1y lam2x lam2y``
followed by little-endian float64 values, component-major, then Z, Y, X.
``NZ`` counts vertical nodes (both boundaries included).
"""

from __future__ import annotations

import csv

import numpy as np

MAGIC = "BWF1"


def write_bwf(path, values: np.ndarray, grid) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.shape != (3,) + grid.shape:
        raise ValueError(f"expected shape {(3,) + grid.shape}, got {values.shape}")
    l1, l2 = grid.lattice.lambda1, grid.lattice.lambda2
    header = " ".join([MAGIC, str(grid.nx), str(grid.ny), str(grid.nz + 1)]
                      + [repr(float(v)) for v in (grid.depth, l1[0], l1[1], l2[0], l2[1])])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(values).tobytes())


def read_bwf(path):
    """Return ``(values, meta)`` with values of shape (3, NZ, NY, NX)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 9 or header[0] != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC} file")
        nx, ny, nz = (int(v) for v in header[1:4])
        d, l1x, l1y, l2x, l2y = (float(v) for v in header[4:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 3 * nx * ny * nz:
        raise ValueError(f"{path}: expected {3 * nx * ny * nz} values, found {data.size}")
    meta = {"nx": nx, "ny": ny, "nz_nodes": nz, "depth": d,
            "lambda1": (l1x, l1y), "lambda2": (l2x, l2y)}
    return data.reshape(3, nz, ny, nx).astype(float), meta


def write_csv(path, values: np.ndarray, positions: np.ndarray) -> None:
    """One row per node: x, y, z, v1, v2, v3 (Z-major, then Y, then X)."""
    pos = positions.reshape(3, -1).T
    val = np.asarray(values).reshape(3, -1).T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "v1", "v2", "v3"])
        for p, v in zip(pos, val):
            w.writerow([repr(float(c)) for c in (*p, *v)])
