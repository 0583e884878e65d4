"""Scenario files: TOML configuration resolved against defaults, and builders for the objects it describes."""

from __future__ import annotations

import copy
import math
from pathlib import Path

import tomli

from .errors import ContractViolation

DEFAULTS = {
    "lattice": {"lambda1": [2 * math.pi, 0.0], "lambda2": [0.0, 2 * math.pi]},
    "domain": {"depth": 1.0},
    "map": {"kind": "identity", "eta": {"modes": [], "cos": [], "sin": []},
            "xi": {"modes": [], "cos": [], "sin": []}, "direction": [1.0, 0.0]},
    "field": {"family": "shear", "alpha": 2.0, "amplitude": 1.0, "k": [1.0, 0.0], "m": 1,
              "sign": 1, "vector": [0.0, 0.0, 1.0], "path": ""},
    "params": {"g": 1.0, "sigma": 0.1},
    "grid": {"nx": 32, "ny": 32, "nz": 32},
    "potential": {"method": "biot-savart", "L": 8, "near_field": True, "drift_correction": True},
    "variational": {"num_variations": 10, "max_mode": 2, "amplitude": 1.0,
                    "steps": [1e-3, 5e-4], "mollification": 0.0, "potential": "auto"},
    "tolerances": {"beltrami": 1e-5, "curl": 5e-2, "bc": 1e-2, "flux": 1e-2,
                   "variational": 1e-3, "el": 1e-4},
    "output": {"dir": "out"},
}

MAP_KINDS = ("identity", "graph-lift", "shear")
FIELD_FAMILIES = ("shear", "modal", "zero", "constant", "file")


class ScenarioError(ValueError):
    """The scenario file is malformed or inconsistent."""


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base and not (path == "params." and key in ("alpha", "mu")):
            raise ScenarioError(f"unknown key '{where}'")
        if isinstance(base.get(key), dict):
            if not isinstance(val, dict):
                raise ScenarioError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _finite(name: str, values):
    vals = values if isinstance(values, (list, tuple)) else [values]
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(f"'{name}' must be finite numbers, got {values!r}")


def _profile_ok(name: str, prof: dict):
    n = len(prof.get("modes", []))
    if len(prof.get("cos", [])) != n or len(prof.get("sin", [])) != n:
        raise ScenarioError(f"'{name}' needs equally long modes, cos and sin lists")
    for m in prof["modes"]:
        if len(m) != 2 or not all(isinstance(i, int) and not isinstance(i, bool) for i in m):
            raise ScenarioError(f"'{name}.modes' entries must be integer pairs")
    _finite(name + ".cos", prof["cos"])
    _finite(name + ".sin", prof["sin"])


def resolve(raw: dict) -> dict:
    """Merge ``raw`` into the defaults, fill derived values and validate."""
    sc = _merge(DEFAULTS, raw)
    for key in ("lambda1", "lambda2"):
        v = sc["lattice"][key]
        if not isinstance(v, list) or len(v) != 2:
            raise ScenarioError(f"'lattice.{key}' must be a pair")
        _finite("lattice." + key, v)
    _finite("domain.depth", sc["domain"]["depth"])
    if sc["domain"]["depth"] <= 0:
        raise ScenarioError("'domain.depth' must be positive")
    if sc["map"]["kind"] not in MAP_KINDS:
        raise ScenarioError(f"'map.kind' must be one of {MAP_KINDS}")
    _profile_ok("map.eta", sc["map"]["eta"])
    _profile_ok("map.xi", sc["map"]["xi"])
    f = sc["field"]
    if f["family"] not in FIELD_FAMILIES:
        raise ScenarioError(f"'field.family' must be one of {FIELD_FAMILIES}")
    _finite("field.alpha", f["alpha"])
    _finite("field.amplitude", f["amplitude"])
    _finite("field.k", f["k"])
    _finite("field.vector", f["vector"])
    p = sc["params"]
    if "alpha" not in p:
        p["alpha"] = _field_alpha(sc)
    for key in ("g", "sigma", "alpha"):
        _finite("params." + key, p[key])
    if "mu" in p:
        _finite("params.mu", p["mu"])
    if p["sigma"] <= 0:
        raise ScenarioError("'params.sigma' must be positive")
    for key in ("nx", "ny", "nz"):
        v = sc["grid"][key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 4:
            raise ScenarioError(f"'grid.{key}' must be an integer >= 4")
    if sc["grid"]["nz"] % 2 or sc["grid"]["nz"] < 8:
        raise ScenarioError("'grid.nz' must be even and at least 8")
    if sc["potential"]["method"] not in ("biot-savart", "spectral"):
        raise ScenarioError("'potential.method' must be 'biot-savart' or 'spectral'")
    if not isinstance(sc["potential"]["L"], int) or sc["potential"]["L"] < 1:
        raise ScenarioError("'potential.L' must be a positive integer")
    if sc["variational"]["potential"] not in ("auto", "biot-savart", "spectral"):
        raise ScenarioError("'variational.potential' must be 'auto', 'biot-savart' or 'spectral'")
    steps = sc["variational"]["steps"]
    _finite("variational.steps", steps)
    if len(steps) != 2 or not steps[0] > steps[1] > 0:
        raise ScenarioError("'variational.steps' must be two decreasing positive steps")
    for key, val in sc["tolerances"].items():
        _finite("tolerances." + key, val)
        if val <= 0:
            raise ScenarioError(f"'tolerances.{key}' must be positive")
    return sc


def _field_alpha(sc: dict) -> float:
    f = sc["field"]
    if f["family"] == "shear":
        return float(f["alpha"])
    if f["family"] == "modal":
        q = f["m"] * math.pi / sc["domain"]["depth"]
        return f["sign"] * math.sqrt(f["k"][0] ** 2 + f["k"][1] ** 2 + q * q)
    return 0.0


def load(path) -> dict:
    """Read and resolve a scenario file; raises :class:`ScenarioError`."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read config: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"malformed config: {exc}") from exc
    sc = resolve(raw)
    if sc["field"]["path"]:
        p = Path(sc["field"]["path"])
        if not p.is_absolute():
            sc["field"]["path"] = str((Path(path).parent / p).resolve())
    return sc


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_lattice(sc: dict):
    from .grid import Lattice
    try:
        return Lattice(tuple(sc["lattice"]["lambda1"]), tuple(sc["lattice"]["lambda2"]))
    except ContractViolation as exc:
        raise ScenarioError(str(exc)) from exc


def build_grid(sc: dict):
    from .grid import QuadratureGrid
    g = sc["grid"]
    return QuadratureGrid(build_lattice(sc), float(sc["domain"]["depth"]), g["nx"], g["ny"], g["nz"])


def _profile(lattice, prof: dict):
    from .geometry import PeriodicFunction
    return PeriodicFunction(lattice, tuple(tuple(m) for m in prof["modes"]),
                            tuple(float(c) for c in prof["cos"]), tuple(float(s) for s in prof["sin"]))


def build_map(sc: dict):
    from .geometry import IdentityMap, graph_lift, shear_map
    m = sc["map"]
    lattice = build_lattice(sc)
    d = float(sc["domain"]["depth"])
    if m["kind"] == "identity":
        return IdentityMap(d)
    if m["kind"] == "graph-lift":
        return graph_lift(d, _profile(lattice, m["eta"]))
    return shear_map(d, _profile(lattice, m["xi"]), tuple(m["direction"]), _profile(lattice, m["eta"]))


def build_field(sc: dict, grid, dmap):
    from .fields import ModalBeltrami, SampledVectorField, ShearBeltrami, evaluate_analytic
    from .geometry import IdentityMap
    from .io import read_bwf
    f = sc["field"]
    fam = f["family"]
    if fam == "zero":
        return SampledVectorField.zeros(grid)
    if fam == "constant":
        return SampledVectorField.constant(grid, f["vector"])
    if fam == "file":
        if not f["path"]:
            raise ScenarioError("'field.path' is required for the file family")
        values, meta = read_bwf(f["path"])
        expect = (3,) + grid.shape
        if values.shape != expect:
            raise ScenarioError(f"field file has shape {values.shape}, grid needs {expect}")
        return SampledVectorField(grid, values)
    if not isinstance(dmap, IdentityMap):
        raise ScenarioError(f"the {fam} family is only available on the identity map")
    if fam == "shear":
        family = ShearBeltrami(float(f["alpha"]), float(f["amplitude"]))
    else:
        family = ModalBeltrami(tuple(f["k"]), int(f["m"]), float(sc["domain"]["depth"]),
                               float(f["amplitude"]), int(f["sign"]))
    return evaluate_analytic(family, grid, dmap)


def build_params(sc: dict, require_mu: bool = False):
    from .functionals import PhysicalParams
    p = sc["params"]
    if require_mu and "mu" not in p:
        raise ScenarioError("'params.mu' is required for this command")
    return PhysicalParams(float(p["g"]), float(p["sigma"]), float(p["alpha"]), float(p.get("mu", 0.0)))

