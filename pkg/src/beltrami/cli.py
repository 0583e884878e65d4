"""Command-line driver: ``beltrami <command> --config scenario.toml``.

Exit codes: 0 pass, 1 verification failure, 2 configuration error, 3 numerical failure.
Reports are deterministic JSON; wall-clock timings go to a ``*.timing.json`` sidecar.
"""

from __future__ import annotations

import os

# BLAS threads stay fixed so results cannot depend on the machine
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

from .scenario import ScenarioError, load  # noqa: E402

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("verify-beltrami", "construct-potential", "check-variational", "dump-fields")

log = logging.getLogger("beltrami")


def _configure_threads(n: int) -> int:
    cpus = os.cpu_count() or 1
    want = cpus if n <= 0 else n
    os.environ.setdefault("NUMBA_NUM_THREADS", str(max(want, cpus)))
    import numba
    used = min(want, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(used)
    return used


def _floats(obj):
    """Convert numpy scalars and tuples into plain JSON types."""
    import numpy as np
    if isinstance(obj, dict):
        return {str(k): _floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _floats(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(out: Path, name: str, report: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(_floats(report), indent=2, sort_keys=True) + "\n")
    return path


def _grid_info(grid) -> dict:
    return {"nx": grid.nx, "ny": grid.ny, "nz": grid.nz}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_verify_beltrami(sc: dict, tol: dict, args) -> tuple[dict, int]:
    from .fields import beltrami_residuals
    from .scenario import build_field, build_grid, build_map
    grid = build_grid(sc)
    dmap = build_map(sc)
    u = build_field(sc, grid, dmap)
    alpha = float(sc["params"]["alpha"])
    res = beltrami_residuals(u, dmap, alpha)
    scale = u.max_norm()
    rel = {k: (v / scale if scale > 0 else v) for k, v in res.items()}
    passed = all(v <= tol["beltrami"] for v in rel.values())
    report = {"command": "verify-beltrami", "grid": _grid_info(grid), "alpha": alpha,
              "residuals": res, "relative_residuals": rel, "u_max": scale,
              "tolerance": tol["beltrami"], "pass": passed}
    return report, EXIT_PASS if passed else EXIT_FAIL


def _potential(sc: dict, u, dmap, tol: dict, method: str):
    from .potential import assemble_potential, potential_diagnostics, spectral_potential_flat
    if method == "spectral":
        A = spectral_potential_flat(u, dmap)
        diag = potential_diagnostics(A, u, dmap)
        ok = (diag["curl_error"] <= tol["curl"] and diag["top_AxN"] <= tol["bc"]
              and diag["flux_gap"] <= tol["flux"])
        return A, diag, "ok" if ok else "assembled-with-warnings", []
    p = sc["potential"]
    res = assemble_potential(u, dmap, p["L"], drift_correction=p["drift_correction"],
                             near=p["near_field"], tol_curl=tol["curl"], tol_bc=tol["bc"],
                             tol_flux=tol["flux"])
    return res.A, res.diagnostics, res.status, list(res.warnings)


def cmd_construct_potential(sc: dict, tol: dict, args) -> tuple[dict, int]:
    from .io import write_bwf
    from .scenario import build_field, build_grid, build_map
    grid = build_grid(sc)
    dmap = build_map(sc)
    u = build_field(sc, grid, dmap)
    method = sc["potential"]["method"]
    A, diag, status, warnings = _potential(sc, u, dmap, tol, method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bwf(out / "A.bwf", A.values, grid)
    if args.csv:
        from .io import write_csv
        write_csv(out / "A.csv", A.values, dmap.on_grid(grid).x)
    report = {"command": "construct-potential", "grid": _grid_info(grid), "method": method,
              "m": diag.get("m"), "fluxes": diag.get("fluxes"), "flux_gap": diag.get("flux_gap"),
              "diagnostics": diag, "status": status, "warnings": warnings,
              "pass": status == "ok", "dump": "A.bwf"}
    return report, EXIT_PASS if status == "ok" else EXIT_FAIL


def cmd_check_variational(sc: dict, tol: dict, args) -> tuple[dict, int]:
    import numpy as np
    from .functionals import (AdmissibleCurve, el_residuals, evaluate_functionals,
                              finite_difference_dJ, first_variation, make_admissible)
    from .geometry import IdentityMap, PeriodicFunction
    from .scenario import build_field, build_grid, build_map, build_params
    params = build_params(sc, require_mu=True)
    grid = build_grid(sc)
    dmap = build_map(sc)
    u = build_field(sc, grid, dmap)
    v = sc["variational"]
    method = v["potential"]
    if method == "auto":
        method = "spectral" if isinstance(dmap, IdentityMap) else "biot-savart"
    A, diag, status, _ = _potential(sc, u, dmap, tol, method)
    cell = dmap.on_grid(grid)
    el = el_residuals(A, dmap, params)
    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(int(v["num_variations"])):
        eta = PeriodicFunction.random(grid.lattice, rng, int(v["max_mode"]), float(v["amplitude"]))
        pair = make_admissible(dmap, A, eta, eps=float(v["mollification"]), t_max=2 * v["steps"][0])
        fv = first_variation(A, dmap, params, pair)
        fd = finite_difference_dJ(AdmissibleCurve(dmap, A, pair), params, tuple(v["steps"]))
        l1 = cell.integrate_surface(np.abs(pair.d_eta))
        gap = abs(fd.value - fv.dJ)
        rows.append({"index": i, "dJ": fv.dJ, "fd": fd.value, "fd_error": fd.error,
                     "reduced": fv.reduced, "dE": fv.dE, "dK": fv.dK, "dM": fv.dM,
                     "d_eta_L1": l1, "gap": gap, "gap_normalized": gap / max(abs(fv.dJ), l1),
                     "admissibility": pair.residuals})
    max_dJ = max((abs(r["dJ"]) / r["d_eta_L1"] for r in rows), default=0.0)
    gaps_ok = all(r["gap_normalized"] <= tol["variational"] for r in rows)
    critical = (el["interior_norm"] <= tol["el"] and el["boundary_norm"] <= tol["el"]
                and max_dJ <= tol["variational"])
    report = {"command": "check-variational", "grid": _grid_info(grid), "potential": method,
              "potential_status": status, "seed": args.seed,
              "functionals": evaluate_functionals(A, dmap, params).as_dict(),
              "el_residuals": {k: el[k] for k in ("interior_norm", "boundary_norm", "bernoulli_const_dev")},
              "variations": rows, "max_normalized_dJ": max_dJ,
              "verdict": "critical" if critical else "not critical", "pass": gaps_ok}
    return report, EXIT_PASS if gaps_ok else EXIT_FAIL


def cmd_dump_fields(sc: dict, tol: dict, args) -> tuple[dict, int]:
    from .io import write_bwf, write_csv
    from .scenario import build_field, build_grid, build_map
    grid = build_grid(sc)
    dmap = build_map(sc)
    u = build_field(sc, grid, dmap)
    x = dmap.on_grid(grid).x
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bwf(out / "u.bwf", u.values, grid)
    write_bwf(out / "x.bwf", x, grid)
    files = ["u.bwf", "x.bwf"]
    if args.csv:
        write_csv(out / "u.csv", u.values, x)
        files.append("u.csv")
    return {"command": "dump-fields", "grid": _grid_info(grid), "files": files, "pass": True}, EXIT_PASS


HANDLERS = {
    "verify-beltrami": cmd_verify_beltrami,
    "construct-potential": cmd_construct_potential,
    "check-variational": cmd_check_variational,
    "dump-fields": cmd_dump_fields,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="beltrami", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="scenario TOML file")
    ap.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    ap.add_argument("--threads", type=int, default=0, help="compute threads, 0 = all cores")
    ap.add_argument("--seed", type=int, default=0, help="seed for random variations")
    ap.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply all tolerances")
    ap.add_argument("--csv", action="store_true", help="also export CSV files")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load(args.config)
        if not (args.tolerance_scale > 0 and args.tolerance_scale < float("inf")):
            raise ScenarioError("--tolerance-scale must be positive and finite")
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is None:
        args.out = sc["output"]["dir"]
    threads = _configure_threads(args.threads)
    tol = {k: v * args.tolerance_scale for k, v in sc["tolerances"].items()}

    from .errors import (CompatibilityError, ContractViolation, DecompositionError,
                         GeometryDegenerateError, SolverFailure, StageError, StepSizeError,
                         UnsupportedConfiguration)
    t0 = time.perf_counter()
    try:
        report, code = HANDLERS[args.command](sc, tol, args)
    except (ScenarioError, UnsupportedConfiguration, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, StageError, DecompositionError, CompatibilityError,
            GeometryDegenerateError, StepSizeError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    runtime = time.perf_counter() - t0
    report["scenario"] = sc
    report["tolerances"] = tol
    name = args.command.replace("-", "_")
    out = Path(args.out)
    path = write_report(out, name, report)
    (out / f"{name}.timing.json").write_text(
        json.dumps({"runtime_s": runtime, "threads": threads}, sort_keys=True) + "\n")
    verdict = "PASS" if code == EXIT_PASS else "FAIL"
    print(f"{args.command}: {verdict} ({runtime:.2f} s) report: {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
