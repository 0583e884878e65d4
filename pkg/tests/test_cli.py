import json
from pathlib import Path

import numpy as np
import pytest

from beltrami.cli import main
from beltrami.grid import Lattice, QuadratureGrid
from beltrami.io import read_bwf, write_bwf
from beltrami.scenario import ScenarioError, resolve

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def _write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _report(out, name):
    return json.loads((Path(out) / f"{name}.json").read_text())


def test_verify_shear_passes(tmp_path):
    assert main(["verify-beltrami", "--config", str(SCEN / "shear.toml"), "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path, "verify_beltrami")
    assert max(rep["residuals"].values()) < 1e-5
    assert rep["scenario"]["field"]["family"] == "shear"
    assert (tmp_path / "verify_beltrami.timing.json").exists()


def test_verify_vertical_flow_fails(tmp_path):
    assert main(["verify-beltrami", "--config", str(SCEN / "vertical.toml"), "--out", str(tmp_path)]) == 1
    assert _report(tmp_path, "verify_beltrami")["residuals"]["bottom_normal"] == 1.0


@pytest.mark.parametrize("text", [
    "x = [",
    "[grid]\nnx = 'many'\n",
    "[params]\nsigma = -1.0\n",
    "[nonsense]\na = 1\n",
    "[grid]\nnz = 9\n",
    "[map]\nkind = 'graph-lift'\n[field]\nfamily = 'shear'\n",
])
def test_config_errors_exit_2(tmp_path, text):
    cfg = _write(tmp_path, text)
    assert main(["verify-beltrami", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_missing_config_and_missing_mu(tmp_path):
    assert main(["verify-beltrami", "--config", str(tmp_path / "nope.toml")]) == 2
    cfg = _write(tmp_path, "[field]\nfamily = 'shear'\n[grid]\nnx = 8\nny = 8\nnz = 8\n")
    assert main(["check-variational", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = _write(tmp_path, "[params]\nmu = -1.0\n[grid]\nnx = 8\nny = 8\nnz = 8\n"
                           "[variational]\nnum_variations = 1\namplitude = 1e6\n")
    assert main(["check-variational", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_zero_field_potential_dump(tmp_path):
    assert main(["construct-potential", "--config", str(SCEN / "zero.toml"), "--out", str(tmp_path)]) == 0
    values, meta = read_bwf(tmp_path / "A.bwf")
    assert values.shape == (3, 9, 8, 8)
    assert not np.any(values)
    assert meta["depth"] == 1.0


def test_modal_potential_reports_zero_fluxes(tmp_path):
    cfg = _write(tmp_path, "[field]\nfamily = 'modal'\n[grid]\nnx = 8\nny = 8\nnz = 8\n[potential]\nL = 2\n")
    main(["construct-potential", "--config", cfg, "--out", str(tmp_path)])
    rep = _report(tmp_path, "construct_potential")
    assert max(abs(f) for f in rep["fluxes"]) < 1e-12


def test_check_variational_verdicts(tmp_path):
    common = "[grid]\nnx = 16\nny = 16\nnz = 32\n[variational]\nnum_variations = 2\n"
    shear = _write(tmp_path, common + "[params]\nmu = -1.0\n", "shear.toml")
    assert main(["check-variational", "--config", shear, "--out", str(tmp_path / "s")]) == 0
    rep = _report(tmp_path / "s", "check_variational")
    assert rep["verdict"] == "critical"
    assert max(abs(v["dJ"]) for v in rep["variations"]) < 1e-4
    modal = _write(tmp_path, common + "[field]\nfamily = 'modal'\n[params]\nmu = -0.45\n", "modal.toml")
    assert main(["check-variational", "--config", modal, "--out", str(tmp_path / "m")]) == 0
    rep = _report(tmp_path / "m", "check_variational")
    assert rep["verdict"] == "not critical"
    assert rep["scenario"]["params"]["mu"] == -0.45


def test_dump_fields_and_csv(tmp_path):
    cfg = _write(tmp_path, "[field]\nfamily = 'modal'\n[grid]\nnx = 4\nny = 4\nnz = 8\n")
    assert main(["dump-fields", "--config", cfg, "--out", str(tmp_path), "--csv"]) == 0
    u, _ = read_bwf(tmp_path / "u.bwf")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "x,y,z,v1,v2,v3"
    assert len(rows) == 1 + 4 * 4 * 9
    first = [float(v) for v in rows[1].split(",")]
    assert first[3:] == pytest.approx(list(u[:, 0, 0, 0]))


def test_bwf_round_trip_and_header(tmp_path):
    g = QuadratureGrid(Lattice((6.0, 0.0), (1.0, 5.0)), 0.7, 4, 6, 8)
    vals = np.random.default_rng(0).normal(size=(3,) + g.shape)
    write_bwf(tmp_path / "f.bwf", vals, g)
    back, meta = read_bwf(tmp_path / "f.bwf")
    assert np.array_equal(back, vals)
    header = (tmp_path / "f.bwf").read_bytes().split(b"\n", 1)[0].decode()
    assert header == "BWF1 4 6 9 0.7 6.0 0.0 1.0 5.0"


def test_file_field_family(tmp_path):
    cfg = _write(tmp_path, "[field]\nfamily = 'modal'\n[grid]\nnx = 8\nny = 8\nnz = 8\n", "a.toml")
    main(["dump-fields", "--config", cfg, "--out", str(tmp_path)])
    cfg2 = _write(tmp_path, "[field]\nfamily = 'file'\npath = 'u.bwf'\n[params]\nalpha = 3.2969\n"
                            "[grid]\nnx = 8\nny = 8\nnz = 8\n", "b.toml")
    assert main(["verify-beltrami", "--config", cfg2, "--out", str(tmp_path / "v"),
                 "--tolerance-scale", "1e4"]) == 0


def test_resolve_materialises_defaults():
    sc = resolve({"field": {"family": "modal"}})
    assert sc["params"]["alpha"] == pytest.approx(np.sqrt(1 + np.pi**2))
    assert sc["potential"]["L"] == 8
    with pytest.raises(ScenarioError):
        resolve({"grid": {"nx": 2}})
