import json
import math

import numpy as np
import pytest

from invscat.cli import EXIT_ACCEPTANCE, EXIT_OK, EXIT_VALIDATION, main
from invscat.io import read_csv

FAST_GRIDS = {"q_per_decade": 48, "q_decades": 2.0, "sigma_n": 96, "s_n": 60, "s_max_factor": 5.0}


def write_config(tmp_path, name="run.json", **cfg):
    cfg.setdefault("E", 10.0)
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_invalid_config_exits_1_without_output(tmp_path, capsys):
    cfg = write_config(tmp_path, E=-1.0)
    out = tmp_path / "out"
    assert run("deflect", "--config", cfg, "--out", out) == EXIT_VALIDATION
    assert not out.exists()
    assert "E must be a positive number" in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "E": 10.0,\n  "regime": \n}\n')
    assert run("deflect", "--config", path, "--out", tmp_path / "o") == EXIT_VALIDATION
    assert f"{path}:4:" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, energy=3)
    assert run("deflect", "--config", cfg, "--out", tmp_path / "o") == EXIT_VALIDATION
    assert "unknown key 'energy'" in capsys.readouterr().err


def test_low_energy_roundtrip_fails_with_constants(tmp_path, capsys):
    cfg = write_config(tmp_path, E=1.0, grids=FAST_GRIDS)
    out = tmp_path / "out"
    assert run("roundtrip", "--config", cfg, "--out", out) == EXIT_ACCEPTANCE
    text = capsys.readouterr().out
    assert "energy below admissible threshold" in text and "C_E =" in text and "R_E =" in text
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "FAIL" and report["E_1"] > 1.0


def test_deflect_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, grids=FAST_GRIDS)
    run("deflect", "--config", cfg, "--out", tmp_path / "a")
    run("deflect", "--config", cfg, "--out", tmp_path / "b")
    a = (tmp_path / "a" / "deflection.csv").read_bytes()
    assert a == (tmp_path / "b" / "deflection.csv").read_bytes()


def test_outputs_embed_hash_and_constants(tmp_path):
    cfg = write_config(tmp_path, grids=FAST_GRIDS)
    assert run("reconstruct", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    meta, cols = read_csv(tmp_path / "o" / "reconstruction.csv")
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    for m in (meta, summary):
        assert len(m["config_hash"]) == 16
        for k in ("E", "beta", "beta_prime", "C_E", "R_E"):
            assert np.isfinite(m[k])
    assert meta["config_hash"] == summary["config_hash"]
    assert meta["beta"] == pytest.approx(math.sqrt(22), rel=1e-12)  # sqrt(2 (E + beta_0)) R, beta_0 = 1
    assert summary["sup_rel_err"] <= 1e-3


def test_csv_numbers_carry_17_significant_digits(tmp_path):
    cfg = write_config(tmp_path, grids=FAST_GRIDS)
    run("deflect", "--config", cfg, "--out", tmp_path / "o")
    lines = (tmp_path / "o" / "deflection.csv").read_text(encoding="utf-8").splitlines()
    row = [ln for ln in lines if not ln.startswith("#")][1].split(",")
    _, cols = read_csv(tmp_path / "o" / "deflection.csv")
    q, g = cols["q"], cols["g"]
    # the text round-trips exactly and is printed with %.17g
    assert float(row[0]) == q[0] and float(row[1]) == g[0]
    assert row[1] == f"{g[0]:.17g}"


def test_free_field_deflection(tmp_path):
    for regime, extra, k in (("nonrel", {}, 1.0), ("rel", {"c": 10.0}, 110.0)):
        cfg = write_config(tmp_path, f"{regime}.json", regime=regime, E=10.0 if regime == "nonrel" else 110.0,
                           field={"kind": "zero", "R": 1.0}, grids=FAST_GRIDS, **extra)
        assert run("deflect", "--config", cfg, "--out", tmp_path / regime) == EXIT_OK
        _, cols = read_csv(tmp_path / regime / "deflection.csv")
        np.testing.assert_allclose(cols["g"], math.pi / (k * cols["q"]), rtol=1e-10)


def test_map_source_matches_quadrature(tmp_path):
    grids = dict(FAST_GRIDS, q_per_decade=6, q_decades=1.0)
    cfg = write_config(tmp_path, grids=grids)
    run("deflect", "--config", cfg, "--out", tmp_path / "quad")
    assert run("deflect", "--config", cfg, "--out", tmp_path / "map", "--source", "map") == EXIT_OK
    mq, a = read_csv(tmp_path / "quad" / "deflection.csv")
    mm, b = read_csv(tmp_path / "map" / "deflection.csv")
    assert mm["source"] == "map"
    np.testing.assert_array_equal(a["q"], b["q"])
    assert np.max(np.abs(b["g"] / a["g"] - 1)) <= 1e-5


def test_reconstruct_from_csv_and_coverage_error(tmp_path, capsys):
    short = write_config(tmp_path, "short.json", grids=dict(FAST_GRIDS, q_decades=1.0))
    full = write_config(tmp_path, "full.json", grids=FAST_GRIDS)
    run("deflect", "--config", short, "--out", tmp_path / "s")
    run("deflect", "--config", full, "--out", tmp_path / "f")
    assert run("reconstruct", "--config", full, "--deflection", tmp_path / "f" / "deflection.csv",
               "--out", tmp_path / "ok") == EXIT_OK
    assert json.loads((tmp_path / "ok" / "summary.json").read_text())["sup_rel_err"] <= 1e-3
    code = run("reconstruct", "--config", full, "--deflection", tmp_path / "s" / "deflection.csv",
               "--out", tmp_path / "bad")
    assert code == EXIT_VALIDATION
    assert "required range [beta, q_max]" in capsys.readouterr().err
    assert not (tmp_path / "bad").exists()


def test_free_reconstruction_vanishes(tmp_path):
    cfg = write_config(tmp_path, field={"kind": "zero", "R": 1.0}, grids=FAST_GRIDS)
    assert run("reconstruct", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    _, cols = read_csv(tmp_path / "o" / "reconstruction.csv")
    assert np.max(np.abs(cols["W_rec"])) <= 1e-8


def test_simulate_free_field(tmp_path):
    cfg = write_config(tmp_path, field={"kind": "zero", "R": 1.0},
                       simulate={"impact_parameters": [0.5, 6.0], "random": 2, "boundary": True})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    recs = json.loads((tmp_path / "o" / "asymptotes.json").read_text())["records"]
    assert len(recs) == 4
    for r in recs:
        assert np.max(np.abs(np.subtract(r["v_plus"], r["v_minus"]))) <= 1e-9
        assert np.max(np.abs(np.subtract(r["x_plus"], r["x_minus"]))) <= 1e-8
    assert recs[0]["boundary"] == "hit" and recs[1]["boundary"] == "misses ball"
    meta, cols = read_csv(tmp_path / "o" / "trajectory_000.csv")
    assert list(cols) == ["t", "x1", "x2", "v1", "v2", "energy_residual"]
    assert meta["index"] == 0
    _, b = read_csv(tmp_path / "o" / "boundary.csv")
    np.testing.assert_allclose(np.hypot(b["q0_1"], b["q0_2"]), 1.0, atol=1e-8)


def test_simulate_standard_conserves(tmp_path):
    cfg = write_config(tmp_path, simulate={"impact_parameters": [2.0, 6.0]})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    for r in json.loads((tmp_path / "o" / "asymptotes.json").read_text())["records"]:
        assert r["max_energy_drift"] <= 1e-9
        assert r["angular_momentum_residual"] <= 1e-8 * r["impact_parameter"]


def test_roundtrip_nonrel_passes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run("roundtrip", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["status"] == "PASS" and len(report["checks"]) == 4
    assert capsys.readouterr().out.strip().endswith("PASS")
    for name in ("deflection.csv", "reconstruction.csv", "summary.json"):
        assert (tmp_path / "o" / name).exists()


def test_roundtrip_rel_matches_nonrel_limit(tmp_path):
    c = 1000.0
    cfg = write_config(tmp_path, regime="rel", c=c, E=c * c + 10.0,
                       field={"kind": "shifted_power", "A": 0.5, "alpha": 2.0, "R": 1.0})
    assert run("roundtrip", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    checks = json.loads((tmp_path / "o" / "report.json").read_text())["checks"]
    gap = [ch for ch in checks if ch["name"].startswith("chi gap")][0]
    assert gap["pass"] and gap["value"] <= 10 * 10.0 / c**2


def test_roundtrip_rel_standard_profile_is_gated(tmp_path):
    # with beta_1 = 2 the relativistic threshold at c = 1e3 is about c^2 + 20
    c = 1000.0
    cfg = write_config(tmp_path, regime="rel", c=c, E=c * c + 10.0)
    assert run("roundtrip", "--config", cfg, "--out", tmp_path / "o") == EXIT_ACCEPTANCE
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert c * c + 10.0 < report["E_1"] < c * c + 30.0


def test_regime_flag_overrides(tmp_path):
    cfg = write_config(tmp_path, c=None, field={"kind": "zero", "R": 1.0}, grids=FAST_GRIDS)
    # nonrel config forced to rel without c is a validation error
    assert run("deflect", "--config", cfg, "--regime", "rel", "--out", tmp_path / "o") == EXIT_VALIDATION
