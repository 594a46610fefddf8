import csv
import json

import pytest

from gaplab import cli


def _write_cfg(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _read_artifact(path):
    text = path.read_text()
    lines = text.splitlines()
    manifest = lines[0]
    rows = list(csv.DictReader(lines[1:]))
    return manifest, rows


def test_sigma1_run_and_manifest(tmp_path):
    cfg = {"kind": "sigma1", "m": 64, "steps": 256, "tolerance": 0.05,
           "cross_tolerance": 0.05,
           "cases": [{"kappa": 0.0, "d": 1.0},
                     {"kappa": -1.0, "d": 1.0},
                     {"kappa": 1.0, "d": 1.0}]}
    path = _write_cfg(tmp_path, "c.json", cfg)
    rc = cli.main(["sigma1", "--config", path, "--out", str(tmp_path),
                   "--strict"])
    assert rc == cli.EXIT_OK
    manifest, rows = _read_artifact(tmp_path / "sigma1.csv")
    assert manifest.startswith("# gaplab kind=sigma1 config_digest=")
    assert f"config_digest={cli.config_digest(cfg)}" in manifest
    assert manifest.endswith("seed=0")
    assert len(rows) == 3
    assert all(r["pass"] == "true" for r in rows)
    # numeric columns round-trip through float()
    for r in rows:
        float(r["sigma1_eig"])
        float(r["closed_form"])


def test_bounds_and_kernel(tmp_path):
    bcfg = {"kind": "bounds",
            "cases": [{"alpha": 1, "beta": 1, "r0": 1}],
            "sweep": {"C1": 1.0, "C2": 1.0, "r0": 1.0,
                      "lambdas": [100.0, 1e6]}}
    rc = cli.main(["bounds", "--config",
                   _write_cfg(tmp_path, "b.json", bcfg),
                   "--out", str(tmp_path), "--strict"])
    assert rc == cli.EXIT_OK
    _, rows = _read_artifact(tmp_path / "bounds.csv")
    assert float(rows[0]["bound"]) == pytest.approx(0.25 / (8 * 192**2))

    kcfg = {"kind": "kernel_asymptotics", "t_list": [0.2, 0.1],
            "r_list": [1.0]}
    rc = cli.main(["kernel_asymptotics", "--config",
                   _write_cfg(tmp_path, "k.json", kcfg),
                   "--out", str(tmp_path), "--strict"])
    assert rc == cli.EXIT_OK
    _, rows = _read_artifact(tmp_path / "kernel_asymptotics.csv")
    assert len(rows) == 2
    assert all(float(r["normalization_error"]) < 1e-8 for r in rows)


def test_schema_errors(tmp_path):
    # missing file
    assert cli.main(["sigma1", "--config",
                     str(tmp_path / "missing.json")]) == cli.EXIT_SCHEMA
    # invalid JSON
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["sigma1", "--config", str(bad)]) == cli.EXIT_SCHEMA
    # missing required key
    cfg = _write_cfg(tmp_path, "c1.json", {"kind": "sigma1", "cases": []})
    assert cli.main(["sigma1", "--config", cfg]) == cli.EXIT_SCHEMA
    # kind mismatch between config and subcommand
    cfg = _write_cfg(tmp_path, "c2.json",
                     {"kind": "bounds",
                      "cases": [{"alpha": 1, "beta": 1, "r0": 1}]})
    assert cli.main(["sigma1", "--config", cfg]) == cli.EXIT_SCHEMA
    # conjugate-point regime rejected up front
    cfg = _write_cfg(tmp_path, "c3.json",
                     {"kind": "sigma1", "m": 32,
                      "cases": [{"kappa": 10.0, "d": 1.0}]})
    assert cli.main(["sigma1", "--config", cfg]) == cli.EXIT_SCHEMA
    # negative seed
    cfg = _write_cfg(tmp_path, "c4.json",
                     {"kind": "bounds", "seed": -1,
                      "cases": [{"alpha": 1, "beta": 1, "r0": 1}]})
    assert cli.main(["bounds", "--config", cfg]) == cli.EXIT_SCHEMA


def test_numeric_failure_exit(tmp_path):
    # double-well polynomial passes the schema but fails potential
    # validation inside the solver
    cfg = _write_cfg(tmp_path, "dw.json",
                     {"kind": "semiclassical",
                      "potential": {"preset": "poly",
                                    "coeffs": {"2": -0.5, "4": 1.0}},
                      "lambdas": [10.0]})
    rc = cli.main(["semiclassical", "--config", cfg,
                   "--out", str(tmp_path)])
    assert rc == cli.EXIT_NUMERIC
    assert not (tmp_path / "semiclassical.csv").exists()


def test_strict_tolerance_exit(tmp_path):
    cfg = {"kind": "sigma1", "m": 32, "steps": 256,
           "tolerance": 1e-15, "cross_tolerance": 1e-15,
           "cases": [{"kappa": 1.0, "d": 1.0}]}
    path = _write_cfg(tmp_path, "tight.json", cfg)
    out1 = tmp_path / "lax"
    out2 = tmp_path / "strict"
    assert cli.main(["sigma1", "--config", path, "--out",
                     str(out1)]) == cli.EXIT_OK
    _, rows = _read_artifact(out1 / "sigma1.csv")
    assert rows[0]["pass"] == "false"
    assert cli.main(["sigma1", "--config", path, "--out", str(out2),
                     "--strict"]) == cli.EXIT_TOLERANCE


def test_seed_override_in_manifest(tmp_path):
    cfg = _write_cfg(tmp_path, "s.json",
                     {"kind": "bounds", "seed": 5,
                      "cases": [{"alpha": 1, "beta": 1, "r0": 1}]})
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    assert cli.main(["bounds", "--config", cfg, "--out",
                     str(out1)]) == cli.EXIT_OK
    assert cli.main(["bounds", "--config", cfg, "--out", str(out2),
                     "--seed", "9"]) == cli.EXIT_OK
    m1, _ = _read_artifact(out1 / "bounds.csv")
    m2, _ = _read_artifact(out2 / "bounds.csv")
    assert m1.endswith("seed=5")
    assert m2.endswith("seed=9")


def test_simulate_kind_deterministic_across_threads(tmp_path):
    cfg = _write_cfg(tmp_path, "sim.json",
                     {"kind": "simulate", "seed": 11,
                      "profile": {"preset": "flat"},
                      "lambdas": [4.0], "m": 200, "paths": 2000})
    out1 = tmp_path / "t1"
    out2 = tmp_path / "t4"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out1),
                     "--threads", "1"]) == cli.EXIT_OK
    assert cli.main(["simulate", "--config", cfg, "--out", str(out2),
                     "--threads", "4"]) == cli.EXIT_OK
    b1 = (out1 / "simulate.csv").read_bytes()
    b2 = (out2 / "simulate.csv").read_bytes()
    assert b1 == b2


def test_identities_run(tmp_path):
    cfg = _write_cfg(tmp_path, "id.json",
                     {"kind": "identities", "tolerance": 1e-3,
                      "cases": [{"profile": {"preset": "flat"},
                                 "m": 48, "steps": 256},
                                {"profile": {"preset": "hyperbolic",
                                             "a": 1.0},
                                 "m": 48, "steps": 256}]})
    assert cli.main(["identities", "--config", cfg, "--out",
                     str(tmp_path), "--strict"]) == cli.EXIT_OK
    _, rows = _read_artifact(tmp_path / "identities.csv")
    assert [r["profile"] for r in rows] == ["flat", "hyperbolic"]
    assert all(r["pass"] == "true" for r in rows)
