"""Config-driven command line runner.

One config file describes one experiment kind; the runner validates the
config, dispatches to the owning module, checks declared tolerances and
writes a CSV artifact with a manifest line.  Exit codes: 0 success,
2 config/schema error, 3 numeric failure, 4 tolerance failure under
--strict (without --strict failing rows are flagged in the CSV and the
exit code stays 0).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3
EXIT_TOLERANCE = 4

KINDS = ("sigma1", "identities", "semiclassical", "simulate", "bounds",
         "kernel_asymptotics")


class SchemaError(Exception):
    pass


def _limit_threads():
    """Pin BLAS pools to one thread so artifacts cannot depend on the
    worker count."""
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except Exception:
        pass


# ---------------------------------------------------------------------------
# config plumbing

def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise SchemaError("config root must be a key-value tree")
    return cfg


def config_digest(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _require(cfg, key, types, where="config"):
    if key not in cfg:
        raise SchemaError(f"{where}: missing required key '{key}'")
    if not isinstance(cfg[key], types):
        raise SchemaError(f"{where}: key '{key}' has wrong type")
    return cfg[key]


def _positive(val, name):
    if not (isinstance(val, (int, float)) and val > 0):
        raise SchemaError(f"'{name}' must be a positive number")
    return val


def _build_profile_from(block, where):
    from .radial import build_profile
    preset = _require(block, "preset", str, where)
    if preset == "flat":
        return build_profile("flat")
    if preset == "hyperbolic":
        return build_profile("hyperbolic",
                             a=_positive(block.get("a", 1.0), "a"))
    raise SchemaError(f"{where}: unknown profile preset '{preset}'")


# ---------------------------------------------------------------------------
# formatting

def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.12g" % float(x)
    return str(x)


def write_csv(path, kind, digest, seed, columns, rows):
    lines = [f"# gaplab kind={kind} config_digest={digest} seed={seed}"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment kinds

def run_sigma1(cfg, seed):
    from .jacobi import GeodesicData, build_KNM
    from .operators import GridSpec, assemble_operators, sigma1

    cases = _require(cfg, "cases", list)
    m = int(_positive(_require(cfg, "m", int), "m"))
    steps = int(_positive(cfg.get("steps", 1024), "steps"))
    tol = _positive(cfg.get("tolerance", 2e-3), "tolerance")
    cross_tol = _positive(cfg.get("cross_tolerance", 5e-3),
                          "cross_tolerance")
    rows = []
    for i, case in enumerate(cases):
        if not isinstance(case, dict):
            raise SchemaError(f"cases[{i}] must be a table")
        kappa = _require(case, "kappa", (int, float), f"cases[{i}]")
        d = _positive(_require(case, "d", (int, float), f"cases[{i}]"), "d")
        n = int(case.get("n", 1))
        scale = kappa * d * d
        if scale >= np.pi**2:
            raise SchemaError(f"cases[{i}]: kappa*d^2 must stay below pi^2")
        geo = GeodesicData.constant_curvature_block(kappa, d, n=n)
        ops = assemble_operators(build_KNM(geo, steps=steps),
                                 GridSpec(m, n))
        via_eig, via_opnorm = sigma1(ops)
        closed = 1.0 - scale / np.pi**2 if scale > 0 else 1.0
        ok = (abs(via_eig - closed) < tol
              and abs(via_eig - via_opnorm) < cross_tol)
        rows.append({"kappa": kappa, "d": d, "n": n, "m": m,
                     "sigma1_eig": via_eig, "sigma1_opnorm": via_opnorm,
                     "closed_form": closed, "pass": ok})
    cols = ["kappa", "d", "n", "m", "sigma1_eig", "sigma1_opnorm",
            "closed_form", "pass"]
    return cols, rows


def run_identities(cfg, seed):
    from .jacobi import GeodesicData, build_KNM
    from .operators import (GridSpec, assemble_operators,
                            identity_residuals)

    cases = _require(cfg, "cases", list)
    tol = _positive(cfg.get("tolerance", 1e-3), "tolerance")
    keys = ["SsS_minus_IT", "SS2_minus_I", "S2S_minus_I0",
            "SinvstarIT_minus_S"]
    rows = []
    for i, case in enumerate(cases):
        if not isinstance(case, dict):
            raise SchemaError(f"cases[{i}] must be a table")
        profile = _build_profile_from(
            _require(case, "profile", dict, f"cases[{i}]"), f"cases[{i}]")
        d = _positive(case.get("d", 1.0), "d")
        n = int(case.get("n", 3))
        m = int(_positive(_require(case, "m", int, f"cases[{i}]"), "m"))
        steps = int(case.get("steps", max(1024, 2 * m)))
        geo = GeodesicData.from_profile(profile, d, n=n)
        ops = assemble_operators(build_KNM(geo, steps=steps),
                                 GridSpec(m, n))
        res = identity_residuals(ops)
        row = {"profile": profile.preset, "d": d, "n": n, "m": m}
        worst = 0.0
        for k in keys:
            row[k] = res[k]
            worst = max(worst, res[k])
        row["pass"] = worst < tol
        rows.append(row)
    cols = ["profile", "d", "n", "m"] + keys + ["pass"]
    return cols, rows


def run_semiclassical(cfg, seed):
    from .semiclassical import build_potential, spectral_gap

    pot_block = _require(cfg, "potential", dict)
    preset = _require(pot_block, "preset", str, "potential")
    lambdas = _require(cfg, "lambdas", list)
    if not lambdas:
        raise SchemaError("'lambdas' must be a non-empty list")
    for lam in lambdas:
        _positive(lam, "lambda")
    realization = cfg.get("realization", "divergence")
    if realization not in ("divergence", "schrodinger"):
        raise SchemaError("realization must be divergence|schrodinger")
    tol = _positive(cfg.get("tolerance", 0.1), "tolerance")
    try:
        pot = build_potential(preset, N=int(pot_block.get("N", 1)),
                              diag=pot_block.get("diag"),
                              coeffs=pot_block.get("coeffs"))
    except ValueError as exc:
        raise SchemaError(f"potential: {exc}")
    rows = []
    for lam in lambdas:
        res = spectral_gap(pot, float(lam), realization=realization)
        target = pot.sigma1
        rows.append({"potential": pot.name, "N": pot.N, "lambda": lam,
                     "L": res.L, "h": res.h, "e2": res.e2,
                     "e2_over_lambda": res.e2_over_lambda,
                     "sigma1": target, "realization": realization,
                     "pass": abs(res.e2_over_lambda - target)
                     <= tol * max(target, 1e-12)})
    cols = ["potential", "N", "lambda", "L", "h", "e2", "e2_over_lambda",
            "sigma1", "realization", "pass"]
    return cols, rows


def run_simulate(cfg, seed):
    from .diffusion import simulate_radial_pair, empirical_tail

    profile = _build_profile_from(_require(cfg, "profile", dict),
                                  "profile")
    lambdas = _require(cfg, "lambdas", list)
    for lam in lambdas:
        _positive(lam, "lambda")
    n = int(cfg.get("n", 3))
    m = int(_positive(cfg.get("m", 2000), "m"))
    paths = int(_positive(cfg.get("paths", 10000), "paths"))
    d0 = _positive(cfg.get("z0_dist", 2.0), "z0_dist")
    rg = cfg.get("r_grid", {"start": d0 + 1.2, "stop": d0 + 1.6,
                            "num": 9})
    r_grid = np.linspace(_positive(rg.get("start"), "r_grid.start"),
                         _positive(rg.get("stop"), "r_grid.stop"),
                         int(_positive(rg.get("num", 9), "r_grid.num")))
    rows = []
    for lam in lambdas:
        ens = simulate_radial_pair(profile, n, float(lam), d0, m, paths,
                                   seed)
        tail = empirical_tail(ens, r_grid)
        rows.append({"profile": profile.preset, "lambda": lam, "n": n,
                     "m": m, "paths": paths,
                     "flagged": int(ens.flagged.sum()),
                     "dominance_margin": ens.dominance_margin,
                     "dominance_ok": ens.dominance_ok(),
                     "slope_vs_r2": tail["slope_vs_r2"],
                     "C2": tail["C2"],
                     "pass": ens.dominance_ok()
                     and tail["slope_vs_r2"] < 0})
    cols = ["profile", "lambda", "n", "m", "paths", "flagged",
            "dominance_margin", "dominance_ok", "slope_vs_r2", "C2",
            "pass"]
    return cols, rows


def run_bounds(cfg, seed):
    from .diffusion import LowerBoundInputs, gap_lower_bound

    rows = []
    for i, case in enumerate(cfg.get("cases", [])):
        a = _positive(_require(case, "alpha", (int, float),
                               f"cases[{i}]"), "alpha")
        b = _positive(_require(case, "beta", (int, float),
                               f"cases[{i}]"), "beta")
        r0 = _positive(_require(case, "r0", (int, float),
                                f"cases[{i}]"), "r0")
        bound = gap_lower_bound(LowerBoundInputs(a, b, r0))
        rows.append({"lambda": "", "alpha": a, "beta": b, "r0": r0,
                     "bound": bound, "bound_over_lambda": "",
                     "limit": "", "pass": True})
    sweep = cfg.get("sweep")
    if sweep is not None:
        C1 = _positive(_require(sweep, "C1", (int, float), "sweep"), "C1")
        C2 = _positive(_require(sweep, "C2", (int, float), "sweep"), "C2")
        r0 = _positive(_require(sweep, "r0", (int, float), "sweep"), "r0")
        limit = 1.0 / (32.0 * C1 * r0 * r0)
        tol = _positive(sweep.get("tolerance", 0.01), "sweep.tolerance")
        for lam in _require(sweep, "lambdas", list, "sweep"):
            lam = _positive(lam, "sweep.lambda")
            bound = gap_lower_bound(
                LowerBoundInputs(C1 / lam, C2 * lam, r0))
            ratio = bound / lam
            rows.append({"lambda": lam, "alpha": C1 / lam,
                         "beta": C2 * lam, "r0": r0, "bound": bound,
                         "bound_over_lambda": ratio, "limit": limit,
                         "pass": abs(ratio - limit) <= tol * limit
                         or lam < 1e6})
    if not rows:
        raise SchemaError("bounds config needs 'cases' and/or 'sweep'")
    cols = ["lambda", "alpha", "beta", "r0", "bound",
            "bound_over_lambda", "limit", "pass"]
    return cols, rows


def run_kernel_asymptotics(cfg, seed):
    from .radial import h3_kernel_asymptotics, h3_normalization

    t_list = _require(cfg, "t_list", list)
    r_list = _require(cfg, "r_list", list)
    for v in list(t_list) + list(r_list):
        _positive(v, "t/r value")
    tol = _positive(cfg.get("normalization_tolerance", 1e-8),
                    "normalization_tolerance")
    rows = []
    for t in t_list:
        norm_err = abs(h3_normalization(float(t)) - 1.0)
        for rec in h3_kernel_asymptotics([t], r_list):
            rec = dict(rec)
            rec["normalization_error"] = norm_err
            rec["pass"] = norm_err < tol
            rows.append(rec)
    cols = ["t", "r", "grad_resid", "hess_rad_resid", "hess_tan_resid",
            "normalization_error", "pass"]
    return cols, rows


_RUNNERS = {
    "sigma1": run_sigma1,
    "identities": run_identities,
    "semiclassical": run_semiclassical,
    "simulate": run_simulate,
    "bounds": run_bounds,
    "kernel_asymptotics": run_kernel_asymptotics,
}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    p = argparse.ArgumentParser(
        prog="gaplab",
        description="spectral-gap laboratory experiment runner")
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=".")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--strict", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _limit_threads()
    try:
        cfg = load_config(args.config)
        if cfg.get("kind", args.kind) != args.kind:
            raise SchemaError(
                f"config kind '{cfg.get('kind')}' does not match "
                f"subcommand '{args.kind}'")
        seed = args.seed if args.seed is not None else int(
            cfg.get("seed", 0))
        if seed < 0:
            raise SchemaError("seed must be nonnegative")
        digest = config_digest(cfg)
        runner = _RUNNERS[args.kind]
        cols, rows = runner(cfg, seed)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError,
            ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / f"{args.kind}.csv", args.kind, digest, seed,
                  cols, rows)
    except OSError as exc:
        print(f"cannot write artifacts: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    failed = [r for r in rows if not r.get("pass", True)]
    print(f"{args.kind}: {len(rows)} rows, {len(failed)} failed "
          f"tolerance, artifact {out_dir / (args.kind + '.csv')}")
    if failed and args.strict:
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
