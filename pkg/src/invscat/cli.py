"""Batch driver: ``python3 -m invscat {simulate,deflect,reconstruct,roundtrip}``.

Every run reads one JSON config (see ``invscat.config``) and writes CSV/JSON
files into ``--out``.  Files are staged in a scratch directory and moved
into place only when the command finishes, so a failing run leaves no
partial output.  Each file carries the config hash and the constants block
(E, c, beta, beta', C_E, R_E, E_1).

Exit codes: 0 pass, 1 validation error, 2 numerical failure, 3 acceptance
failure (``roundtrip`` only).
"""
from __future__ import annotations

import argparse
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import inversion, radial, scatmap
from .config import ConfigError, RunConfig, load_config
from .dynamics import energy_threshold, nontrapping_constants, scattering_map
from .io import write_json

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3


class Staging:
    """Collect outputs in a scratch directory; publish them only on success."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out.parent))
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.tmp / name

    def commit(self):
        self.out.mkdir(parents=True, exist_ok=True)
        for name in self.files:
            os.replace(self.tmp / name, self.out / name)
        shutil.rmtree(self.tmp, ignore_errors=True)

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def constants(cfg: RunConfig, rc: radial.RadialScatteringContext | None = None) -> dict:
    ctx, model = cfg.ctx, cfg.model()
    rep = nontrapping_constants(ctx, model.bounds, model.n)
    out = {**ctx.describe(), "C_E": rep.C_E, "R_E": rep.R_E,
           "E_1": energy_threshold(model.bounds, model.n, cfg.R, ctx.c),
           "beta0": model.bounds.beta0, "beta1": model.bounds.beta1, "alpha": model.bounds.alpha}
    if rc is None:
        try:
            rc = _radial_context(cfg)
        except ValueError:
            rc = None
    out["beta"] = rc.beta if rc else None
    out["beta_prime"] = rc.beta_prime if rc else None
    return out


def _radial_context(cfg: RunConfig) -> radial.RadialScatteringContext:
    return radial.RadialScatteringContext.build(cfg.ctx, cfg.profile, decades=float(cfg.grids["q_decades"]))


def _header(cfg: RunConfig, consts: dict, **extra) -> dict:
    return {"config_hash": cfg.hash, **consts, **extra}


# ---------------------------------------------------------------- simulate

def _simulation_inputs(cfg: RunConfig):
    ctx, n = cfg.ctx, int(cfg.raw["n"])
    inputs = [radial.impact_setup(ctx, q, n) for q in cfg.raw["simulate"]["impact_parameters"]]
    rng = np.random.default_rng(int(cfg.raw["seed"]))
    for _ in range(int(cfg.raw["simulate"].get("random", 0))):
        u = rng.normal(size=n)
        u /= np.linalg.norm(u)
        w = rng.normal(size=n)
        w -= (w @ u) * u
        w /= np.linalg.norm(w)
        inputs.append((ctx.speed * u, rng.uniform(-1.5, 1.5) * cfg.R * w))
    return inputs


def cmd_simulate(cfg: RunConfig, stage: Staging) -> int:
    ctx, model = cfg.ctx, cfg.model()
    consts = constants(cfg)
    tol = float(cfg.tolerances["ode"])
    records, boundary = [], []
    for i, (v_minus, x_minus) in enumerate(_simulation_inputs(cfg)):
        asym = scattering_map(model, ctx, v_minus, x_minus, tol, keep_trajectory=True)
        traj = asym.trajectory
        traj.to_csv(stage.path(f"trajectory_{i:03d}.csv"), header=_header(cfg, consts, index=i))
        # q = -x_-.v_-^perp; the conserved quantity is the (1, 2) component of x ^ p
        q = float(x_minus[0] * v_minus[1] - x_minus[1] * v_minus[0])
        p_minus = ctx.momentum(v_minus)
        L0 = float(x_minus[0] * p_minus[1] - x_minus[1] * p_minus[0])
        rec = {"index": i, **asym.as_dict(), "max_energy_drift": traj.max_energy_drift,
               "impact_parameter": q, "t_start": asym.t_start}
        if model.magnetic is None:
            rec["angular_momentum_residual"] = float(np.max(np.abs(traj.angular_momentum() - L0)))
        records.append(rec)
        if cfg.raw["simulate"].get("boundary"):
            d = scatmap.extract_boundary_data(model, ctx, v_minus, x_minus, cfg.R, tol)
            if d is not None:
                boundary.append(d)
            rec["boundary"] = "misses ball" if d is None else "hit"
    write_json(stage.path("asymptotes.json"), _header(cfg, consts, records=records))
    if cfg.raw["simulate"].get("boundary"):
        scatmap.write_boundary_csv(stage.path("boundary.csv"), boundary, ctx, cfg.R, _header(cfg, consts))
    return EXIT_OK


# ---------------------------------------------------------------- deflect

def _curve(cfg: RunConfig, rc, source: str) -> radial.DeflectionCurve:
    g = cfg.grids
    if source == "quadrature":
        return radial.sample_deflection(rc, int(g["q_per_decade"]), float(g["q_decades"]))
    q = radial.q_grid(rc.beta, int(g["q_per_decade"]), float(g["q_decades"]))
    recs = scatmap.map_samples(cfg.model(), cfg.ctx, q, float(cfg.tolerances["ode"]))
    return scatmap.deflection_from_map(recs, cfg.ctx, rc.bounds.alpha, beta=rc.beta,
                                       meta={"beta0": rc.bounds.beta0, "beta1": rc.bounds.beta1,
                                             "R": rc.profile.R, "beta_prime": rc.beta_prime})


def cmd_deflect(cfg: RunConfig, stage: Staging, source: str = "quadrature") -> int:
    rc = _radial_context(cfg)
    curve = _curve(cfg, rc, source)
    curve.to_csv(stage.path("deflection.csv"), extra=_header(cfg, constants(cfg, rc), source=source))
    return EXIT_OK


# ---------------------------------------------------------------- reconstruct

def _load_curve(cfg: RunConfig, rc, path) -> radial.DeflectionCurve:
    curve = radial.DeflectionCurve.from_csv(path)
    ctx = cfg.ctx
    if curve.ctx.regime != ctx.regime or not math.isclose(curve.ctx.E, ctx.E, rel_tol=1e-12):
        raise ConfigError(f"deflection CSV is for {curve.ctx.regime} E={curve.ctx.E}, config has "
                          f"{ctx.regime} E={ctx.E}", str(path))
    if ctx.relativistic and not math.isclose(curve.ctx.c, ctx.c, rel_tol=1e-12):
        raise ConfigError(f"deflection CSV has c={curve.ctx.c}, config has c={ctx.c}", str(path))
    if curve.q_min > rc.beta * (1 + 1e-9) or curve.q_max < rc.q_max * (1 - 1e-9):
        raise ConfigError(f"deflection CSV covers q in [{curve.q_min:.10g}, {curve.q_max:.10g}]; "
                          f"required range [beta, q_max] = [{rc.beta:.10g}, {rc.q_max:.10g}]", str(path))
    return curve


def _reconstruct(cfg: RunConfig, rc, curve):
    g = cfg.grids
    sigma = inversion.sigma_grid(rc.beta, int(g["sigma_n"]))
    table = inversion.abel_transform(curve, sigma)
    chi = inversion.reconstruct_chi(table)
    res = inversion.reconstruct_W(chi, beta_prime=rc.beta_prime, s_max_factor=float(g["s_max_factor"]),
                                  n=int(g["s_n"]), profile=cfg.profile)
    return table, chi, res


def cmd_reconstruct(cfg: RunConfig, stage: Staging, deflection=None) -> int:
    rc = _radial_context(cfg)
    curve = radial.sample_deflection(rc, int(cfg.grids["q_per_decade"]), float(cfg.grids["q_decades"])) \
        if deflection is None else _load_curve(cfg, rc, deflection)
    _, _, res = _reconstruct(cfg, rc, curve)
    consts = constants(cfg, rc)
    res.to_csv(stage.path("reconstruction.csv"), _header(cfg, consts))
    write_json(stage.path("summary.json"), _header(cfg, consts, **res.summary()))
    return EXIT_OK


# ---------------------------------------------------------------- roundtrip

def _check(name: str, value: float, limit: float) -> dict:
    ok = bool(np.isfinite(value) and value <= limit)
    return {"name": name, "value": float(value), "limit": float(limit), "pass": ok}


def cmd_roundtrip(cfg: RunConfig, stage: Staging) -> int:
    ctx, model = cfg.ctx, cfg.model()
    tol = cfg.tolerances
    consts = constants(cfg)
    checks, notes = [], []
    if not ctx.E >= consts["E_1"]:
        msg = (f"energy below admissible threshold: E = {ctx.E:.6g} < E_1 = {consts['E_1']:.6g} "
               f"(C_E = {consts['C_E']:.6g}, R_E = {consts['R_E']:.6g}, R = {cfg.R:.6g})")
        write_json(stage.path("report.json"), _header(cfg, consts, status="FAIL", reason=msg, checks=[]))
        print(f"FAIL: {msg}")
        return EXIT_ACCEPTANCE
    rc = _radial_context(cfg)
    consts = constants(cfg, rc)
    curve = radial.sample_deflection(rc, int(cfg.grids["q_per_decade"]), float(cfg.grids["q_decades"]))
    curve.to_csv(stage.path("deflection.csv"), extra=_header(cfg, consts, source="quadrature"))
    # ODE cross-check at a few impact parameters
    qs = rc.beta * np.array([1.0, 2.0, 4.0, 10.0])
    cross = max(abs(radial.deflection_ode(rc, q, float(tol["ode"]), model) - curve(q)) / curve(q) for q in qs)
    checks.append(_check("deflection quadrature vs ODE (rel)", cross, tol["cross"]))
    table, chi, res = _reconstruct(cfg, rc, curve)
    cons = inversion.consistency_check_H(table, cfg.profile, ctx)
    checks.append(_check("Abel identity for H (rel)", cons["H"], tol["abel"]))
    checks.append(_check("Abel identity for dH/dsigma (rel)", cons["dH"], tol["abel"]))
    summary = res.summary()
    checks.append(_check("sup relative error of W on (beta', 5 beta')", summary["sup_rel_err"]
                         if np.any(res.W_true) else summary["sup_abs_err"], tol["inversion"]))
    if ctx.relativistic:
        # the same kinetic energy without relativity: chi differs by O(E_kin / c^2)
        nr_cfg = cfg.with_overrides(regime="nonrel", c=None, E=ctx.E - ctx.c**2)
        rc_nr = _radial_context(nr_cfg)
        _, chi_nr, _ = _reconstruct(nr_cfg, rc_nr, radial.sample_deflection(
            rc_nr, int(cfg.grids["q_per_decade"]), float(cfg.grids["q_decades"])))
        s = chi.sigma[chi.sigma <= chi_nr.sigma[-1]]
        gap = float(np.max(np.abs(chi(s) / chi_nr(s) - 1)))
        ekin = ctx.E - ctx.c**2
        checks.append(_check("chi gap to the nonrelativistic limit", gap, 10 * ekin / ctx.c**2))
        notes.append("limit bound is 10 E_kin/c^2")
    res.to_csv(stage.path("reconstruction.csv"), _header(cfg, consts))
    write_json(stage.path("summary.json"), _header(cfg, consts, **summary))
    status = "PASS" if all(c["pass"] for c in checks) else "FAIL"
    write_json(stage.path("report.json"), _header(cfg, consts, status=status, checks=checks, notes=notes))
    for c in checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']:.3e} (limit {c['limit']:.1e})")
    print(status)
    return EXIT_OK if status == "PASS" else EXIT_ACCEPTANCE


# ---------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invscat", description="Fixed-energy scattering: simulate, deflect, invert.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("simulate", "integrate scattering trajectories"),
                           ("deflect", "tabulate the deflection function g(q)"),
                           ("reconstruct", "recover W near infinity from g"),
                           ("roundtrip", "profile -> g -> W with pass/fail checks")]:
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--regime", choices=["nonrel", "rel"], help="override the config regime")
        if name == "deflect":
            s.add_argument("--source", choices=["quadrature", "map"], default="quadrature")
        if name == "reconstruct":
            s.add_argument("--deflection", help="DeflectionCurve CSV (default: compute from the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.regime and args.regime != cfg.regime:
            cfg = cfg.with_overrides(regime=args.regime)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    stage = Staging(Path(args.out))
    try:
        if args.command == "simulate":
            code = cmd_simulate(cfg, stage)
        elif args.command == "deflect":
            code = cmd_deflect(cfg, stage, args.source)
        elif args.command == "reconstruct":
            code = cmd_reconstruct(cfg, stage, args.deflection)
        else:
            code = cmd_roundtrip(cfg, stage)
    except ValueError as exc:
        stage.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, RuntimeError, FloatingPointError) as exc:
        stage.discard()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    return code


if __name__ == "__main__":
    sys.exit(main())
