"""Data reductions of the scattering map.

* Boundary data on the sphere |x| = R: entry/exit points, velocities and
  crossing times of a scattering trajectory.
* The deflection function from the first component of the map on the
  planar family x_- = (q/|v|) e1, v_- = |v| e2.  The outgoing direction is
  v_+ = |v| (cos(S - pi/2), sin(S - pi/2)) with S = k q g(q) the swept
  polar angle (S = pi for the free field), so the angle of v_+ fixes S
  only modulo 2 pi; S is unwrapped by continuity from large q, where
  S -> pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .dynamics import (DEFAULT_TOL, EnergyContext, energy_threshold, integrate, nontrapping_constants,
                       scattering_map, shoot_from_minus_infinity)
from .fields import FieldModel
from .radial import DeflectionCurve, impact_setup

__all__ = [
    "BoundaryDatum",
    "AngleRecord",
    "extract_boundary_data",
    "sphere_crossings",
    "reintegrate_boundary",
    "write_boundary_csv",
    "map_samples",
    "deflection_from_map",
]


@dataclass(frozen=True)
class BoundaryDatum:
    """Entry (q0, k0) and exit (q, k) of a trajectory on the sphere of radius R."""

    q0: np.ndarray
    q: np.ndarray
    k0: np.ndarray
    k: np.ndarray
    t_minus: float
    t_plus: float
    R: float
    energy_residual: float = 0.0

    @property
    def s(self) -> float:
        """Transit time t_+ - t_-."""
        return self.t_plus - self.t_minus

    def row(self) -> np.ndarray:
        return np.concatenate([self.q0, self.q, self.k0, self.k, [self.t_minus, self.t_plus]])


def extract_boundary_data(model: FieldModel, ctx: EnergyContext, v_minus, x_minus, R: float,
                          tol: float = DEFAULT_TOL, *, check_threshold: bool = True,
                          n_certify: int = 64) -> BoundaryDatum | None:
    """First entry into and last exit from the ball of radius R.

    Returns ``None`` when the trajectory misses the ball.  Crossings are
    roots of |x(t)|^2 - R^2 on the dense output (see ``sphere_crossings``),
    classified by the sign of x.v.  A second visit to the ball raises
    ``RuntimeError``.
    """
    if model.radial_radius is not None and R < model.radial_radius:
        raise ValueError(f"R = {R} is smaller than the model's radial radius {model.radial_radius}")
    if check_threshold:
        E1 = energy_threshold(model.bounds, model.n, R, ctx.c)
        if not ctx.E >= E1:
            rep = nontrapping_constants(ctx, model.bounds, model.n)
            raise ValueError(f"energy below admissible threshold E_1 = {E1:.6g} "
                             f"(C_E = {rep.C_E:.6g}, R_E = {rep.R_E:.6g}, R = {R})")
    n = model.n
    traj, _, _ = shoot_from_minus_infinity(model, ctx, v_minus, x_minus, tol)
    x_end = traj.position(traj.t[-1])
    if x_end @ x_end <= R * R:
        raise RuntimeError("run ended inside the ball: extend the escape tail")
    times = sphere_crossings(traj, R)
    if len(times) == 0:
        return None
    states = traj.state(times)
    radial = np.einsum("ij,ij->i", states[:, :n], ctx.velocity(states[:, n:]))
    if len(times) != 2 or not (radial[0] < 0 < radial[1]):
        raise RuntimeError(f"multiple entry episodes ({len(times)} sphere crossings): "
                           "energy below the nontrapping threshold")
    t_m, t_p = float(times[0]), float(times[1])
    inner = traj.position(np.linspace(t_m, t_p, n_certify + 2)[1:-1])
    if np.any(np.einsum("ij,ij->i", inner, inner) >= R * R):
        raise RuntimeError("trajectory leaves the ball between entry and exit")
    ym, yp = states[0], states[1]
    res = float(np.max(np.abs(traj.energy_residual)))
    return BoundaryDatum(q0=ym[:n].copy(), q=yp[:n].copy(), k0=ctx.velocity(ym[n:]),
                         k=ctx.velocity(yp[n:]), t_minus=t_m, t_plus=t_p, R=R, energy_residual=res)


def sphere_crossings(traj, R: float, resolution: float = 0.05) -> np.ndarray:
    """Roots of |x(t)|^2 - R^2 on the dense output, in increasing time.

    Steps that may come within R of the origin are subdivided so that
    consecutive scan points are at most ``resolution * R`` apart along the
    path; each bracketed sign change is then refined by Brent's method.
    """
    t = traj.t
    x = traj.positions()
    r = np.linalg.norm(x, axis=1)
    vmax = 1.5 * float(np.max(np.linalg.norm(traj.velocities(), axis=1)))
    scan = [t[:1]]
    for ta, tb, ra, rb in zip(t[:-1], t[1:], r[:-1], r[1:]):
        m = 1
        if min(ra, rb) - vmax * (tb - ta) < R:
            m = int(min(math.ceil(vmax * (tb - ta) / (resolution * R)), 10**5)) + 1
        scan.append(np.linspace(ta, tb, m + 1)[1:])
    ts = np.concatenate(scan)
    xs = traj.position(ts)
    f = np.einsum("ij,ij->i", xs, xs) - R * R
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]

    def h(s):
        y = traj.position(s)
        return float(y @ y) - R * R

    return np.array([brentq(h, ts[i], ts[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps) for i in idx])


def reintegrate_boundary(model: FieldModel, ctx: EnergyContext, datum: BoundaryDatum,
                         tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """Integrate from (q0, k0) over the transit time; return position and velocity errors at exit."""
    # the crossing state is rounded; put it back on the energy shell
    k0 = datum.k0 * (float(ctx.speed_at(model.V(datum.q0))) / np.linalg.norm(datum.k0))
    traj = integrate(model, ctx, datum.q0, k0, (0.0, datum.s), tol)
    x, v = traj.position(datum.s), traj.velocity(datum.s)
    return float(np.linalg.norm(x - datum.q)), float(np.linalg.norm(v - datum.k))


def write_boundary_csv(path, data: Sequence[BoundaryDatum], ctx: EnergyContext, R: float,
                       header: dict | None = None):
    from .io import write_csv
    n = len(data[0].q0) if data else 2
    cols = ([f"q0_{i + 1}" for i in range(n)] + [f"q_{i + 1}" for i in range(n)]
            + [f"k0_{i + 1}" for i in range(n)] + [f"k_{i + 1}" for i in range(n)]
            + ["t_minus", "t_plus"])
    rows = np.array([d.row() for d in data]).reshape(len(data), len(cols))
    write_csv(path, cols, rows, {**ctx.describe(), "R": R, **(header or {})})


@dataclass(frozen=True)
class AngleRecord:
    """One sample of the planar family: impact parameter, raw angle of v_+, unwrapped sweep."""

    q: float
    raw_angle: float
    sweep: float = math.nan


def map_samples(model: FieldModel, ctx: EnergyContext, q_values, tol: float = DEFAULT_TOL) -> list[AngleRecord]:
    """Evaluate the first component of the map on x_- = (q/|v|) e1, v_- = |v| e2."""
    out = []
    for q in np.asarray(q_values, dtype=float):
        v_minus, x_minus = impact_setup(ctx, q, model.n)
        asym = scattering_map(model, ctx, v_minus, x_minus, tol)
        out.append(AngleRecord(float(q), math.atan2(asym.v_plus[1], asym.v_plus[0])))
    return out


def unwrap_sweeps(records: Sequence[AngleRecord]) -> list[AngleRecord]:
    """Fix the 2 pi branch of each sweep by continuity, starting from the largest q."""
    recs = sorted(records, key=lambda r: r.q, reverse=True)
    out, prev = [], math.pi
    for i, r in enumerate(recs):
        base = r.raw_angle + math.pi / 2
        S = base + 2 * math.pi * round((prev - base) / (2 * math.pi))
        if abs(S - prev) > math.pi / 2:
            where = "the largest q (sweep far from pi)" if i == 0 else f"q = {r.q:.6g}"
            raise ValueError(f"angle jump {S - prev:.3g} > pi/2 at {where}: grid too coarse for unwrapping")
        out.append(AngleRecord(r.q, r.raw_angle, S))
        prev = S
    return out[::-1]


def deflection_from_map(records: Sequence[AngleRecord], ctx: EnergyContext, alpha: float,
                        beta: float | None = None, meta: dict | None = None) -> DeflectionCurve:
    """DeflectionCurve from map samples: g = S/(k q) after unwrapping."""
    recs = unwrap_sweeps(records)
    q = np.array([r.q for r in recs])
    S = np.array([r.sweep for r in recs])
    return DeflectionCurve(q, S - math.pi, ctx, alpha, beta=beta, meta={"source": "map", **(meta or {})})
