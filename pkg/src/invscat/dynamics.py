"""Newton and relativistic Newton dynamics, free asymptotes and the scattering map.

The nonrelativistic state is ``(x, v)``; the relativistic state is
``(x, p)`` with ``v = p / sqrt(1 + |p|^2/c^2)``, which keeps the right-hand
side free of the singular factor (1 - |v|^2/c^2)^(-3/2).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853, OdeSolution, quad_vec
from scipy.optimize import brentq

from .fields import FieldModel, ShortRangeBounds, eval_force

__all__ = [
    "EnergyContext",
    "Trajectory",
    "AsymptoteData",
    "NontrappingReport",
    "integrate",
    "start_time",
    "shoot_from_minus_infinity",
    "fit_outgoing_asymptote",
    "scattering_map",
    "nontrapping_constants",
    "energy_threshold",
    "verify_escape",
]

DEFAULT_TOL = 1e-10
# step cap relative to the travel time to the interaction region
STEP_FRACTION = 0.5
T_START_CAP = 1e6


@dataclass(frozen=True)
class EnergyContext:
    """Fixed-energy bundle.  ``c is None`` selects the nonrelativistic regime."""

    E: float
    c: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.E):
            raise ValueError("energy must be finite")
        if self.c is None:
            if not self.E > 0:
                raise ValueError(f"nonrelativistic energy must be positive, got E={self.E}")
        else:
            if not self.c > 0:
                raise ValueError("light speed must be positive")
            if not self.E > self.c**2:
                raise ValueError(f"relativistic energy must exceed c^2={self.c**2}, got E={self.E}")

    @property
    def relativistic(self) -> bool:
        return self.c is not None

    @property
    def regime(self) -> str:
        return "rel" if self.relativistic else "nonrel"

    @property
    def kinetic_at_infinity(self) -> float:
        return self.E - self.c**2 if self.relativistic else self.E

    @property
    def speed(self) -> float:
        """|v_-| at infinity: sqrt(2E), or c sqrt(1 - c^4/E^2)."""
        return self.speed_at(0.0)

    def speed_at(self, V):
        if not self.relativistic:
            return np.sqrt(2.0 * (self.E - V))
        c2 = self.c**2
        e = self.E - V
        return self.c * np.sqrt((e - c2) * (e + c2)) / e

    @property
    def angular_factor(self) -> float:
        """The factor k with k q g(q) equal to the swept polar angle (1 or E)."""
        return self.E if self.relativistic else 1.0

    @property
    def magnetic_scale(self) -> float:
        return 1.0 / self.c if self.relativistic else 1.0

    def momentum(self, v):
        v = np.asarray(v, dtype=float)
        if not self.relativistic:
            return v
        s2 = np.sum(v * v, axis=-1, keepdims=True) / self.c**2
        if np.any(s2 >= 1):
            raise ValueError("relativistic velocity must satisfy |v| < c")
        return v / np.sqrt(1.0 - s2)

    def velocity(self, p):
        p = np.asarray(p, dtype=float)
        if not self.relativistic:
            return p
        return p / np.sqrt(1.0 + np.sum(p * p, axis=-1, keepdims=True) / self.c**2)

    def kinetic(self, w):
        """Kinetic energy from the second half of the state (v or p)."""
        w = np.asarray(w, dtype=float)
        w2 = np.sum(w * w, axis=-1)
        if not self.relativistic:
            return 0.5 * w2
        gamma = np.sqrt(1.0 + w2 / self.c**2)
        return w2 / (gamma + 1.0)

    def velocity_jacobian(self, p):
        p = np.asarray(p, dtype=float)
        n = p.shape[-1]
        if not self.relativistic:
            return np.eye(n)
        g2 = 1.0 + p @ p / self.c**2
        g = math.sqrt(g2)
        return (np.eye(n) - np.outer(p, p) / (self.c**2 * g2)) / g

    def describe(self) -> dict:
        return {"regime": self.regime, "E": self.E, "c": self.c}


@dataclass
class Trajectory:
    """Dense solution of the equation of motion on ``[t[0], t[-1]]``."""

    model: FieldModel
    ctx: EnergyContext
    t: np.ndarray
    y: np.ndarray
    sol: Callable
    energy_residual: np.ndarray
    nfev: int = 0
    t_events: list = field(default_factory=list)
    y_events: list = field(default_factory=list)
    flagged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.model.n

    def state(self, t):
        return self.sol(t).T if np.ndim(t) else self.sol(t)

    def position(self, t):
        return self.state(t)[..., : self.n]

    def velocity(self, t):
        return self.ctx.velocity(self.state(t)[..., self.n:])

    def positions(self):
        return self.y[:, : self.n]

    def velocities(self):
        return self.ctx.velocity(self.y[:, self.n:])

    @property
    def max_energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy_residual)))

    def angular_momentum(self, t=None):
        """x1 v2 - x2 v1 of the (x, v) or (x, p) state at nodes or at times ``t``."""
        y = self.y if t is None else self.state(t)
        x, w = y[..., : self.n], y[..., self.n:]
        return x[..., 0] * w[..., 1] - x[..., 1] * w[..., 0]

    def to_csv(self, path, times=None, header: dict | None = None):
        """Write columns t, x_1..x_n, v_1..v_n, energy_residual."""
        if times is None:
            t, y = self.t, self.y
            res = self.energy_residual
        else:
            t = np.asarray(times, dtype=float)
            y = self.state(t)
            res = _energy_residual(self.model, self.ctx, y)
        x = y[:, : self.n]
        v = self.ctx.velocity(y[:, self.n:])
        cols = (["t"] + [f"x{i + 1}" for i in range(self.n)]
                + [f"v{i + 1}" for i in range(self.n)] + ["energy_residual"])
        rows = np.column_stack([t, x, v, res])
        from .io import write_csv
        write_csv(path, cols, rows, header or {})


def _energy_residual(model: FieldModel, ctx: EnergyContext, y: np.ndarray) -> np.ndarray:
    n = model.n
    y = np.atleast_2d(y)
    e = ctx.kinetic(y[:, n:]) + model.V(y[:, :n])
    return (e - ctx.kinetic_at_infinity) / ctx.kinetic_at_infinity


def _rhs(model: FieldModel, ctx: EnergyContext):
    n = model.n
    scale = ctx.magnetic_scale
    free = model.is_free

    if free:
        def f(t, y):
            return np.concatenate([ctx.velocity(y[n:]), np.zeros(n)])
        return f

    def f(t, y):
        x = y[:n]
        v = ctx.velocity(y[n:])
        return np.concatenate([v, eval_force(model, x, v, scale)])

    return f


def integrate(model: FieldModel, ctx: EnergyContext, x0, v0, t_span, tol: float = DEFAULT_TOL,
              events: Sequence[Callable] | None = None, check_energy: bool = True) -> Trajectory:
    """Integrate the equation of motion from ``(x0, v0)`` with DOP853 dense output.

    ``v0`` is always a velocity; the relativistic state carries the momentum.
    Each step is capped at ``STEP_FRACTION * max(|x|, L) / |v|`` with L the
    radial radius (or 1): far out the force is negligible and the error
    estimate alone would let one step jump across the whole interaction
    region.  Steps never straddle a seam of the field (``model.seams``,
    where it is only C^2): the stepper stops on the seam and restarts.  ``events`` follow the ``solve_ivp`` conventions (``terminal``,
    ``direction``).  Raises ``RuntimeError`` if the step size underflows,
    and flags (with a warning) energy drift above 100 tol.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = model.n
    if x0.shape != (n,) or v0.shape != (n,):
        raise ValueError(f"state must be a pair of {n}-vectors")
    w0 = ctx.momentum(v0)
    y0 = np.concatenate([x0, w0])
    if check_energy:
        res0 = float(_energy_residual(model, ctx, y0)[0])
        if abs(res0) > 1e-12:
            raise ValueError(f"initial state has energy residual {res0:.3e}; expected energy {ctx.E}")
    t0, t1 = map(float, t_span)
    L = model.radial_radius or 1.0
    rhs = _rhs(model, ctx)
    seams2 = np.array(model.seams) ** 2
    events = list(events or [])
    g_old = [float(ev(t0, y0)) for ev in events]
    found = [[] for _ in events]
    ts, ys, interps = [t0], [y0], []
    nfev = 0

    def accept(ta, tb, yb, dense) -> bool:
        """Record one step and its event roots; True if a terminal event fired."""
        t_end, y_end, stop = tb, yb, False
        hits = []
        for i, ev in enumerate(events):
            g_new = float(ev(tb, yb))
            ga = g_old[i]
            g_old[i] = g_new
            if not np.sign(ga) != np.sign(g_new) or ga == 0:
                continue
            if getattr(ev, "direction", 0) * (g_new - ga) < 0:
                continue
            root = brentq(lambda s: float(ev(s, dense(s))), ta, tb, xtol=1e-13 * max(1.0, abs(tb)),
                          rtol=4 * np.finfo(float).eps)
            hits.append((root, i))
        hits.sort(key=lambda h: (tb - ta) * h[0])
        for root, i in hits:
            found[i].append(root)
            if getattr(events[i], "terminal", False):
                t_end, y_end, stop = root, dense(root), True
                break
        ts.append(t_end)
        ys.append(y_end)
        interps.append(dense)
        return stop

    def run(ta, ya, tb, watch: bool):
        """Step from ta to tb.  Returns ("done" | "stop", t, y), or ("seam", t_step, y_step, t_seam)
        when a step crosses a seam: that step is discarded."""
        nonlocal nfev
        solver = DOP853(rhs, ta, ya, tb, rtol=tol, atol=tol * 1e-3)
        first = True
        try:
            while solver.status == "running":
                y = solver.y
                speed = float(np.linalg.norm(ctx.velocity(y[n:])))
                if speed > 0:
                    solver.max_step = STEP_FRACTION * max(float(np.linalg.norm(y[:n])), L) / speed
                solver.step()
                if solver.status == "failed":
                    raise RuntimeError(f"integration failed at t={solver.t:.6g}: step size underflow")
                t_a, t_b, dense = solver.t_old, solver.t, solver.dense_output()
                if watch and len(seams2):
                    s_a = float(y[:n] @ y[:n]) - seams2
                    s_b = float(solver.y[:n] @ solver.y[:n]) - seams2
                    # a restart sits on its seam; only a sign change away from it counts
                    cross = (np.sign(s_a) != np.sign(s_b)) & ~(first & (np.abs(s_a) <= 1e-9 * seams2))
                    if np.any(cross):
                        t_seam = min(brentq(lambda s, r2=r2: float(dense(s)[:n] @ dense(s)[:n]) - r2,
                                            t_a, t_b, xtol=1e-14 * max(1.0, abs(t_b)))
                                     for r2 in seams2[cross])
                        return "seam", t_a, y, t_seam
                first = False
                if accept(t_a, t_b, solver.y, dense):
                    return "stop", ts[-1], ys[-1]
            return "done", solver.t, solver.y
        finally:
            nfev += solver.nfev

    t, y = t0, y0
    while True:
        out = run(t, y, t1, watch=True)
        if out[0] != "seam":
            break
        # redo the crossing step so that it ends exactly on the seam, then restart there
        _, t_a, y_a, t_seam = out
        out = run(t_a, y_a, t_seam, watch=False)
        if out[0] == "stop":
            break
        t, y = t_seam, out[2]
    sol = OdeSolution(np.array(ts), interps) if interps else (lambda t: np.asarray(y0)[:, None]
                                                              if np.ndim(t) else np.asarray(y0))
    y = np.array(ys)
    res = _energy_residual(model, ctx, y)
    t_events = [np.array(f) for f in found]
    traj = Trajectory(model=model, ctx=ctx, t=np.array(ts), y=y, sol=sol, energy_residual=res,
                      nfev=nfev, t_events=t_events,
                      y_events=[np.array([sol(t) for t in f]).reshape(len(f), 2 * n) for f in found])
    if traj.max_energy_drift > 100 * tol:
        traj.flagged = True
        warnings.warn(f"energy drift {traj.max_energy_drift:.3e} exceeds 100*tol", RuntimeWarning)
    return traj


@dataclass(frozen=True)
class NontrappingReport:
    """Constants of the nontrapping lemma and the escape estimate coefficient.

    Trajectories leaving the ball of radius ``R_E`` satisfy
    ``|x(t)|^2 >= R_E^2 + escape_coefficient (t - T)^2`` afterwards.
    """

    C_E: float
    R_E: float
    escape_coefficient: float
    regime: str
    terms: tuple[float, ...] = ()


def nontrapping_constants(ctx: EnergyContext, bounds: ShortRangeBounds, n: int) -> NontrappingReport:
    b0, b1 = bounds.beta0, bounds.beta1
    E = ctx.E
    if not ctx.relativistic:
        den = (n * b1 + 2 * b0) * (1 + math.sqrt(2 * (E + b0)))
        C = math.inf if den == 0 else 2 * E / den
        terms = (C,)
        coef = E
    else:
        c2 = ctx.c**2
        x = (E - c2) / c2
        core = c2 * ((x / 4 + 1) ** 2 - 1) / (1.5 * x + 1) ** 2
        t1 = math.inf if b0 == 0 else (E - c2) / (2 * b0)
        t2 = math.inf if b1 == 0 else core / (4 * b1 * n)
        C = min(t1, t2)
        terms = (t1, t2)
        coef = 0.5 * core
    R_E = 0.0 if C >= 2 else (2.0 / C) ** (1.0 / bounds.alpha) - 1.0
    return NontrappingReport(C_E=C, R_E=max(R_E, 0.0), escape_coefficient=coef,
                             regime=ctx.regime, terms=terms)


def energy_threshold(bounds: ShortRangeBounds, n: int, R: float, c: float | None = None) -> float:
    """Smallest energy E_1 with R_E <= R, i.e. (1 + R)^-alpha <= C_E / 2.

    Returns ``inf`` when no energy qualifies (relativistic C_E stays bounded).
    """
    target = 2.0 * (1.0 + R) ** (-bounds.alpha)

    def gap(E):
        return nontrapping_constants(EnergyContext(E, c), bounds, n).C_E - target

    lo = (c**2 if c is not None else 0.0)
    span = max(1.0, lo)
    a = lo + 1e-12 * span
    if gap(a) >= 0:
        return a
    b = lo + span
    for _ in range(200):
        if gap(b) >= 0:
            return brentq(gap, a, b, xtol=1e-14 * b, rtol=1e-14)
        a, b = b, lo + 2 * (b - lo)
    return math.inf


def verify_escape(model: FieldModel, ctx: EnergyContext, report: NontrappingReport, x0, v0,
                  horizon: float, tol: float = DEFAULT_TOL, n_samples: int = 400) -> dict:
    """Run a trajectory from inside the ball of radius R_E and test the escape estimate.

    Returns the exit time T, the minimum over sampled t > T of
    (|x|^2 - R_E^2) / (coef (t - T)^2), and the minimum of the second
    derivative of |x|^2/2 while |x| >= R_E (nonrelativistic only).
    """
    RE = report.R_E

    def exit_event(t, y):
        return y[0: model.n] @ y[0: model.n] - RE * RE

    exit_event.direction = 1
    exit_event.terminal = True
    first = integrate(model, ctx, x0, v0, (0.0, horizon), tol, events=[exit_event])
    if not len(first.t_events[0]):
        return {"escaped": False}
    T = float(first.t_events[0][0])
    yT = first.y_events[0][0]
    xT = yT[: model.n]
    vT = ctx.velocity(yT[model.n:])
    # restart exactly on the sphere; rescale the speed so the energy is exact
    vT = vT * (float(ctx.speed_at(model.V(xT))) / np.linalg.norm(vT))
    second = integrate(model, ctx, xT, vT, (0.0, horizon), tol)
    s = np.linspace(0.0, horizon, n_samples + 1)[1:]
    x = second.position(s)
    ratio = (np.sum(x * x, axis=1) - RE**2) / (report.escape_coefficient * s**2)
    out = {"escaped": True, "T": T, "min_ratio": float(ratio.min()), "times": s, "ratio": ratio}
    if not ctx.relativistic:
        v = second.velocity(s)
        f = eval_force(model, x, v)
        idd = np.sum(v * v, axis=1) + np.sum(x * f, axis=1)
        mask = np.linalg.norm(x, axis=1) >= RE
        out["min_Iddot_over_E"] = float(np.min(idd[mask]) / ctx.E) if mask.any() else math.inf
    return out


@dataclass
class AsymptoteData:
    """Free asymptotes x(t) ~ x_- + t v_- (t -> -inf) and x_+ + t v_+ (t -> +inf)."""

    v_minus: np.ndarray
    x_minus: np.ndarray
    v_plus: np.ndarray
    x_plus: np.ndarray
    residual_minus: float
    residual_plus: float
    y_minus_norm: float = 0.0
    t_start: float = 0.0
    trajectory: Trajectory | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "v_minus": self.v_minus.tolist(), "x_minus": self.x_minus.tolist(),
            "v_plus": self.v_plus.tolist(), "x_plus": self.x_plus.tolist(),
            "residual_minus": self.residual_minus, "residual_plus": self.residual_plus,
        }


def _tail_bound_time(prefactor: float, alpha: float, rate: float, tol: float) -> float:
    """Smallest d >= 0 with prefactor (1 + rate d)^-alpha <= tol/10."""
    if prefactor == 0:
        return 0.0
    return max((10.0 * prefactor / tol) ** (1.0 / alpha) - 1.0, 0.0) / rate


def start_time(model: FieldModel, ctx: EnergyContext, x_minus, tol: float = 1e-9) -> float:
    """|t_0| for shooting: the a priori tail bound of the force falls below tol/10."""
    b = model.bounds
    s = ctx.speed
    pref = model.n * b.beta1 * (1 + s) / ((b.alpha - 1) * s)
    t = _tail_bound_time(pref, b.alpha, s / 2, tol)
    reach = (np.linalg.norm(x_minus) + (model.radial_radius or 1.0) + 1.0) / s
    return float(min(max(t, 10 * reach), T_START_CAP))


def _line_integrals(model: FieldModel, ctx: EnergyContext, x_start, v, direction: float):
    """Integrals of F and u F along x_start + direction * u v, u in [0, inf)."""
    n = model.n
    if model.is_free:
        return np.zeros(n), np.zeros(n)
    scale = ctx.magnetic_scale

    def g(u):
        x = x_start + direction * u * v
        f = eval_force(model, x, v, scale)
        return np.concatenate([f, u * f])

    val, _ = quad_vec(g, 0.0, np.inf, epsabs=1e-15, epsrel=1e-11, limit=400)
    return val[:n], val[n:]


def shoot_from_minus_infinity(model: FieldModel, ctx: EnergyContext, v_minus, x_minus,
                              tol: float = DEFAULT_TOL, *, t_start: float | None = None,
                              shoot_tol: float = 1e-9, events: Sequence[Callable] | None = None,
                              t_final: float | None = None) -> tuple[Trajectory, float, float]:
    """Start on the incoming asymptote at t_0 << 0 and integrate forward.

    The start state carries the first-order correction y_-(t_0), computed by
    integrating the force along the straight incoming line.  Without
    ``t_final`` the run stops once the escape criterion holds
    (|x| >= R_E and x.v > 0) plus a tail long enough for the outgoing fit.

    Returns ``(trajectory, |y_-(t_0)| + |dy_-(t_0)|, tail bound)``.
    """
    v_minus = np.asarray(v_minus, dtype=float)
    x_minus = np.asarray(x_minus, dtype=float)
    if not np.isclose(np.linalg.norm(v_minus), ctx.speed, rtol=1e-10, atol=0):
        raise ValueError(f"|v_minus| must equal the speed at infinity {ctx.speed}")
    # put v_- exactly on the energy shell: a speed offset d|v| shifts positions by t0 d|v|
    v_minus = v_minus * (ctx.speed / np.linalg.norm(v_minus))
    T0 = start_time(model, ctx, x_minus, shoot_tol) if t_start is None else float(t_start)
    t0 = -T0
    line_start = x_minus + t0 * v_minus
    P, Y = _line_integrals(model, ctx, line_start, v_minus, -1.0)
    p_minus = ctx.momentum(v_minus)
    J = ctx.velocity_jacobian(p_minus)
    x0 = line_start + J @ Y
    v0 = ctx.velocity(p_minus + P)
    speed0 = float(ctx.speed_at(model.V(x0)))
    v0 = v0 * (speed0 / np.linalg.norm(v0))
    y_norm = float(np.linalg.norm(J @ Y) + np.linalg.norm(v0 - v_minus))
    b = model.bounds
    bound = 0.0 if b.beta1 == 0 else (model.n * b.beta1 * (1 + ctx.speed) / ((b.alpha - 1) * ctx.speed)
                                      * (1 + ctx.speed * T0 / 2) ** (-b.alpha))

    if t_final is not None:
        traj = integrate(model, ctx, x0, v0, (t0, t_final), tol, events=events)
        return traj, y_norm, bound

    rep = nontrapping_constants(ctx, b, model.n)
    RE = rep.R_E
    n = model.n

    def escape(t, y):
        x = y[:n]
        return min(float(x @ y[n:]), float(x @ x) - RE * RE)

    escape.terminal = True
    escape.direction = 1
    budget = T0 + 1e4 * max(RE, model.radial_radius or 1.0, 1.0) / ctx.speed
    first = integrate(model, ctx, x0, v0, (t0, t0 + 2 * T0 + budget), tol,
                      events=[escape] + list(events or []))
    if not len(first.t_events[0]):
        raise RuntimeError("trapped or budget exceeded: no escape within the time budget")
    T = float(first.t_events[0][0])
    if ctx.relativistic:
        rate, sbound = math.sqrt(rep.escape_coefficient), ctx.c
    else:
        rate, sbound = math.sqrt(ctx.E), math.sqrt(2 * (ctx.E + b.beta0))
    # integrated force bound after the escape time T
    pref = n * b.beta1 * (1 + sbound) / (b.alpha * rate)
    tail = _tail_bound_time(pref, b.alpha, rate, shoot_tol)
    tail = min(max(tail, 10 * max(RE, 1.0) / ctx.speed, T0), T_START_CAP)
    traj = integrate(model, ctx, x0, v0, (t0, T + tail), tol, events=events)
    traj.meta.update(t_escape=T, R_E=RE)
    return traj, y_norm, bound


def fit_outgoing_asymptote(traj: Trajectory, tail_window: float | None = None,
                           n_samples: int = 9) -> tuple[np.ndarray, np.ndarray, float]:
    """Fit (v_+, x_+) over the last ``tail_window`` of an escaping trajectory.

    Each sample is corrected for the force still to act after it, integrated
    along the straight continuation; the estimates are averaged and the
    spread is returned as the residual.
    """
    model, ctx = traj.model, traj.ctx
    rep = nontrapping_constants(ctx, model.bounds, model.n)
    t_end = float(traj.t[-1])
    x_end = traj.position(t_end)
    v_end = traj.velocity(t_end)
    if np.linalg.norm(x_end) < rep.R_E or x_end @ v_end <= 0:
        raise RuntimeError("possibly trapped: trajectory has not escaped at the end of the run")
    if tail_window is None:
        tail_window = 10 * max(rep.R_E, 1.0) / ctx.speed
    ts = np.linspace(t_end - tail_window, t_end, n_samples)
    ys = traj.state(ts)
    n = model.n
    vp, xp = [], []
    for t, y in zip(ts, ys):
        x, w = y[:n], y[n:]
        v = ctx.velocity(w)
        P, Y = _line_integrals(model, ctx, x, v, 1.0)
        v_plus = ctx.velocity(w + P)
        J = ctx.velocity_jacobian(w + P)
        vp.append(v_plus)
        xp.append(x - J @ Y - t * v_plus)
    vp, xp = np.array(vp), np.array(xp)
    v_plus, x_plus = vp.mean(axis=0), xp.mean(axis=0)
    residual = float(max(np.abs(vp - v_plus).max(), np.abs(xp - x_plus).max()))
    return v_plus, x_plus, residual


def scattering_map(model: FieldModel, ctx: EnergyContext, v_minus, x_minus,
                   tol: float = DEFAULT_TOL, *, keep_trajectory: bool = False,
                   t_start: float | None = None) -> AsymptoteData:
    """S_E(v_-, x_-) = (v_+, x_+) at fixed energy."""
    traj, y_norm, bound = shoot_from_minus_infinity(model, ctx, v_minus, x_minus, tol,
                                                    t_start=t_start)
    v_plus, x_plus, res = fit_outgoing_asymptote(traj)
    return AsymptoteData(np.asarray(v_minus, float).copy(), np.asarray(x_minus, float).copy(),
                         v_plus, x_plus, residual_minus=bound, residual_plus=res,
                         y_minus_norm=y_norm, t_start=float(traj.t[0]),
                         trajectory=traj if keep_trajectory else None)


def write_asymptotes_csv(path, records: Sequence[AsymptoteData], header: dict):
    from .io import write_csv
    n = len(records[0].v_minus) if records else 0
    cols = ([f"v_minus{i + 1}" for i in range(n)] + [f"x_minus{i + 1}" for i in range(n)]
            + [f"v_plus{i + 1}" for i in range(n)] + [f"x_plus{i + 1}" for i in range(n)]
            + ["residual_plus"])
    rows = [np.concatenate([r.v_minus, r.x_minus, r.v_plus, r.x_plus, [r.residual_plus]])
            for r in records]
    write_csv(path, cols, np.array(rows).reshape(len(rows), len(cols)), header)
