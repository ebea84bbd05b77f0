"""Spherically symmetric exteriors: admissible impact parameters, perihelion, deflection.

For impact parameter q the planar orbit sweeps the polar angle
``k q g(q)`` with ``k = 1`` (nonrelativistic) or ``k = E`` (relativistic).
Internally the deflection is carried as the excess sweep
``D(q) = k q g(q) - pi``, which vanishes for the free field and is computed
without cancellation, so the inversion never subtracts two large numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dynamics import EnergyContext, scattering_map
from .fields import FieldModel, RadialProfile, ShortRangeBounds, radial_field
from .interp import MonotoneCubic

__all__ = [
    "RadialScatteringContext",
    "DeflectionCurve",
    "compute_beta",
    "compute_beta_prime",
    "r_min_bounds",
    "r_min",
    "r_min_identity_residual",
    "r_min_derivative",
    "deflection_excess",
    "deflection_quadrature",
    "deflection_ode",
    "sample_deflection",
    "q_grid",
]


def compute_beta(ctx: EnergyContext, bounds: ShortRangeBounds, R: float) -> float:
    """Lower admissible impact parameter beta."""
    E, a = ctx.E, bounds.alpha
    b0, b1 = bounds.beta0, bounds.beta1
    if not ctx.relativistic:
        return math.sqrt(2 * E + 2 * b0) * max(R, ((b1 + 2 * b0) / (2 * E)) ** (1 / a))
    c, c2 = ctx.c, ctx.c**2
    X = E * (2 * b0 + b1) + b1 * b0
    Y = 4 * b0**2 * (E - c2) * (E + c2)
    disc = X * X - Y
    if disc < 0:
        raise ValueError(f"energy too low for the relativistic beta formula: discriminant {disc:.6g} < 0")
    # (2 b0^2)^(1/a) (X - sqrt(disc))^(-1/a), rewritten without cancellation
    denom = 2 * (E - c2) * (E + c2)
    tilde = ((X + math.sqrt(disc)) / denom) ** (1 / a) if X > 0 else 0.0
    root = math.sqrt((E + b0 - c2) * (E + b0 + c2))
    second = (b0 / (E - c2)) ** (1 / a) * c * root / E
    third = c * R * root / E
    return max(tilde, second, third)


def r_min_bounds(ctx: EnergyContext, bounds: ShortRangeBounds, q):
    """Two-sided a priori bounds on the perihelion radius for q >= beta."""
    E, a, b0 = ctx.E, bounds.alpha, bounds.beta0
    q = np.asarray(q, dtype=float)
    if not ctx.relativistic:
        lo = q / np.sqrt(2 * E + 2 * b0)
        rad = 2 * E - 2 * b0 * q ** (-a) * (2 * b0 + 2 * E) ** (a / 2)
    else:
        c, c2 = ctx.c, ctx.c**2
        lo = q * E / (c * np.sqrt((E + b0 - c2) * (E + b0 + c2)))
        e = E - b0 * lo ** (-a)
        rad = (e - c2) * (e + c2)
    if np.any(rad <= 0):
        raise ValueError("upper perihelion bound undefined: energy too low relative to the bounds")
    hi = q / np.sqrt(rad) if not ctx.relativistic else E * q / (ctx.c * np.sqrt(rad))
    return lo, hi


def compute_beta_prime(ctx: EnergyContext, bounds: ShortRangeBounds, beta: float) -> float:
    """Radius beta' >= r_min(beta) beyond which W is recovered.

    Nonrelativistic: beta / (2E - 2 b0 beta^-alpha (2 b0 + 2E)^(alpha/2))^(1/2),
    the upper perihelion bound at q = beta.  Relativistic: the upper bound of
    the relativistic perihelion estimate at q = beta.
    """
    try:
        return float(r_min_bounds(ctx, bounds, beta)[1])
    except ValueError:
        raise ValueError("beta' radicand is not positive: energy too low relative to the bounds") from None


@dataclass(frozen=True)
class RadialScatteringContext:
    ctx: EnergyContext
    profile: RadialProfile
    beta: float
    beta_prime: float
    q_max: float
    bounds: ShortRangeBounds

    @classmethod
    def build(cls, ctx: EnergyContext, profile: RadialProfile, bounds: ShortRangeBounds | None = None,
              decades: float = 2.0) -> "RadialScatteringContext":
        bounds = bounds or profile.bounds
        beta = compute_beta(ctx, bounds, profile.R)
        bp = compute_beta_prime(ctx, bounds, beta)
        rc = cls(ctx, profile, beta, bp, beta * 10**decades, bounds)
        rb = r_min(rc, beta)
        free = bounds.beta0 == 0 and bounds.beta1 == 0
        if not (rb > profile.R or (free and rb >= profile.R * (1 - 1e-12))):
            raise ValueError(f"r_min(beta) = {rb} does not exceed R = {profile.R}")
        if rb > bp * (1 + 1e-12):
            raise ValueError(f"r_min(beta) = {rb} exceeds beta' = {bp}")
        return rc

    @property
    def E(self) -> float:
        return self.ctx.E

    def describe(self) -> dict:
        return {**self.ctx.describe(), "beta": self.beta, "beta_prime": self.beta_prime,
                "q_max": self.q_max, "alpha": self.bounds.alpha, "beta0": self.bounds.beta0,
                "beta1": self.bounds.beta1, "R": self.profile.R}


def _h(rc: RadialScatteringContext, q: float, r: float):
    """Perihelion function (positive beyond r_min) and its r-derivative."""
    W, dW = float(rc.profile.W(r)), float(rc.profile.dW(r))
    E = rc.ctx.E
    if not rc.ctx.relativistic:
        return E - W - q * q / (2 * r * r), -dW + q * q / r**3
    c2 = rc.ctx.c**2
    e = E - W
    k = q * q * E * E / c2
    return (e - c2) * (e + c2) - k / (r * r), -2 * e * dW + 2 * k / r**3


def r_min(rc: RadialScatteringContext, q: float, rtol: float = 1e-14) -> float:
    """Largest root of the perihelion function on (R, inf).

    Marches down from the upper a priori bound until the sign changes, then
    bisects to ``rtol`` and polishes with two Newton steps.
    """
    q = float(q)
    if q < rc.beta * (1 - 1e-12):
        raise ValueError(f"impact parameter {q} is below beta = {rc.beta}")
    lo, hi = (float(v) for v in r_min_bounds(rc.ctx, rc.bounds, q))
    # the bracket is degenerate for the free field
    lo, hi = lo * (1 - 1e-8), hi * (1 + 1e-8)
    if _h(rc, q, hi)[0] <= 0:
        raise ValueError(f"perihelion function not positive at the upper bound for q={q}")
    step = (hi - lo) / 32
    top = hi
    while True:
        cand = top - step
        if cand < lo:
            step *= 0.5
            if step < 1e-15 * hi:
                raise ValueError(f"no sign change of the perihelion function on [{lo}, {hi}] for q={q}: "
                                 "q < beta or the profile violates its bounds")
            continue
        if _h(rc, q, cand)[0] <= 0:
            a, b = cand, top
            break
        top = cand
    while b - a > rtol * b:
        mid = 0.5 * (a + b)
        if _h(rc, q, mid)[0] <= 0:
            a = mid
        else:
            b = mid
    r = 0.5 * (a + b)
    for _ in range(2):
        h, dh = _h(rc, q, r)
        if dh > 0:
            nr = r - h / dh
            if a * (1 - 1e-12) <= nr <= b * (1 + 1e-12):
                r = nr
    return r


def r_min_identity_residual(rc: RadialScatteringContext, q: float, r: float) -> float:
    """Relative residual of the perihelion identity at radius r."""
    E = rc.ctx.E
    W = float(rc.profile.W(r))
    if not rc.ctx.relativistic:
        return abs(W + q * q / (2 * r * r) - E) / E
    c2 = rc.ctx.c**2
    k = q * q * E * E / (c2 * r * r)
    e = E - W
    return abs((e - c2) * (e + c2) - k) / k


def r_min_derivative(rc: RadialScatteringContext, q: float, r: float | None = None) -> float:
    r = r_min(rc, q) if r is None else r
    dW, W, E = float(rc.profile.dW(r)), float(rc.profile.W(r)), rc.ctx.E
    if not rc.ctx.relativistic:
        num, den = q * r, q * q - r**3 * dW
    else:
        c2 = rc.ctx.c**2
        num, den = E * E * q * r, -c2 * (E - W) * r**3 * dW + q * q * E * E
    if den <= 0:
        raise ArithmeticError(f"nonpositive denominator {den} in dr_min/dq at q={q}")
    return num / den


def deflection_excess(rc: RadialScatteringContext, q: float, r: float | None = None,
                      epsrel: float = 1e-12) -> float:
    """D(q) = k q g(q) - pi by singularity-free quadrature.

    With s = 1/r and s = chi sin(theta), the sweep becomes
    2 int_0^(pi/2) (1 - eps(theta))^(-1/2) d theta, where eps collects the
    potential difference W(r_min / sin theta) - W(r_min) divided by
    cos^2 theta; it stays bounded at theta = pi/2 because the radicand has
    a simple zero there.
    """
    q = float(q)
    r = r_min(rc, q) if r is None else r
    prof, E = rc.profile, rc.ctx.E
    W0 = float(prof.W(r))
    if rc.ctx.relativistic:
        c2 = rc.ctx.c**2
        scale = c2 * r * r / (q * q * E * E)
    else:
        scale = 2 * r * r / (q * q)

    def f(theta):
        st, ct = math.sin(theta), math.cos(theta)
        dw = float(prof.W(r / st)) - W0
        if rc.ctx.relativistic:
            dw *= 2 * E - float(prof.W(r / st)) - W0
        eps = scale * dw / (ct * ct)
        if eps >= 1:
            raise ArithmeticError(f"deflection integrand radicand is not positive at theta={theta}, q={q}")
        return math.expm1(-0.5 * math.log1p(-eps))

    val, _ = quad(f, 0.0, math.pi / 2, epsabs=1e-15, epsrel=epsrel, limit=200)
    return 2.0 * val


def deflection_quadrature(rc: RadialScatteringContext, q: float) -> float:
    """g(q) from the radial integral; pi/q for the free field (pi/(E q) relativistic)."""
    return (math.pi + deflection_excess(rc, q)) / (rc.ctx.angular_factor * q)


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def sweep_from_trajectory(traj, v_minus, v_plus) -> float:
    """Unwrapped polar angle swept from t = -inf to +inf in the (e1, e2) plane."""
    t = traj.t
    # refine until consecutive nodes are at most pi/8 apart in polar angle
    for _ in range(6):
        x = traj.position(t)
        th = np.arctan2(x[:, 1], x[:, 0])
        if np.max(np.abs(np.diff(np.unwrap(th)))) < math.pi / 8:
            break
        mid = 0.5 * (t[1:] + t[:-1])
        t = np.sort(np.concatenate([t, mid]))
    th = np.unwrap(th)
    start = _wrap(th[0] - math.atan2(-v_minus[1], -v_minus[0]))
    end = _wrap(math.atan2(v_plus[1], v_plus[0]) - th[-1])
    return float(start + (th[-1] - th[0]) + end)


def impact_setup(ctx: EnergyContext, q: float, n: int = 2):
    """x_- = (q/|v|) e1, v_- = |v| e2: angular momentum -x_-.v_-^perp = q."""
    s = ctx.speed
    x = np.zeros(n)
    v = np.zeros(n)
    x[0] = q / s
    v[1] = s
    return v, x


def deflection_ode(rc: RadialScatteringContext, q: float, tol: float = 1e-10,
                   model: FieldModel | None = None, return_run: bool = False):
    """g(q) from the swept polar angle of a simulated orbit."""
    model = model or radial_field(rc.profile, 2)
    v_minus, x_minus = impact_setup(rc.ctx, q, model.n)
    asym = scattering_map(model, rc.ctx, v_minus, x_minus, tol, keep_trajectory=True)
    sweep = sweep_from_trajectory(asym.trajectory, v_minus, asym.v_plus)
    g = sweep / (rc.ctx.angular_factor * q)
    return (g, asym) if return_run else g


def q_grid(beta: float, per_decade: int = 96, decades: float = 2.0) -> np.ndarray:
    k = np.arange(int(round(per_decade * decades)) + 1)
    return beta * 10.0 ** (k / per_decade)


class DeflectionCurve:
    """Sampled deflection q -> g(q) on [beta, q_max] with a monotone cubic interpolant.

    The interpolant acts on the excess sweep D as a function of ln q.  Past
    ``q_max`` the tail model D = pi (a q^-alpha + b q^-alpha-1) is used, with
    a and b matching the value and slope of the interpolant at ``q_max``.
    """

    def __init__(self, q, excess, ctx: EnergyContext, alpha: float, beta: float | None = None,
                 meta: dict | None = None, tail: bool = True):
        q = np.asarray(q, dtype=float)
        D = np.asarray(excess, dtype=float)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(D))):
            raise ValueError("non-finite deflection sample")
        if np.any(np.diff(q) <= 0):
            raise ValueError("q grid must be strictly increasing")
        self.q, self.D, self.ctx, self.alpha = q, D, ctx, float(alpha)
        self.beta = float(q[0] if beta is None else beta)
        self.meta = dict(meta or {})
        self.tail = tail
        self._interp = MonotoneCubic(np.log(q), D)
        # two-term tail pi (a q^-alpha + b q^-alpha-1), C^1 at q_max
        a_, qm = self.alpha, q[-1]
        d0, d1 = D[-1], float(self._interp(math.log(qm), 1))
        # d1 = -alpha pi a qm^-a - (alpha + 1) pi b qm^-a-1
        self.tail_b = float(-(d1 + a_ * d0) * qm ** (a_ + 1) / math.pi)
        self.tail_coef = float((d0 / math.pi - self.tail_b * qm ** (-a_ - 1)) * qm**a_)

    @classmethod
    def from_g(cls, q, g, ctx: EnergyContext, alpha: float, **kw):
        q = np.asarray(q, dtype=float)
        D = ctx.angular_factor * q * np.asarray(g, dtype=float) - math.pi
        return cls(q, D, ctx, alpha, **kw)

    @property
    def q_min(self) -> float:
        return float(self.q[0])

    @property
    def q_max(self) -> float:
        return float(self.q[-1])

    @property
    def g(self) -> np.ndarray:
        return (math.pi + self.D) / (self.ctx.angular_factor * self.q)

    def excess(self, q, nu: int = 0):
        """D(q) (nu = 0) or dD/d ln q (nu = 1); tail model past q_max."""
        q = np.asarray(q, dtype=float)
        if np.any(q < self.q_min * (1 - 1e-12)):
            raise ValueError(f"q below the sampled range [{self.q_min}, {self.q_max}]")
        inside = q <= self.q_max
        if not self.tail and not np.all(inside):
            raise ValueError(f"q beyond q_max = {self.q_max} and tail model disabled")
        qi = np.where(inside, q, self.q_max)
        val = self._interp(np.log(qi), nu)
        qt = np.where(inside, self.q_max, q)
        ta = math.pi * self.tail_coef * qt ** (-self.alpha)
        tb = math.pi * self.tail_b * qt ** (-self.alpha - 1)
        t = ta + tb if nu == 0 else -self.alpha * ta - (self.alpha + 1) * tb
        return np.where(inside, val, t)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return (math.pi + self.excess(q)) / (self.ctx.angular_factor * q)

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        return (self.excess(q, 1) - math.pi - self.excess(q)) / (self.ctx.angular_factor * q * q)

    def tail_residual(self) -> np.ndarray:
        """q g(q) k - pi along the last decade (should shrink like q^-alpha)."""
        last = self.q >= self.q_max / 10
        return self.D[last]

    def header(self) -> dict:
        return {"regime": self.ctx.regime, "E": self.ctx.E, "c": self.ctx.c, "beta": self.beta,
                "alpha": self.alpha, **self.meta}

    def to_csv(self, path, extra: dict | None = None):
        from .io import write_csv
        write_csv(path, ["q", "g"], np.column_stack([self.q, self.g]), {**self.header(), **(extra or {})})

    @classmethod
    def from_csv(cls, path) -> "DeflectionCurve":
        from .io import read_csv
        meta, cols = read_csv(path)
        for key in ("regime", "E", "beta", "alpha"):
            if key not in meta:
                raise ValueError(f"{path}: missing header field '{key}'")
        if "q" not in cols or "g" not in cols:
            raise ValueError(f"{path}: expected columns q, g")
        c = meta.get("c")
        ctx = EnergyContext(float(meta["E"]), None if meta["regime"] == "nonrel" else float(c))
        rest = {k: v for k, v in meta.items() if k not in ("regime", "E", "c", "beta", "alpha")}
        return cls.from_g(cols["q"], cols["g"], ctx, float(meta["alpha"]), beta=float(meta["beta"]),
                          meta=rest)


def sample_deflection(rc: RadialScatteringContext, per_decade: int = 96, decades: float | None = None,
                      source: str = "quadrature", tol: float = 1e-10) -> DeflectionCurve:
    """Tabulate g on a log grid from beta to q_max."""
    if decades is None:
        decades = math.log10(rc.q_max / rc.beta)
    q = q_grid(rc.beta, per_decade, decades)
    if source == "quadrature":
        D = np.array([deflection_excess(rc, qi) for qi in q])
    elif source == "ode":
        D = np.array([rc.ctx.angular_factor * qi * deflection_ode(rc, qi, tol) - math.pi for qi in q])
    else:
        raise ValueError(f"unknown deflection source {source!r}")
    if not np.all(np.isfinite(D)):
        raise ArithmeticError("non-finite deflection sample")
    return DeflectionCurve(q, D, rc.ctx, rc.bounds.alpha, beta=rc.beta,
                           meta={"source": source, "beta0": rc.bounds.beta0, "beta1": rc.bounds.beta1,
                                 "R": rc.profile.R, "beta_prime": rc.beta_prime})
