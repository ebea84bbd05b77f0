"""Recovery of W near infinity from the deflection function.

Pipeline: g -> Abel integral H(sigma) -> chi(sigma) = 1/r_min(sigma^-1/2)
-> inverse phi -> W.  With D the excess sweep (see ``radial``) and
q = sigma^-1/2 / sin(psi),

    H(sigma) = (sqrt(sigma)/k) (pi + int_0^(pi/2) D(q) sin(psi) d psi),

and the exponent in the formula for chi has the regime-independent
integrand K(sigma)/sigma with

    K(sigma) = (1/2pi) int_0^(pi/2) (D - dD/dln q)(q) sin(psi) d psi,

so that ln(chi / (chi_0 sqrt(sigma))) = int_(-inf)^(ln sigma) K dt.  The
free part pi sqrt(sigma)/k of H never enters the exponent, which removes
the cancellation between (pi sqrt s)^-1 H' and 1/(2s).

The nonrelativistic prefactor is chi_0 = sqrt(2E): a free particle has
r_min = q/sqrt(2E), i.e. chi = sqrt(2E) sqrt(sigma).  The relativistic
prefactor is c sqrt(E^2 - c^4)/E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from .dynamics import EnergyContext
from .fields import RadialProfile, ShortRangeBounds
from .interp import MonotoneCubic
from .radial import DeflectionCurve, RadialScatteringContext, r_min, r_min_derivative
from .radial import compute_beta_prime as _beta_prime_formula

__all__ = [
    "AbelTable",
    "ChiTable",
    "ReconstructionResult",
    "sigma_grid",
    "abel_transform",
    "consistency_check_H",
    "reconstruct_chi",
    "reconstruct_W",
    "compute_beta_prime",
    "chi_prefactor",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def sigma_grid(beta: float, n: int = 128, lo: float = 1e-6, hi: float = 0.999) -> np.ndarray:
    """Geometric grid on [lo beta^-2, hi beta^-2]."""
    return np.geomspace(lo / beta**2, hi / beta**2, n)


def chi_prefactor(ctx: EnergyContext) -> float:
    """chi_0 with chi(sigma) ~ chi_0 sqrt(sigma) as sigma -> 0."""
    if not ctx.relativistic:
        return math.sqrt(2 * ctx.E)
    E, c = ctx.E, ctx.c
    return c * math.sqrt((E - c * c) * (E + c * c)) / E


def _psi_rule(curve: DeflectionCurve, q_sigma: float):
    """Gauss-Legendre nodes/weights in psi on panels aligned with the curve knots."""
    inside = curve.q[curve.q > q_sigma]
    edges = np.arcsin(q_sigma / inside)[::-1]
    # knots beyond q_max map to psi < psi_tail; split the tail panel geometrically
    psi_tail = edges[0] if len(edges) else math.pi / 2
    tail = psi_tail * np.array([0.0, 1 / 64, 1 / 16, 1 / 4])
    edges = np.concatenate([tail, edges, [math.pi / 2]])
    edges = np.unique(edges)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * _GL_X + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * _GL_W).ravel()
    return x, w


def _abel_terms(curve: DeflectionCurve, sigma: float):
    """(I, I') = int D sin psi, int dD/dlnq sin psi over psi in (0, pi/2)."""
    qs = sigma**-0.5
    psi, w = _psi_rule(curve, qs)
    s = np.sin(psi)
    q = qs / s
    ws = w * s
    return float(ws @ curve.excess(q)), float(ws @ curve.excess(q, 1))


@dataclass
class AbelTable:
    """H(sigma), dH/dsigma and the exponent integrand K on a sigma grid."""

    sigma: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    K: np.ndarray
    curve: DeflectionCurve = field(repr=False)

    @property
    def ctx(self) -> EnergyContext:
        return self.curve.ctx

    def K_at(self, sigma):
        """Regularized exponent integrand sigma * [(k/(pi sqrt s)) H' - 1/(2s)]."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        out = np.empty_like(sigma)
        for i, s in enumerate(sigma):
            I, Ip = _abel_terms(self.curve, s)
            out[i] = (I - Ip) / (2 * math.pi)
        return out


def abel_transform(curve: DeflectionCurve, sigma=None) -> AbelTable:
    """H(sigma) = int_0^(pi/2) g(sigma^-1/2 / sin psi) d psi and its derivative."""
    sigma = sigma_grid(curve.beta) if sigma is None else np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0) or np.any(np.diff(sigma) <= 0):
        raise ValueError("sigma grid must be positive and strictly increasing")
    if sigma[-1] > curve.q_min**-2 * (1 + 1e-12):
        raise ValueError(f"sigma up to {sigma[-1]:.6g} needs q down to {sigma[-1] ** -0.5:.6g}, "
                         f"below the sampled range [{curve.q_min:.6g}, {curve.q_max:.6g}]")
    if not curve.tail:
        raise ValueError(f"tail model disabled: H needs q in [{curve.q_min:.6g}, inf), "
                         f"curve covers [{curve.q_min:.6g}, {curve.q_max:.6g}]")
    k = curve.ctx.angular_factor
    terms = np.array([_abel_terms(curve, s) for s in sigma])
    I, Ip = terms[:, 0], terms[:, 1]
    rs = np.sqrt(sigma)
    H = rs / k * (math.pi + I)
    dH = (math.pi + I - Ip) / (2 * k * rs)
    K = (I - Ip) / (2 * math.pi)
    return AbelTable(sigma, H, dH, K, curve)


def consistency_check_H(table: AbelTable, profile: RadialProfile, ctx: EnergyContext | None = None,
                        bounds: ShortRangeBounds | None = None) -> dict:
    """Compare H with pi int_0^chi ds / sqrt(2(E - W(1/s))) (relativistic:
    (pi/c) int_0^chi ds / sqrt((E - W(1/s))^2 - c^4)) using the true chi.

    Also checks (k/(pi sqrt sigma)) H' = d ln chi / d sigma.  Returns the
    sup relative residuals of both identities.
    """
    ctx = ctx or table.ctx
    rc = RadialScatteringContext.build(ctx, profile, bounds)
    E = ctx.E
    if ctx.relativistic:
        c2 = ctx.c**2

        def f(s):
            e = E - float(profile.W(1 / s)) if s > 0 else E
            return 1.0 / math.sqrt((e - c2) * (e + c2))
        pref = math.pi / ctx.c
    else:
        def f(s):
            return 1.0 / math.sqrt(2 * (E - (float(profile.W(1 / s)) if s > 0 else 0.0)))
        pref = math.pi
    k = ctx.angular_factor
    res_H, res_d = [], []
    for s, H, dH in zip(table.sigma, table.H, table.dH):
        q = s**-0.5
        r = r_min(rc, q)
        val, _ = quad(f, 0.0, 1.0 / r, epsabs=0.0, epsrel=1e-11, limit=200)
        true_H = pref * val
        res_H.append(abs(H - true_H) / true_H)
        dlnchi = r_min_derivative(rc, q, r) * q / (2 * s * r)
        res_d.append(abs(k * dH / (math.pi * math.sqrt(s)) - dlnchi) / dlnchi)
    return {"H": float(max(res_H)), "dH": float(max(res_d))}


class ChiTable:
    """chi on a sigma grid with its inverse phi.

    chi is interpolated through F(t) = ln(chi / (chi_0 sqrt(sigma))),
    t = ln sigma, using the exact slopes dF/dt = K; below the grid F follows
    the power-law tail of K.
    """

    def __init__(self, sigma, F, K, ctx: EnergyContext, alpha: float, tail=(None, None),
                 meta: dict | None = None):
        self.sigma = np.asarray(sigma, dtype=float)
        self.F = np.asarray(F, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.ctx = ctx
        self.alpha = float(alpha)
        self.chi0 = chi_prefactor(ctx)
        self.meta = dict(meta or {})
        self.t = np.log(self.sigma)
        # split of F[0] into the sigma^(alpha/2) and sigma^((alpha+1)/2) tail parts
        Fa, Fb = tail
        self.tail = (self.F[0], 0.0) if Fa is None else (float(Fa), float(Fb))
        self._F = MonotoneCubic(self.t, self.F, slopes=self.K, limit=False)
        self.chi = self(self.sigma)
        if np.any(np.diff(self.chi) <= 0):
            raise ArithmeticError("reconstructed chi is not strictly increasing")

    def _Ft(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t[-1] + 1e-12):
            raise ValueError(f"sigma beyond the table maximum {self.sigma[-1]:.6g}")
        lo = t < self.t[0]
        dt = np.minimum(t, self.t[0]) - self.t[0]
        Fa, Fb = self.tail
        tail = Fa * np.exp(0.5 * self.alpha * dt) + Fb * np.exp(0.5 * (self.alpha + 1) * dt)
        return np.where(lo, tail, self._F(np.maximum(t, self.t[0])))

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return self.chi0 * np.sqrt(sigma) * np.exp(self._Ft(np.log(sigma)))

    @property
    def chi_max(self) -> float:
        return float(self.chi[-1])

    def phi(self, x, rtol: float = 1e-12):
        """Inverse of chi by vectorized bisection in ln sigma."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x <= 0) or np.any(x > self.chi_max * (1 + 1e-12)):
            raise ValueError(f"phi is defined on (0, {self.chi_max:.6g}]")
        # chi ~ chi0 sqrt(sigma) e^F with |F| small: start from the free guess
        a = np.full(x.shape, self.t[0] - 60.0)
        b = np.full(x.shape, self.t[-1])
        while True:
            m = 0.5 * (a + b)
            below = self(np.exp(m)) < x
            a = np.where(below, m, a)
            b = np.where(below, b, m)
            if np.all(b - a <= rtol):
                break
        return np.exp(0.5 * (a + b))


def reconstruct_chi(table: AbelTable, ctx: EnergyContext | None = None, tail_check: float = 0.5) -> ChiTable:
    """chi(sigma) = chi_0 sqrt(sigma) exp(int_0^sigma K(s)/s ds).

    The exponent is integrated panel by panel in t = ln sigma with 8-point
    Gauss-Legendre rules between grid nodes; below q_max^-2 the tail model
    makes K a sum of two powers of sigma, integrated in closed form.
    """
    ctx = ctx or table.ctx
    if ctx != table.ctx:
        raise ValueError("energy context differs from the one of the deflection curve")
    alpha = table.curve.alpha
    t = np.log(table.sigma)
    K = table.K
    # K ~ sigma^(alpha/2) near 0 requires the sampled excess to decay like q^-alpha at q_max
    curve = table.curve
    D0 = float(curve.excess(curve.q_max))
    if D0 != 0:
        slope = -float(curve.excess(curve.q_max, 1)) / D0
        if not abs(slope - alpha) <= tail_check * alpha:
            raise ArithmeticError(f"sampled deflection decays like q^-{slope:.3g} at q_max, so the exponent "
                                  f"integrand scales like sigma^{slope / 2:.3g} near 0, not sigma^{alpha / 2:.3g}: "
                                  "is alpha misdeclared?")
    Fa, Fb, t_tail = _tail_exponent(table.curve, float(t[0]))
    F = np.empty_like(t)
    F[0] = Fa + Fb
    if t[0] > t_tail:
        F[0] += _integrate_K(table, np.array([t_tail, t[0]]))[0]
        Fa = Fb = None
    F[1:] = F[0] + np.cumsum(_integrate_K(table, t))
    return ChiTable(table.sigma, F, K, ctx, alpha, tail=(Fa, Fb),
                    meta={"beta": table.curve.beta, **table.curve.meta})


def _integrate_K(table: AbelTable, t) -> np.ndarray:
    """Integrals of K over consecutive intervals of t = ln sigma."""
    a, b = t[:-1, None], t[1:, None]
    nodes = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    Kn = table.K_at(np.exp(nodes.ravel())).reshape(nodes.shape)
    return ((0.5 * (b - a)) * _GL_W * Kn).sum(axis=1)


def _sin_moment(m: float) -> float:
    """int_0^(pi/2) sin^m psi d psi."""
    return 0.5 * float(beta_fn((m + 1) / 2, 0.5))


def _tail_exponent(curve: DeflectionCurve, t0: float):
    """Exponent contributions int_(-inf)^t K dt of the two tail terms.

    For sigma <= q_max^-2 only the tail D = pi (a q^-alpha + b q^-alpha-1)
    is seen, so K is a sum of two powers of sigma and integrates in closed
    form.  Returns the two parts at t = min(t0, ln q_max^-2) and that t.
    """
    al = curve.alpha
    t = min(t0, -2 * math.log(curve.q_max))
    sig = math.exp(t)
    Ka = 0.5 * (1 + al) * curve.tail_coef * _sin_moment(al + 1) * sig ** (al / 2)
    Kb = 0.5 * (2 + al) * curve.tail_b * _sin_moment(al + 2) * sig ** ((al + 1) / 2)
    return Ka / (al / 2), Kb / ((al + 1) / 2), t


def _W_from_phi(ctx: EnergyContext, s, phi):
    E = ctx.E
    if not ctx.relativistic:
        return E - 1.0 / (2 * s * s * phi)
    c2 = ctx.c**2
    X = E * E / (c2 * s * s * phi)
    return (E - c2) - c2 * np.expm1(0.5 * np.log1p(X / (c2 * c2)))


@dataclass
class ReconstructionResult:
    s: np.ndarray
    W_rec: np.ndarray
    ctx: EnergyContext
    beta: float
    beta_prime: float
    W_true: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def abs_err(self):
        return None if self.W_true is None else np.abs(self.W_rec - self.W_true)

    @property
    def rel_err(self):
        if self.W_true is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.W_true != 0, self.abs_err / np.abs(self.W_true), self.abs_err)

    def summary(self) -> dict:
        out = {**self.ctx.describe(), "beta": self.beta, "beta_prime": self.beta_prime,
               "s_min": float(self.s[0]), "s_max": float(self.s[-1]), "n": int(len(self.s)),
               "sup_abs_W_rec": float(np.max(np.abs(self.W_rec)))}
        if self.W_true is not None:
            ae, re = self.abs_err, self.rel_err
            out.update(sup_abs_err=float(ae.max()), sup_rel_err=float(re.max()),
                       l2_abs_err=float(np.sqrt(np.trapezoid(ae**2, self.s))),
                       l2_rel_err=float(np.sqrt(np.trapezoid(ae**2, self.s) / np.trapezoid(self.W_true**2, self.s)))
                       if np.any(self.W_true) else 0.0)
        return {**out, **self.meta}

    def to_csv(self, path, header: dict | None = None):
        from .io import write_csv
        if self.W_true is None:
            cols, rows = ["s", "W_rec"], np.column_stack([self.s, self.W_rec])
        else:
            cols = ["s", "W_rec", "W_true", "abs_err", "rel_err"]
            rows = np.column_stack([self.s, self.W_rec, self.W_true, self.abs_err, self.rel_err])
        write_csv(path, cols, rows, {**self.ctx.describe(), "beta": self.beta,
                                     "beta_prime": self.beta_prime, **(header or {})})


def reconstruct_W(chi: ChiTable, ctx: EnergyContext | None = None, s=None, *, beta_prime: float | None = None,
                  s_max_factor: float = 5.0, n: int = 200, profile: RadialProfile | None = None) -> ReconstructionResult:
    """W(s) = E - 1/(2 s^2 phi(1/s)), relativistic E - (c^4 + E^2/(c^2 s^2 phi(1/s)))^(1/2).

    The default radius grid runs from max(beta', 1/chi(sigma_max)) to
    ``s_max_factor`` beta'.
    """
    ctx = ctx or chi.ctx
    beta = float(chi.meta.get("beta", math.nan))
    bp = beta_prime if beta_prime is not None else chi.meta.get("beta_prime")
    if bp is None:
        raise ValueError("beta' unknown: pass beta_prime")
    bp = float(bp)
    s_lo = max(bp, 1.0 / chi.chi_max)
    if s is None:
        s = np.linspace(s_lo, s_max_factor * bp, n)
    s = np.asarray(s, dtype=float)
    if np.any(s < s_lo * (1 - 1e-12)):
        raise ValueError(f"radii must lie in [{s_lo:.6g}, inf): reconstruction needs s > max(beta', 1/chi(sigma_max))")
    phi = chi.phi(1.0 / s)
    if np.any(phi <= 0):
        raise ArithmeticError("phi(1/s) <= 0: monotonicity violated upstream")
    W = _W_from_phi(ctx, s, phi)
    W_true = None if profile is None else np.asarray(profile.W(s), dtype=float)
    return ReconstructionResult(s, W, ctx, beta, bp, W_true)


def compute_beta_prime(ctx: EnergyContext, bounds: ShortRangeBounds, profile: RadialProfile | None = None,
                       beta: float | None = None) -> float:
    """beta' from the perihelion upper bound at q = beta; with a profile, asserts r_min(beta) <= beta'."""
    from .radial import compute_beta
    R = profile.R if profile is not None else 0.0
    if beta is None:
        if profile is None:
            raise ValueError("need beta or a profile (for R)")
        beta = compute_beta(ctx, bounds, R)
    bp = _beta_prime_formula(ctx, bounds, beta)
    if profile is not None:
        rc = RadialScatteringContext(ctx, profile, beta, bp, 100 * beta, bounds)
        rb = r_min(rc, beta)
        if rb > bp * (1 + 1e-12):
            raise AssertionError(f"r_min(beta) = {rb} exceeds beta' = {bp}")
    return bp
