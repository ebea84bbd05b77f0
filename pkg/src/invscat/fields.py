"""Electromagnetic field models (V, B) and their short-range diagnostics.

All quantities are in natural units (m = e = 1).  Evaluators accept a single
position of shape ``(n,)`` or a batch of shape ``(m, n)`` and broadcast.

The magnetic field is stored as the antisymmetric matrix ``B[i, k]``; its
derivative array is indexed ``dB[l, i, k] = d B[i, k] / d x_l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc, norm as _normal

__all__ = [
    "ShortRangeBounds",
    "RadialProfile",
    "ShiftedPowerProfile",
    "SoftCoreProfile",
    "ZeroProfile",
    "RadialPotential",
    "BumpMagneticField",
    "FieldModel",
    "PointCloud",
    "eval_force",
    "shortrange_norm",
    "check_closedness",
    "audit_bounds",
    "radial_field",
    "standard_field",
    "free_field",
]

# relative safety margin on numerically computed sup-bounds
_BOUND_MARGIN = 1e-9


@dataclass(frozen=True)
class ShortRangeBounds:
    """Decay exponent and bound constants of a short-range field.

    ``beta[k]`` bounds derivatives of order ``k`` of V and of order ``k - 1``
    of B, each weighted by ``(1 + |x|)**(alpha + k)``.
    """

    alpha: float
    beta: tuple[float, float, float]
    lam: float | None = None

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 3:
            raise ValueError("beta must hold three constants beta_0, beta_1, beta_2")
        if any(not np.isfinite(b) or b < 0 for b in beta):
            raise ValueError(f"bound constants must be finite and nonnegative, got {beta}")
        object.__setattr__(self, "beta", beta)
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def beta0(self) -> float:
        return self.beta[0]

    @property
    def beta1(self) -> float:
        return self.beta[1]

    @property
    def beta2(self) -> float:
        return self.beta[2]


def _radial_sup(fn, r_lo: float = 0.0, r_hi: float = 1e6) -> float:
    """Supremum of a nonnegative function of the radius, by scan plus refinement."""
    r = np.concatenate([np.linspace(r_lo, min(r_hi, r_lo + 10.0), 4001),
                        np.geomspace(max(r_lo, 1e-3) + 10.0, r_hi, 4001)])
    vals = fn(r)
    k = int(np.argmax(vals))
    best = float(vals[k])
    a, b = r[max(k - 1, 0)], r[min(k + 1, len(r) - 1)]
    if b > a:
        res = minimize_scalar(lambda s: -float(fn(np.array([s]))[0]), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, b)})
        best = max(best, -float(res.fun))
    # the weighted quantity may approach its sup only as r -> infinity
    best = max(best, float(fn(np.array([r_hi]))[0]))
    return best * (1.0 + _BOUND_MARGIN)


class RadialProfile:
    """Scalar exterior profile W(r) valid on (R, inf), with two derivatives.

    Subclasses implement ``W``, ``dW`` and ``d2W``; ``bounds`` holds the
    constants of the exterior estimate sup (1+r)^alpha |W| <= beta_0,
    sup (1+r)^(alpha+1) |W'| <= beta_1 over r > R.
    """

    R: float
    bounds: ShortRangeBounds
    #: whether W extends to an even C^2 function across r = 0
    smooth_at_origin: bool = False

    def W(self, r):
        raise NotImplementedError

    def dW(self, r):
        raise NotImplementedError

    def d2W(self, r):
        raise NotImplementedError

    def _exterior_bounds(self, alpha: float) -> ShortRangeBounds:
        b0 = _radial_sup(lambda r: (1 + r) ** alpha * np.abs(self.W(r)), self.R)
        b1 = _radial_sup(lambda r: (1 + r) ** (alpha + 1) * np.abs(self.dW(r)), self.R)
        b2 = _radial_sup(lambda r: (1 + r) ** (alpha + 2) * np.abs(self.d2W(r)), self.R)
        return ShortRangeBounds(alpha, (b0, b1, b2))

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class ShiftedPowerProfile(RadialProfile):
    """W(r) = A (1 + r)^(-alpha); the bounds are exact: beta_0 = |A|, beta_1 = |A| alpha."""

    def __init__(self, A: float = 1.0, alpha: float = 2.0, R: float = 1.0):
        self.A, self.alpha, self.R = float(A), float(alpha), float(R)
        a = abs(self.A)
        self.bounds = ShortRangeBounds(
            self.alpha, (a, a * self.alpha, a * self.alpha * (self.alpha + 1)))

    def W(self, r):
        return self.A * (1.0 + r) ** (-self.alpha)

    def dW(self, r):
        return -self.A * self.alpha * (1.0 + r) ** (-self.alpha - 1)

    def d2W(self, r):
        return self.A * self.alpha * (self.alpha + 1) * (1.0 + r) ** (-self.alpha - 2)

    def describe(self):
        return {"kind": "shifted_power", "A": self.A, "alpha": self.alpha, "R": self.R}


class SoftCoreProfile(RadialProfile):
    """W(r) = A (1 + r^2)^(-alpha/2), smooth everywhere."""

    smooth_at_origin = True

    def __init__(self, A: float = 1.0, alpha: float = 2.0, R: float = 1.0):
        self.A, self.alpha, self.R = float(A), float(alpha), float(R)
        self.bounds = self._exterior_bounds(self.alpha)

    def W(self, r):
        return self.A * (1.0 + r * r) ** (-self.alpha / 2)

    def dW(self, r):
        return -self.A * self.alpha * r * (1.0 + r * r) ** (-self.alpha / 2 - 1)

    def d2W(self, r):
        a = self.alpha
        return self.A * a * ((a + 1) * r * r - 1) * (1.0 + r * r) ** (-a / 2 - 2)

    def describe(self):
        return {"kind": "soft_core", "A": self.A, "alpha": self.alpha, "R": self.R}


class ZeroProfile(RadialProfile):
    """The free exterior W = 0."""

    smooth_at_origin = True

    def __init__(self, R: float = 1.0, alpha: float = 2.0):
        self.R = float(R)
        self.alpha = float(alpha)
        self.bounds = ShortRangeBounds(self.alpha, (0.0, 0.0, 0.0))

    def W(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    dW = d2W = W

    def describe(self):
        return {"kind": "zero", "R": self.R, "alpha": self.alpha}


class RadialPotential:
    """V(x) = W(|x|), with an optional C^2 even quartic core on |x| < core_radius.

    The core replaces W where the profile is not smooth at the origin (for
    example the shifted power law).  It matches W, W' and W'' at the core
    radius, so V stays C^2 and the exterior is untouched.
    """

    def __init__(self, profile: RadialProfile, core_radius: float | None = None):
        self.profile = profile
        if core_radius is None and not profile.smooth_at_origin:
            core_radius = 0.5 * profile.R
        if core_radius is not None and not 0 < core_radius <= profile.R:
            raise ValueError("core radius must lie in (0, R]")
        self.core_radius = core_radius
        if core_radius is not None:
            rc = core_radius
            w, w1, w2 = (float(f(np.array(rc))) for f in (profile.W, profile.dW, profile.d2W))
            # W' = 2b r + 4c r^3, W'' = 2b + 12c r^2 at r = rc
            c4 = (w2 - w1 / rc) / (8 * rc * rc)
            b2 = (w1 - 4 * c4 * rc**3) / (2 * rc)
            a0 = w - b2 * rc * rc - c4 * rc**4
            self._quartic = (a0, b2, c4)

    # W, W'/r and W'' on arrays of radii, core-aware
    def _radial(self, r):
        r = np.asarray(r, dtype=float)
        prof = self.profile
        if self.core_radius is None:
            w, w2 = prof.W(r), prof.d2W(r)
            small = r < 1e-8
            rs = np.where(small, 1.0, r)
            w1r = np.where(small, w2, prof.dW(rs) / rs)
            return w, w1r, w2
        a0, b2, c4 = self._quartic
        inside = r < self.core_radius
        ro = np.where(inside, self.core_radius, r)
        w = np.where(inside, a0 + b2 * r**2 + c4 * r**4, prof.W(ro))
        w1r = np.where(inside, 2 * b2 + 4 * c4 * r**2, prof.dW(ro) / ro)
        w2 = np.where(inside, 2 * b2 + 12 * c4 * r**2, prof.d2W(ro))
        return w, w1r, w2

    def value(self, x):
        r = np.linalg.norm(x, axis=-1)
        return self._radial(r)[0]

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        _, w1r, _ = self._radial(r)
        return w1r[..., None] * x

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        r = np.linalg.norm(x, axis=-1)
        _, w1r, w2 = self._radial(r)
        rs = np.where(r > 1e-8, r, 1.0)
        xh = x / rs[..., None]
        coef = np.where(r > 1e-8, w2 - w1r, 0.0)
        return (coef[..., None, None] * xh[..., :, None] * xh[..., None, :]
                + w1r[..., None, None] * np.eye(n))

    def weighted_bounds(self, alpha: float) -> tuple[float, float, float]:
        """Whole-space constants for |d^j V| <= beta_j (1+|x|)^(-alpha-j), j = 0, 1, 2."""

        def parts(r):
            w, w1r, w2 = self._radial(r)
            return w, w1r * r, w1r, w2

        def b0(r):
            return (1 + r) ** alpha * np.abs(parts(r)[0])

        def b1(r):
            return (1 + r) ** (alpha + 1) * np.abs(parts(r)[1])

        def b2(r):
            _, _, w1r, w2 = parts(r)
            ent = np.maximum(np.maximum(np.abs(w2), np.abs(w1r)), 0.5 * np.abs(w2 - w1r))
            return (1 + r) ** (alpha + 2) * ent

        return _radial_sup(b0), _radial_sup(b1), _radial_sup(b2)


class BumpMagneticField:
    """Compactly supported closed magnetic field B = dA, A = kappa p(x) u.

    ``p(x) = (1 - |x|^2/a^2)^4`` inside the ball of radius ``a`` and zero
    outside, so B is C^2 and vanishes identically for |x| >= a.  Closedness
    holds exactly because B is an exterior derivative.
    """

    def __init__(self, kappa: float, radius: float, direction: Sequence[float]):
        self.kappa = float(kappa)
        self.radius = float(radius)
        self.u = np.asarray(direction, dtype=float)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")

    def _p_derivs(self, x):
        a2 = self.radius**2
        rho2 = np.sum(x * x, axis=-1)
        t = np.clip(1.0 - rho2 / a2, 0.0, None)
        dp = (-8.0 / a2) * t**3  # grad p = dp * x
        ddp = (48.0 / a2**2) * t**2  # hess p = dp I + ddp x x^T
        return dp, ddp

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        dp, _ = self._p_derivs(x)
        gp = dp[..., None] * x
        u = self.u
        return self.kappa * (gp[..., :, None] * u[None, :] - u[:, None] * gp[..., None, :])

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        dp, ddp = self._p_derivs(x)
        hp = dp[..., None, None] * np.eye(n) + ddp[..., None, None] * x[..., :, None] * x[..., None, :]
        u = self.u
        # dB[l, i, k] = kappa (d_l d_i p u_k - d_l d_k p u_i)
        return self.kappa * (hp[..., :, :, None] * u[None, None, :]
                             - hp[..., :, None, :] * u[None, :, None])

    def weighted_bounds(self, alpha: float) -> tuple[float, float]:
        a = self.radius
        um = 2.0 * abs(self.kappa) * float(np.max(np.abs(self.u)))

        def b(r):
            t = np.clip(1 - (r / a) ** 2, 0, None)
            return (1 + r) ** (alpha + 1) * um * (8 * r / a**2) * t**3

        def db(r):
            t = np.clip(1 - (r / a) ** 2, 0, None)
            return (1 + r) ** (alpha + 2) * um * ((8 / a**2) * t**3 + (48 * r * r / a**4) * t**2)

        return _radial_sup(b, 0.0, a), _radial_sup(db, 0.0, a)


@dataclass(frozen=True)
class FieldModel:
    """An evaluable pair (V, B) in dimension n with its short-range bounds.

    ``radial_radius`` is the radius R beyond which B vanishes and V is
    spherically symmetric, when that holds.
    """

    n: int
    potential: RadialPotential | None = None
    magnetic: BumpMagneticField | None = None
    bounds: ShortRangeBounds | None = None
    radial_radius: float | None = None
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if self.magnetic is not None and self.magnetic.u.shape != (self.n,):
            raise ValueError("magnetic direction must be an n-vector")
        if self.bounds is None:
            object.__setattr__(self, "bounds", self._computed_bounds())

    def _computed_bounds(self) -> ShortRangeBounds:
        if self.potential is not None:
            alpha = self.potential.profile.bounds.alpha
            b0, b1, b2 = self.potential.weighted_bounds(alpha)
        else:
            alpha, b0, b1, b2 = 2.0, 0.0, 0.0, 0.0
        if self.magnetic is not None:
            m1, m2 = self.magnetic.weighted_bounds(alpha)
            b1, b2 = max(b1, m1), max(b2, m2)
        return ShortRangeBounds(alpha, (b0, b1, b2))

    @property
    def is_free(self) -> bool:
        return self.potential is None and self.magnetic is None

    @property
    def seams(self) -> tuple[float, ...]:
        """Radii where the field is only C^2 (core blend, bump support)."""
        radii = []
        if self.potential is not None and self.potential.core_radius is not None:
            radii.append(self.potential.core_radius)
        if self.magnetic is not None:
            radii.append(self.magnetic.radius)
        return tuple(sorted(set(radii)))

    def V(self, x):
        x = np.asarray(x, dtype=float)
        if self.potential is None:
            return np.zeros(x.shape[:-1])
        return self.potential.value(x)

    def grad_V(self, x):
        x = np.asarray(x, dtype=float)
        if self.potential is None:
            return np.zeros_like(x)
        return self.potential.grad(x)

    def hess_V(self, x):
        x = np.asarray(x, dtype=float)
        if self.potential is None:
            return np.zeros(x.shape + (self.n,))
        return self.potential.hess(x)

    def B(self, x):
        x = np.asarray(x, dtype=float)
        if self.magnetic is None:
            return np.zeros(x.shape + (self.n,))
        return self.magnetic.matrix(x)

    def grad_B(self, x):
        x = np.asarray(x, dtype=float)
        if self.magnetic is None:
            return np.zeros(x.shape + (self.n, self.n))
        return self.magnetic.grad(x)


def eval_force(model: FieldModel, x, v, magnetic_scale: float = 1.0):
    """Lorentz-type force -grad V(x) + s B(x) v.

    ``magnetic_scale`` is 1 for the nonrelativistic equation; the
    relativistic caller passes 1/c.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise ValueError(f"non-finite state passed to eval_force: x={x}, v={v}")
    f = -model.grad_V(x)
    if model.magnetic is not None:
        f = f + magnetic_scale * np.einsum("...ik,...k->...i", model.B(x), v)
    return f


@dataclass(frozen=True)
class PointCloud:
    """Deterministic cloud of radial shells times quasi-uniform directions.

    Radii are log-spaced in (1 + r) between 0 and ``r_max``.  Refining with
    :meth:`doubled` keeps every existing point, so sup-type statistics are
    nondecreasing under refinement.
    """

    n: int
    n_radii: int = 16
    n_dirs: int = 64
    r_max: float = 1e3

    def radii(self) -> np.ndarray:
        return np.expm1(np.linspace(0.0, np.log1p(self.r_max), self.n_radii))

    def directions(self) -> np.ndarray:
        if self.n == 2:
            th = 2 * np.pi * np.arange(self.n_dirs) / self.n_dirs
            return np.stack([np.cos(th), np.sin(th)], axis=1)
        h = qmc.Halton(d=self.n, scramble=False).random(self.n_dirs + 1)[1:]
        z = _normal.ppf(np.clip(h, 1e-12, 1 - 1e-12))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def points(self) -> np.ndarray:
        r = self.radii()
        d = self.directions()
        return (r[:, None, None] * d[None, :, :]).reshape(-1, self.n)

    def doubled(self) -> "PointCloud":
        return PointCloud(self.n, 2 * self.n_radii - 1, 2 * self.n_dirs, self.r_max)


def _weighted_terms(model: FieldModel, pts: np.ndarray):
    a = model.bounds.alpha
    w = 1.0 + np.linalg.norm(pts, axis=1)
    v0 = w**a * np.abs(model.V(pts))
    v1 = w ** (a + 1) * np.max(np.abs(model.grad_V(pts)), axis=1)
    v2 = w ** (a + 2) * np.max(np.abs(model.hess_V(pts)).reshape(len(pts), -1), axis=1)
    b0 = w ** (a + 1) * np.max(np.abs(model.B(pts)).reshape(len(pts), -1), axis=1)
    b1 = w ** (a + 2) * np.max(np.abs(model.grad_B(pts)).reshape(len(pts), -1), axis=1)
    return v0, v1, v2, b0, b1


def shortrange_norm(model: FieldModel, cloud: PointCloud | None = None) -> float:
    """Discrete supremum approximating the short-range norm of (V, B)."""
    cloud = cloud or PointCloud(model.n)
    pts = cloud.points()
    if len(pts) == 0:
        raise ValueError("empty sample cloud")
    v0, v1, v2, b0, b1 = _weighted_terms(model, pts)
    return float(max(v0.max(), v1.max(), v2.max()) + max(b0.max(), b1.max()))


def audit_bounds(model: FieldModel, pts: np.ndarray) -> dict:
    """Check the declared bound inequalities pointwise; returns worst ratios (<= 1 passes)."""
    v0, v1, v2, b0, b1 = _weighted_terms(model, np.asarray(pts, dtype=float))
    beta = model.bounds.beta

    def ratio(vals, b):
        m = float(vals.max())
        if b == 0:
            return 0.0 if m == 0 else np.inf
        return m / b

    out = {"V0": ratio(v0, beta[0]), "V1": ratio(v1, beta[1]), "V2": ratio(v2, beta[2]),
           "B0": ratio(b0, beta[1]), "B1": ratio(b1, beta[2])}
    out["ok"] = all(v <= 1.0 for v in out.values())
    return out


def check_closedness(model: FieldModel, points, h: float = 1e-4) -> float:
    """Max |d_l B_ik + d_k B_li + d_i B_kl| over points and index triples, by central differences."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = model.n
    if model.magnetic is None:
        return 0.0
    dB = np.empty((len(pts), n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dB[:, l] = (model.B(pts + e) - model.B(pts - e)) / (2 * h)
    if not np.all(np.isfinite(dB)):
        raise ValueError("non-finite magnetic field evaluation")
    cyc = dB + np.transpose(dB, (0, 2, 3, 1)) + np.transpose(dB, (0, 3, 1, 2))
    return float(np.max(np.abs(cyc)))


def radial_field(profile: RadialProfile, n: int = 2, *, core_radius: float | None = None,
                 magnetic: BumpMagneticField | None = None, name: str = "radial") -> FieldModel:
    pot = None if isinstance(profile, ZeroProfile) else RadialPotential(profile, core_radius)
    if magnetic is not None and magnetic.radius > profile.R:
        raise ValueError("magnetic bump must be supported inside the radial radius R")
    model = FieldModel(n=n, potential=pot, magnetic=magnetic, radial_radius=profile.R, name=name)
    if pot is None and magnetic is None:
        object.__setattr__(model, "bounds", ShortRangeBounds(profile.bounds.alpha, (0.0, 0.0, 0.0)))
    model.meta["profile"] = profile
    return model


def standard_field(n: int = 2, magnetic: BumpMagneticField | None = None) -> FieldModel:
    """W(r) = (1 + r)^-2 outside R = 1, smoothed inside r = 1/2."""
    return radial_field(ShiftedPowerProfile(1.0, 2.0, 1.0), n, magnetic=magnetic, name="standard")


def free_field(n: int = 2, R: float = 1.0) -> FieldModel:
    return radial_field(ZeroProfile(R), n, name="free")
