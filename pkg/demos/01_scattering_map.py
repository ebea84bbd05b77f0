"""Scattering by W(r) = (1 + r)^-2: trajectories, the scattering map and the deflection function.

The swept polar angle of each simulated orbit is compared with the radial
quadrature; far out the deflection decays like q^-alpha.
"""
import math

import numpy as np

from invscat import EnergyContext, deflection_quadrature, scattering_map, standard_field
from invscat.radial import RadialScatteringContext, deflection_ode, impact_setup

model = standard_field(2)
profile = model.meta["profile"]

for ctx in (EnergyContext(10.0), EnergyContext(110.0, 10.0)):
    rc = RadialScatteringContext.build(ctx, profile)
    print(f"\n{ctx.regime}: E = {ctx.E}, |v| at infinity = {ctx.speed:.6f}, beta = {rc.beta:.6f}")
    print(f"{'q':>10} {'g_quadrature':>16} {'g_ODE':>16} {'rel diff':>10} {'turn angle':>12}")
    for q in rc.beta * np.array([1.0, 2.0, 5.0, 10.0]):
        g = deflection_quadrature(rc, q)
        g_ode, asym = deflection_ode(rc, q, return_run=True)
        v = impact_setup(ctx, q)[0]
        turn = math.atan2(v[0] * asym.v_plus[1] - v[1] * asym.v_plus[0], v @ asym.v_plus)
        print(f"{q:10.4f} {g:16.12f} {g_ode:16.12f} {abs(g_ode / g - 1):10.1e} {turn:12.3e}")

# the map itself: incoming (v_-, x_-) -> outgoing (v_+, x_+)
ctx = EnergyContext(10.0)
v, x = impact_setup(ctx, 6.0)
a = scattering_map(model, ctx, v, x)
print("\nv_- =", v, " x_- =", x)
print("v_+ =", a.v_plus, " x_+ =", a.x_plus)
print(f"|v_+| - |v_-| = {np.linalg.norm(a.v_plus) - ctx.speed:.1e}")
