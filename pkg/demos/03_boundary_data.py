"""Nontrapping constants, escape, and boundary data on the sphere |x| = R.

Above the threshold E_1 every trajectory entering the ball of radius R
leaves it once; its entry/exit states (q0, k0) -> (q, k) are the boundary
data, which re-integration from (q0, k0) must reproduce.
"""
import numpy as np

from invscat import EnergyContext, energy_threshold, extract_boundary_data, nontrapping_constants, standard_field
from invscat.scatmap import reintegrate_boundary

model, R = standard_field(2), 1.0
b = model.bounds
print(f"declared bounds: alpha = {b.alpha}, beta = {b.beta}")
for c in (None, 10.0):
    E1 = energy_threshold(b, model.n, R, c)
    print(f"threshold E_1 ({'nonrel' if c is None else f'c = {c}'}): {E1:.6f}")

ctx = EnergyContext(10.0)
rep = nontrapping_constants(ctx, b, model.n)
print(f"E = {ctx.E}: C_E = {rep.C_E:.7f}, R_E = {rep.R_E:.7f}")

rng = np.random.default_rng(0)
print(f"\n{'|q0|-R':>9} {'|q|-R':>9} {'s':>8} {'reint x':>9} {'reint v':>9}")
for _ in range(6):
    u = rng.normal(size=2)
    u /= np.linalg.norm(u)
    w = np.array([-u[1], u[0]]) * rng.uniform(-0.9, 0.9)
    d = extract_boundary_data(model, ctx, ctx.speed * u, w, R)
    ex, ev = reintegrate_boundary(model, ctx, d)
    print(f"{np.linalg.norm(d.q0) - R:9.1e} {np.linalg.norm(d.q) - R:9.1e} {d.s:8.4f} {ex:9.1e} {ev:9.1e}")

try:
    extract_boundary_data(model, EnergyContext(5.0), ctx.speed * u, w, R)
except ValueError as exc:
    print("\nE = 5:", exc)
