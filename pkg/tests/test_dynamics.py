import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invscat import (BumpMagneticField, EnergyContext, FieldModel, RadialPotential, ShortRangeBounds,
                     SoftCoreProfile, energy_threshold, free_field, integrate, nontrapping_constants,
                     scattering_map, shoot_from_minus_infinity, standard_field, verify_escape)
from invscat.dynamics import fit_outgoing_asymptote, start_time
from invscat.radial import impact_setup

UNIT = ShortRangeBounds(2.0, (1.0, 1.0, 3.0))


def unit_bound_field():
    """Soft core A = 0.2 declared with beta_0 = beta_1 = 1 (its true constants are smaller)."""
    return FieldModel(2, potential=RadialPotential(SoftCoreProfile(0.2, 2.0, 1.0)), bounds=UNIT,
                      radial_radius=1.0, name="unit")


def test_energy_context_validation():
    with pytest.raises(ValueError):
        EnergyContext(-1.0)
    with pytest.raises(ValueError):
        EnergyContext(99.0, 10.0)
    ctx = EnergyContext(110.0, 10.0)
    assert ctx.speed == pytest.approx(10 * math.sqrt(1 - 1e4 / 110.0**2), rel=1e-15)
    assert 0 < ctx.speed < 10
    assert EnergyContext(10.0).speed == pytest.approx(math.sqrt(20), rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(1.5, 30))
def test_momentum_velocity_roundtrip(p, c):
    ctx = EnergyContext(2 * c * c, c)
    p = np.array(p)
    v = ctx.velocity(p)
    assert np.linalg.norm(v) < c
    np.testing.assert_allclose(ctx.momentum(v), p, rtol=1e-9, atol=1e-9)


def test_nontrapping_constants_unit_bounds():
    rep = nontrapping_constants(EnergyContext(10.0), UNIT, 2)
    assert rep.C_E == pytest.approx(20 / (4 * (1 + math.sqrt(22))), rel=1e-14)
    assert rep.R_E == pytest.approx(math.sqrt(2 / rep.C_E) - 1, rel=1e-14)
    assert rep.C_E == pytest.approx(0.8786704190055784, rel=1e-14)
    assert rep.R_E == pytest.approx(0.5086968893483448, rel=1e-14)


def test_nontrapping_constants_monotone_in_energy():
    C = [nontrapping_constants(EnergyContext(E), UNIT, 2).C_E for E in np.geomspace(0.1, 1e6, 40)]
    assert np.all(np.diff(C) > 0)
    assert C[-1] > 100


def test_relativistic_constant_vanishes_at_rest_energy():
    c = 10.0
    C = [nontrapping_constants(EnergyContext(c * c + d, c), UNIT, 2).C_E for d in (1e-1, 1e-3, 1e-6)]
    assert C[0] > C[1] > C[2] > 0
    assert C[2] < 1e-6


def test_energy_threshold_makes_R_E_equal_R():
    for c in (None, 30.0):
        E1 = energy_threshold(UNIT, 2, 1.0, c)
        rep = nontrapping_constants(EnergyContext(E1, c), UNIT, 2)
        assert rep.R_E == pytest.approx(1.0, rel=1e-9)


def test_free_motion_is_straight():
    ctx = EnergyContext(10.0)
    x0, v0 = np.array([0.3, -2.0]), np.array([3.0, math.sqrt(20 - 9)])
    traj = integrate(free_field(2), ctx, x0, v0, (0.0, 5.0))
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(traj.position(t), x0 + t[:, None] * v0, atol=1e-13)


def test_relativistic_free_momentum_constant():
    ctx = EnergyContext(110.0, 10.0)
    v0 = ctx.speed * np.array([0.6, 0.8])
    traj = integrate(free_field(2), ctx, np.zeros(2), v0, (0.0, 3.0))
    assert np.all(traj.y[:, 2:] == traj.y[0, 2:])
    np.testing.assert_allclose(traj.velocities(), np.tile(v0, (len(traj.t), 1)), rtol=1e-15)


def test_initial_energy_checked():
    with pytest.raises(ValueError, match="energy residual"):
        integrate(standard_field(2), EnergyContext(10.0), [2.0, 0.0], [0.0, 1.0], (0, 1))


@pytest.mark.parametrize("ctx", [EnergyContext(10.0), EnergyContext(110.0, 10.0)])
def test_conservation_along_radial_orbit(ctx):
    model = standard_field(2)
    v, x = impact_setup(ctx, 5.0)
    traj, _, _ = shoot_from_minus_infinity(model, ctx, v, x)
    assert traj.max_energy_drift <= 1e-9
    L = traj.angular_momentum()
    # x ^ p is conserved (p = v in the nonrelativistic case); q = -x_-.v_-^perp
    q = 5.0 * (ctx.momentum(v)[1] / ctx.speed)
    assert np.max(np.abs(L - q)) <= 1e-8 * q


def test_planar_motion_stays_planar():
    ctx = EnergyContext(10.0)
    model = standard_field(3)
    v = np.array([0.0, ctx.speed, 0.0])
    x = np.array([0.4, 0.0, 0.0])
    traj, _, _ = shoot_from_minus_infinity(model, ctx, v, x)
    assert np.max(np.abs(traj.y[:, [2, 5]])) <= 1e-12


def test_relativistic_speed_below_c():
    ctx = EnergyContext(400.0, 10.0)
    v, x = impact_setup(ctx, 2.0)
    traj, _, _ = shoot_from_minus_infinity(standard_field(2), ctx, v, x)
    assert np.max(np.linalg.norm(traj.velocities(), axis=1)) < ctx.c


def test_free_scattering_map_is_identity():
    for ctx in (EnergyContext(10.0), EnergyContext(110.0, 10.0)):
        v, x = impact_setup(ctx, 0.7, 3)
        a = scattering_map(free_field(3), ctx, v, x)
        assert np.max(np.abs(a.v_plus - v)) <= 1e-12
        assert np.max(np.abs(a.x_plus - x)) <= 1e-10


def test_incoming_correction_decays_like_power_of_start_time():
    model, ctx = standard_field(2), EnergyContext(10.0)
    v, x = impact_setup(ctx, 3.0)
    norms = [shoot_from_minus_infinity(model, ctx, v, x, t_start=T, t_final=-T + 1.0)[1]
             for T in (100.0, 200.0, 400.0)]
    alpha = model.bounds.alpha
    for a, b in zip(norms, norms[1:]):
        assert a / b == pytest.approx(2 ** (alpha - 1), rel=0.05)


def test_start_time_rule_and_cap():
    model, ctx = standard_field(2), EnergyContext(10.0)
    b, s = model.bounds, ctx.speed
    T = start_time(model, ctx, np.zeros(2), 1e-9)
    bound = 2 * b.beta1 * (1 + s * T / 2) ** (-b.alpha) * (1 + s) / ((b.alpha - 1) * s)
    assert bound <= 1e-10 * (1 + 1e-9)
    slow = FieldModel(2, potential=model.potential, bounds=ShortRangeBounds(1.01, (1, 2, 6)))
    assert start_time(slow, ctx, np.zeros(2), 1e-9) == 1e6


def test_reversal_symmetry():
    model, ctx = standard_field(2), EnergyContext(10.0)
    v, x = impact_setup(ctx, 2.0)
    fwd = scattering_map(model, ctx, v, x)
    back = scattering_map(model, ctx, -fwd.v_plus, fwd.x_plus)
    assert np.max(np.abs(back.v_plus + v)) <= 1e-8
    assert np.max(np.abs(back.x_plus - x)) <= 1e-7


def test_map_preserves_speed_and_deflection_vanishes_far_out():
    model, ctx = standard_field(2), EnergyContext(10.0)
    angles = []
    for q in (5.0, 50.0, 500.0):
        v, x = impact_setup(ctx, q)
        a = scattering_map(model, ctx, v, x)
        assert abs(np.linalg.norm(a.v_plus) - ctx.speed) <= 1e-9
        angles.append(abs(math.atan2(a.v_plus[0], a.v_plus[1])))
    assert angles[0] > angles[1] > angles[2]
    # |D| ~ q^-alpha up to O(1/q) corrections of the shifted profile
    slope = math.log(angles[1] / angles[2]) / math.log(10.0)
    assert slope == pytest.approx(model.bounds.alpha, abs=0.15)


def test_magnetic_scattering_conserves_energy():
    ctx = EnergyContext(10.0)
    model = standard_field(3, BumpMagneticField(1.0, 0.9, [0.0, 0.0, 1.0]))
    v = ctx.speed * np.array([0.0, 1.0, 0.0])
    traj, _, _ = shoot_from_minus_infinity(model, ctx, v, np.array([0.2, 0.0, 0.1]))
    assert traj.max_energy_drift <= 1e-9
    v_plus, _, res = fit_outgoing_asymptote(traj)
    assert abs(np.linalg.norm(v_plus) - ctx.speed) <= 1e-9


def test_escape_estimate_on_random_trajectories():
    model, ctx = unit_bound_field(), EnergyContext(10.0)
    rep = nontrapping_constants(ctx, model.bounds, 2)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x0 = rng.normal(size=2)
        x0 *= rep.R_E * rng.random() / np.linalg.norm(x0)
        d = rng.normal(size=2)
        v0 = d / np.linalg.norm(d) * float(ctx.speed_at(model.V(x0)))
        out = verify_escape(model, ctx, rep, x0, v0, horizon=20.0)
        assert out["escaped"]
        assert out["min_ratio"] >= 1 - 1e-6
        assert out["min_Iddot_over_E"] >= 1 - 1e-6


def test_trajectory_csv(tmp_path):
    ctx = EnergyContext(10.0)
    traj = integrate(standard_field(2), ctx, [3.0, 0.0], [0.0, float(ctx.speed_at(standard_field(2).V([3.0, 0.0])))],
                     (0, 1))
    traj.to_csv(tmp_path / "t.csv", header={"E": 10.0})
    from invscat.io import read_csv
    meta, cols = read_csv(tmp_path / "t.csv")
    assert list(cols) == ["t", "x1", "x2", "v1", "v2", "energy_residual"]
    assert meta["E"] == 10.0
    assert np.max(np.abs(cols["energy_residual"])) <= 1e-9


def test_high_energy_step_does_not_skip_interaction():
    # far out the force is ~0; an uncapped step would jump over the region of size ~1
    from invscat.radial import RadialScatteringContext, deflection_quadrature
    model, ctx = standard_field(2), EnergyContext(1000.0)
    rc = RadialScatteringContext.build(ctx, model.meta["profile"])
    q = 1.5 * rc.beta
    v, x = impact_setup(ctx, q)
    a = scattering_map(model, ctx, v, x)
    turn = math.atan2(v[0] * a.v_plus[1] - v[1] * a.v_plus[0], v @ a.v_plus)
    # outgoing direction turned by pi - sweep
    assert abs(turn) == pytest.approx(abs(math.pi - q * deflection_quadrature(rc, q)), abs=1e-9)
    assert abs(turn) > 1e-4


def test_seam_crossings_keep_energy():
    # chords through the C^2 core seam at r = 1/2: steps must not straddle it
    model, ctx = standard_field(2), EnergyContext(10.0)
    assert model.seams == (0.5,)
    assert standard_field(3, BumpMagneticField(0.8, 0.9, [0.0, 0.0, 1.0])).seams == (0.5, 0.9)
    worst = 0.0
    for b in np.linspace(0.0, 0.49, 15):
        x0 = np.array([-1.0, b])
        v0 = np.array([float(ctx.speed_at(model.V(x0))), 0.0])
        traj = integrate(model, ctx, x0, v0, (0.0, 0.5))
        worst = max(worst, traj.max_energy_drift)
    assert worst <= 1e-9
