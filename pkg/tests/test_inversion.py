import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invscat import (DeflectionCurve, EnergyContext, ShiftedPowerProfile, ShortRangeBounds, SoftCoreProfile,
                     ZeroProfile, abel_transform, consistency_check_H, reconstruct_chi, reconstruct_W, r_min,
                     sample_deflection)
from invscat.inversion import chi_prefactor, compute_beta_prime, sigma_grid
from invscat.radial import RadialScatteringContext

ATOL_FREE = 1e-12


def free_pipeline(rc):
    curve = sample_deflection(rc, 24)
    table = abel_transform(curve)
    return curve, table, reconstruct_chi(table)


def test_free_abel_transform(rc_free_nr, rc_free_rel):
    for rc in (rc_free_nr, rc_free_rel):
        _, table, _ = free_pipeline(rc)
        k = rc.ctx.angular_factor
        np.testing.assert_allclose(table.H, math.pi * np.sqrt(table.sigma) / k, rtol=1e-12)
        np.testing.assert_allclose(table.dH, math.pi / (2 * k * np.sqrt(table.sigma)), rtol=1e-12)
        assert np.max(np.abs(table.K)) <= ATOL_FREE


def test_free_chi_closed_form(rc_free_nr, rc_free_rel):
    for rc in (rc_free_nr, rc_free_rel):
        _, table, chi = free_pipeline(rc)
        E = rc.ctx.E
        pref = math.sqrt(2 * E) if not rc.ctx.relativistic else rc.ctx.c * math.sqrt(E * E - rc.ctx.c**4) / E
        np.testing.assert_allclose(chi.chi, pref * np.sqrt(table.sigma), rtol=1e-12)
        # chi = 1 / r_min(sigma^-1/2)
        q = table.sigma[::16] ** -0.5
        np.testing.assert_allclose(chi(table.sigma[::16]), [1 / r_min(rc, qi) for qi in q], rtol=1e-12)


def test_chi_prefactor_limit():
    # c -> infinity at fixed kinetic energy recovers sqrt(2 E_kin)
    vals = [chi_prefactor(EnergyContext(c * c + 10.0, c)) for c in (10.0, 100.0, 1000.0)]
    assert abs(vals[-1] - math.sqrt(20)) < 1e-4
    assert abs(vals[0] - math.sqrt(20)) > abs(vals[1] - math.sqrt(20)) > abs(vals[2] - math.sqrt(20))
    assert chi_prefactor(EnergyContext(10.0)) == math.sqrt(20)


def test_free_reconstruction_is_zero(rc_free_nr, rc_free_rel):
    for rc in (rc_free_nr, rc_free_rel):
        _, _, chi = free_pipeline(rc)
        res = reconstruct_W(chi, beta_prime=rc.beta_prime)
        assert np.max(np.abs(res.W_rec)) <= 1e-8


def test_abel_linearity(pipeline_nr):
    # the transform is linear in the deviation from the free sweep: D -> a D gives H_free + a (H - H_free)
    curve = pipeline_nr[0]
    sig = sigma_grid(curve.beta, 16)
    k = curve.ctx.angular_factor
    H_free = math.pi * np.sqrt(sig) / k
    H = abel_transform(curve, sig).H
    for a in (-1.0, 0.5, 2.5):
        scaled = DeflectionCurve(curve.q, a * curve.D, curve.ctx, curve.alpha, beta=curve.beta)
        np.testing.assert_allclose(abel_transform(scaled, sig).H, H_free + a * (H - H_free), rtol=1e-12)


def test_H_increasing_and_small_sigma_limit(pipeline_nr, pipeline_rel):
    for curve, table, _ in (pipeline_nr, pipeline_rel):
        assert np.all(np.diff(table.H) > 0)
        k = curve.ctx.angular_factor
        assert table.H[0] / math.sqrt(table.sigma[0]) == pytest.approx(math.pi / k, rel=1e-6)


def test_H_matches_direct_quadrature(pipeline_nr):
    # H(sigma) = int_0^sigma g(u^-1/2) du / (2 sqrt(u) sqrt(sigma - u)), u = sigma sin^2 psi
    from scipy.integrate import quad
    curve, table, _ = pipeline_nr
    for i in (20, 80, 127):
        s = table.sigma[i]
        val = quad(lambda p: float(curve(s**-0.5 / math.sin(p))), 1e-9, math.pi / 2, epsrel=1e-12, limit=400)[0]
        # below psi = 1e-9 g ~ pi/q contributes pi sqrt(s) (1 - cos(1e-9))
        assert table.H[i] == pytest.approx(val, rel=1e-8)


@pytest.mark.parametrize("which", ["nr", "rel"])
def test_abel_identities(which, pipeline_nr, pipeline_rel, standard_profile):
    table = (pipeline_nr if which == "nr" else pipeline_rel)[1]
    res = consistency_check_H(table, standard_profile)
    assert res["H"] <= 1e-6
    assert res["dH"] <= 1e-6


def test_free_consistency(rc_free_nr):
    _, table, _ = free_pipeline(rc_free_nr)
    res = consistency_check_H(table, ZeroProfile(1.0))
    assert res["H"] <= 1e-10 and res["dH"] <= 1e-10


def test_chi_monotone_and_phi_roundtrip(pipeline_nr, pipeline_rel):
    for _, table, chi in (pipeline_nr, pipeline_rel):
        assert np.all(np.diff(chi.chi) > 0)
        np.testing.assert_allclose(chi.phi(chi.chi), table.sigma, rtol=1e-10)
        # chi(0+) = 0
        assert chi(1e-20) < 1e-8


def test_chi_matches_inverse_perihelion(rc_nr, pipeline_nr):
    _, table, chi = pipeline_nr
    s = table.sigma[::8]
    truth = np.array([1 / r_min(rc_nr, x**-0.5) for x in s])
    np.testing.assert_allclose(chi(s), truth, rtol=1e-6)


def test_reconstruction_identity(rc_nr, pipeline_nr, standard_profile):
    _, table, chi = pipeline_nr
    res = reconstruct_W(chi, beta_prime=rc_nr.beta_prime, profile=standard_profile)
    # 2 (E - W_rec(1/chi(u))) u - chi(u)^2 = 0
    u = chi.phi(1 / res.s)
    resid = 2 * (rc_nr.E - res.W_rec) * u - (1 / res.s) ** 2
    assert np.max(np.abs(resid)) <= 1e-6


def test_reconstruction_identity_rel(rc_rel, pipeline_rel):
    _, _, chi = pipeline_rel
    res = reconstruct_W(chi, beta_prime=rc_rel.beta_prime)
    E, c = rc_rel.E, rc_rel.ctx.c
    phi = chi.phi(1 / res.s)
    resid = ((E - res.W_rec) ** 2 - c**4) * phi - E * E / (c * c * res.s**2)
    assert np.max(np.abs(resid)) <= 1e-6


@pytest.mark.parametrize("which", ["nr", "rel"])
def test_round_trip_standard(which, rc_nr, rc_rel, pipeline_nr, pipeline_rel, standard_profile):
    rc, (_, _, chi) = (rc_nr, pipeline_nr) if which == "nr" else (rc_rel, pipeline_rel)
    res = reconstruct_W(chi, beta_prime=rc.beta_prime, profile=standard_profile)
    assert res.s[0] >= rc.beta_prime and res.s[-1] == pytest.approx(5 * rc.beta_prime)
    assert res.summary()["sup_rel_err"] <= 1e-3


@pytest.mark.parametrize("profile", [ShiftedPowerProfile(-1.0, 3.0, 1.0), SoftCoreProfile(1.0, 2.0, 1.0),
                                     SoftCoreProfile(0.5, 2.5, 2.0), ShiftedPowerProfile(2.0, 1.5, 1.0)])
@pytest.mark.parametrize("ctx", [EnergyContext(10.0), EnergyContext(110.0, 10.0)])
def test_round_trip_builtin_profiles(profile, ctx):
    rc = RadialScatteringContext.build(ctx, profile)
    chi = reconstruct_chi(abel_transform(sample_deflection(rc)))
    res = reconstruct_W(chi, beta_prime=rc.beta_prime, profile=profile)
    assert res.summary()["sup_rel_err"] <= 1e-3


def test_sigma_grid_convergence(rc_nr, standard_profile):
    curve = sample_deflection(rc_nr)
    W = []
    for n in (64, 128):
        chi = reconstruct_chi(abel_transform(curve, sigma_grid(rc_nr.beta, n)))
        W.append(reconstruct_W(chi, beta_prime=rc_nr.beta_prime).W_rec)
    assert np.max(np.abs(W[0] / W[1] - 1)) <= 1e-4


def test_relativistic_limit_ratio(standard_profile):
    # chi_rel(E_kin + c^2) -> chi_nr(E_kin) at O(c^-2)
    rc_nr = RadialScatteringContext.build(EnergyContext(10.0), standard_profile)
    sig = sigma_grid(rc_nr.beta, 64) * 0.9
    chi_nr = reconstruct_chi(abel_transform(sample_deflection(rc_nr), sig))
    gaps = []
    for c in (10.0, 20.0):
        rc = RadialScatteringContext.build(EnergyContext(c * c + 10.0, c), standard_profile)
        chi = reconstruct_chi(abel_transform(sample_deflection(rc), sig))
        gaps.append(np.max(np.abs(chi.chi / chi_nr.chi - 1)))
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.2)


def test_beta_prime_asserted(standard_profile):
    ctx = EnergyContext(10.0)
    bp = compute_beta_prime(ctx, standard_profile.bounds, standard_profile)
    rc = RadialScatteringContext.build(ctx, standard_profile)
    assert bp == pytest.approx(rc.beta_prime, rel=1e-15)
    assert r_min(rc, rc.beta) <= bp


def test_reconstruct_rejects_radii_inside_beta_prime(rc_nr, pipeline_nr):
    chi = pipeline_nr[2]
    with pytest.raises(ValueError, match="radii"):
        reconstruct_W(chi, s=np.array([0.5 * rc_nr.beta_prime]), beta_prime=rc_nr.beta_prime)


def test_abel_rejects_uncovered_sigma(pipeline_nr):
    curve = pipeline_nr[0]
    with pytest.raises(ValueError, match="below the sampled range"):
        abel_transform(curve, np.array([0.5, 2.0]) / curve.beta**2)
    c2 = DeflectionCurve(curve.q, curve.D, curve.ctx, curve.alpha, tail=False)
    with pytest.raises(ValueError, match="tail model disabled"):
        abel_transform(c2)


def test_misdeclared_alpha_detected(rc_nr):
    curve = sample_deflection(rc_nr, 24)
    wrong = DeflectionCurve(curve.q, curve.D, curve.ctx, 6.0, beta=curve.beta)
    with pytest.raises(ArithmeticError, match="alpha misdeclared"):
        reconstruct_chi(abel_transform(wrong))


def test_reconstruction_csv(tmp_path, rc_nr, pipeline_nr, standard_profile):
    res = reconstruct_W(pipeline_nr[2], beta_prime=rc_nr.beta_prime, profile=standard_profile, n=20)
    res.to_csv(tmp_path / "w.csv")
    from invscat.io import read_csv
    meta, cols = read_csv(tmp_path / "w.csv")
    assert list(cols) == ["s", "W_rec", "W_true", "abs_err", "rel_err"]
    assert meta["beta_prime"] == rc_nr.beta_prime
    np.testing.assert_array_equal(cols["W_rec"], res.W_rec)


@settings(max_examples=12, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(1.5, 3.5), st.floats(5.0, 40.0))
def test_round_trip_property(A, alpha, E):
    prof = ShiftedPowerProfile(A, alpha, 1.0)
    rc = RadialScatteringContext.build(EnergyContext(E), prof)
    chi = reconstruct_chi(abel_transform(sample_deflection(rc, 48)))
    assert np.all(np.diff(chi.chi) > 0)
    res = reconstruct_W(chi, beta_prime=rc.beta_prime, profile=prof, n=40)
    assert res.summary()["sup_rel_err"] <= 1e-3
