import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_bvp

from mrhomog.macroflow import (FlowConfig, Profile, couette, couette_fields, lambda_param,
                               poiseuille, reduced_system_residual, shear_curve,
                               shear_stress, with_lambda)

BASE = FlowConfig(C_p=-1.0, gamma=1.0, K=100.0, K1=1e-2, R_m=1e-2,
                  nu_s=9.53, beta_s=9.28, mu_hs22=3.71)


def at_lambda(lam, **kw):
    return with_lambda(FlowConfig(**{**BASE.__dict__, **kw}), lam)


def test_lambda_zero_field():
    assert lambda_param(FlowConfig(K=0.0, mu_hs22=3.71)) == 0.0


def test_lambda_arithmetic():
    expected = 100 * math.sqrt(2e-2 * 3.71 * 9.28 / 9.53)
    assert lambda_param(BASE) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("name", ["beta_s", "mu_hs22", "R_m"])
def test_negative_radicand_names_coefficient(name):
    cfg = FlowConfig(**{**BASE.__dict__, name: -1.0})
    with pytest.raises(ValueError, match=name):
        lambda_param(cfg)


def test_invalid_config():
    with pytest.raises(ValueError, match="nu_s"):
        FlowConfig(nu_s=0.0)
    with pytest.raises(ValueError, match="n_samples"):
        FlowConfig(n_samples=1)


def test_overflow_beyond_limit():
    prof = poiseuille(at_lambda(700.0))
    assert np.all(np.isfinite(prof.v1)) and np.all(np.isfinite(prof.H1))
    with pytest.raises(OverflowError):
        poiseuille(at_lambda(701.0))
    with pytest.raises(OverflowError):
        couette(at_lambda(701.0))


def test_poiseuille_small_lambda_midpoint():
    prof = poiseuille(at_lambda(1e-8, nu_s=2.0), x2=[0.0, 0.5, 1.0])
    assert prof.v1[1] == pytest.approx(1 / 16, abs=1e-12)


def test_poiseuille_lambda_five_midpoint():
    prof = poiseuille(at_lambda(5.0, nu_s=1.0), x2=[0.5])
    expected = (1 / 25) * (1 - 2 * math.sinh(2.5) / math.sinh(5))
    assert prof.v1[0] == pytest.approx(expected, abs=1e-8)


def test_poiseuille_small_lambda_parabola():
    # the momentum balance (nu_s / 2) v'' = C_p fixes the Newtonian profile
    cfg = at_lambda(1e-8, nu_s=2.0)
    prof = poiseuille(cfg)
    x = prof.x2
    assert np.abs(prof.v1 - cfg.C_p / cfg.nu_s * x * (x - 1)).max() <= 1e-10


@pytest.mark.parametrize("lam", [0.0, 1e-7, 0.3, 1.0, 5.0, 20.0, 300.0])
def test_poiseuille_boundary_and_symmetry(lam):
    prof = poiseuille(at_lambda(lam))
    assert prof.v1[0] == 0.0 and prof.v1[-1] == 0.0
    assert prof.H1[0] == BASE.K1
    assert np.abs(prof.v1 - prof.v1[::-1]).max() <= 1e-12 * max(prof.max_velocity, 1e-300)


def test_poiseuille_matches_bvp_solver():
    cfg = at_lambda(5.0, nu_s=1.0)
    lam = lambda_param(cfg)
    q = 2 * cfg.C_p / cfg.nu_s
    x = np.linspace(0, 1, 101)
    sol = solve_bvp(lambda t, y: np.vstack([y[1], lam ** 2 * y[0] + q]),
                    lambda a, b: np.array([a[0], b[0]]), x, np.zeros((2, x.size)), tol=1e-12,
                    max_nodes=100000)
    assert sol.success
    assert np.abs(poiseuille(cfg, x).v1 - sol.sol(x)[0]).max() <= 1e-8


def test_couette_small_lambda():
    prof = couette(at_lambda(1e-8, C_p=0.0))
    assert np.abs(prof.v1 - prof.x2).max() <= 1e-10


def test_couette_lambda_three_top_velocity():
    prof = couette(at_lambda(3.0, C_p=0.0, nu_s=1.0), x2=[1.0])
    e = math.exp(3.0)
    assert prof.v1[0] == pytest.approx((e - 1 / e) / (3 * (e + 1 / e)), rel=1e-13)
    assert prof.v1[0] == pytest.approx(math.tanh(3.0) / 3, rel=1e-13)


def test_couette_unforced_is_zero():
    prof = couette(at_lambda(4.0, C_p=0.0, gamma=0.0))
    assert np.all(prof.v1 == 0.0)
    assert np.all(prof.H1 == BASE.K1)


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 3.0, 20.0])
@pytest.mark.parametrize("C_p", [0.0, -1.0])
def test_couette_boundary_conditions(lam, C_p):
    cfg = at_lambda(lam, C_p=C_p, gamma=0.7)
    prof = couette(cfg)
    assert prof.v1[0] == 0.0 and prof.H1[0] == cfg.K1
    h = 1e-3
    pts = 1.0 + h * np.arange(-2, 3)
    v, _ = couette_fields(cfg, pts)
    slope = (v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * h)
    assert slope == pytest.approx(cfg.gamma, abs=1e-6)


@pytest.mark.parametrize("lam", [0.01, 1.0, 5.0, 20.0])
def test_reduced_system_residuals(lam):
    for flow in (poiseuille, couette):
        cfg = at_lambda(lam, n_samples=1000)
        rep = reduced_system_residual(flow(cfg), cfg)
        assert rep.ok(1e-6), (flow.__name__, rep)


def test_residual_negative_control():
    cfg = at_lambda(2.0, n_samples=50)
    x = np.linspace(0, 1, 50)
    rep = reduced_system_residual(Profile("zero", x, 0 * x, 0 * x + cfg.K1, 2.0), cfg)
    assert rep.momentum == pytest.approx(abs(cfg.C_p))
    assert not rep.ok()


def test_residual_needs_uniform_grid():
    cfg = at_lambda(1.0)
    with pytest.raises(ValueError, match="uniform"):
        reduced_system_residual(poiseuille(cfg, x2=[0, 0.1, 0.5, 0.6, 1.0]), cfg)


def test_linear_in_forcing():
    cfg = at_lambda(5.0)
    a = poiseuille(cfg).v1
    b = poiseuille(FlowConfig(**{**cfg.__dict__, "C_p": 2 * cfg.C_p})).v1
    assert np.abs(b - 2 * a).max() <= 1e-12 * np.abs(a).max()
    c0 = FlowConfig(**{**cfg.__dict__, "C_p": 0.0})
    a = couette(c0).v1
    b = couette(FlowConfig(**{**c0.__dict__, "gamma": 2.0})).v1
    assert np.abs(b - 2 * a).max() <= 1e-12 * np.abs(a).max()


def test_monotone_damping():
    peaks = [poiseuille(at_lambda(lam)).max_velocity for lam in (0.0, 1.0, 5.0, 20.0)]
    assert all(a >= b for a, b in zip(peaks, peaks[1:]))
    assert peaks[0] > peaks[-1]


def test_sampling_is_pointwise():
    cfg = at_lambda(5.0)
    a = poiseuille(FlowConfig(**{**cfg.__dict__, "n_samples": 201}))
    b = poiseuille(FlowConfig(**{**cfg.__dict__, "n_samples": 401}))
    assert np.array_equal(a.x2, b.x2[::2])
    assert np.array_equal(a.v1, b.v1[::2])
    assert np.array_equal(a.H1, b.H1[::2])


def test_series_and_exponential_branches_agree():
    for flow in (poiseuille, couette):
        lo = flow(at_lambda(1.0 - 1e-12)).v1
        hi = flow(at_lambda(1.0)).v1
        assert np.abs(lo - hi).max() <= 1e-12
        lo = flow(at_lambda(1e-6 * (1 - 1e-9))).v1
        hi = flow(at_lambda(1e-6)).v1
        assert np.abs(lo - hi).max() <= 1e-12


def test_shear_stress_no_yield_without_streamwise_field():
    cfg = FlowConfig(**{**BASE.__dict__, "K1": 0.0})
    assert shear_stress(cfg, 0.0) == 0.0


def test_shear_stress_newtonian_limit():
    cfg = FlowConfig(**{**BASE.__dict__, "K": 0.0})
    assert shear_stress(cfg, 1.0) == pytest.approx(cfg.nu_s / 2, rel=1e-15)


def test_shear_stress_closed_form():
    cfg = at_lambda(3.0)
    lam = lambda_param(cfg)
    for g in (0.0, 0.5, 2.0):
        expected = 0.5 * cfg.nu_s * g / math.cosh(lam) + cfg.beta_s * cfg.K * cfg.K1
        assert shear_stress(cfg, g) == pytest.approx(expected, rel=1e-12)


def test_shear_curve_ignores_pressure_gradient():
    a = shear_curve(BASE, [0.0, 1.0])
    b = shear_curve(FlowConfig(**{**BASE.__dict__, "C_p": 0.0}), [0.0, 1.0])
    assert a == b
    assert a[0][1] > 0 and a[1][1] > a[0][1]


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.0, 700.0), C_p=st.floats(-5, 5), gamma=st.floats(-5, 5))
def test_profiles_finite_and_bounded(lam, C_p, gamma):
    cfg = at_lambda(lam, C_p=C_p, gamma=gamma)
    p = poiseuille(cfg)
    c = couette(cfg)
    for prof in (p, c):
        assert np.all(np.isfinite(prof.v1)) and np.all(np.isfinite(prof.H1))
    # the damped profile never exceeds the Newtonian one
    assert p.max_velocity <= abs(C_p) / (4 * cfg.nu_s) * (1 + 1e-12) + 1e-300
    assert np.abs(p.v1 - p.v1[::-1]).max() <= 1e-12 * max(p.max_velocity, 1e-300)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.0, 20.0), C_p=st.floats(-5, 5))
def test_residuals_random(lam, C_p):
    cfg = at_lambda(lam, C_p=C_p, n_samples=1001)
    for flow in (poiseuille, couette):
        assert reduced_system_residual(flow(cfg), cfg).ok(1e-6)
