import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsr import theory as th
from tsr.errors import UnsupportedRegimeError, UnsupportedScheduleError
from tsr.schedule import Schedule
from tsr.scorefield import GaussianMixture, MixtureGeometry

VPS = Schedule.vp()
PAIR = GaussianMixture.uniform([[-5.0], [5.0]], 0.1)
GEOM = MixtureGeometry.of(PAIR)
STD = GaussianMixture([1.0], [[0.0]], 1.0)
TWO = GaussianMixture.uniform([[-2.0], [2.0]], 0.5)


def _quadrature_error(mus, sigma, t, k, lo=-8.0, hi=8.0, nodes=20001):
    """Trapezoid evaluation of E_{p_t^k} |sum_n (w1_n - wk_n)(x - alpha mu_n)| / var_k, 1D, equal weights."""
    a, s = VPS.alpha_sigma(t)
    v1 = a * a * sigma**2 + s * s
    vk = a * a * sigma**2 / k + s * s
    x = np.linspace(lo, hi, nodes)[:, None]
    c = a * np.asarray(mus, dtype=float)[None, :]

    def resp(var):
        lg = -0.5 * (x - c) ** 2 / var
        lg -= lg.max(1, keepdims=True)
        w = np.exp(lg)
        return w / w.sum(1, keepdims=True)

    dens = np.mean(np.exp(-0.5 * (x - c) ** 2 / vk) / np.sqrt(2 * np.pi * vk), axis=1)
    integrand = dens * np.abs(((resp(v1) - resp(vk)) * (x - c)).sum(1)) / vk
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return trapezoid(integrand, x[:, 0])


def test_error_zero_cases():
    assert th.error_mc(PAIR, VPS, 0.5, 1.0, 2000, 0) == (0.0, 0.0)
    single = GaussianMixture([1.0], [[3.0]], 0.2)
    assert th.error_mc(single, VPS, 0.5, 4.0, 2000, 0) == (0.0, 0.0)


def test_error_matches_quadrature():
    est, se = th.error_mc(PAIR, VPS, 0.5, 4.0, 20000, 0)
    ref = _quadrature_error([-5, 5], 0.1, 0.5, 4.0)
    assert se > 0 and abs(est - ref) <= 3 * se


@pytest.mark.parametrize("t", [0.35, 0.45, 0.6])
def test_error_matches_quadrature_other_times(t):
    est, se = th.error_mc(PAIR, VPS, t, 4.0, 20000, 1)
    assert abs(est - _quadrature_error([-5, 5], 0.1, t, 4.0)) <= 3 * se + 1e-12


def test_error_needs_samples():
    with pytest.raises(ValueError):
        th.error_mc(PAIR, VPS, 0.5, 4.0, 999)


def test_bound_exp_hand_value():
    t, k = 0.1, 4.0
    integral = 0.1 * t + 0.5 * (20.0 - 0.1) * t * t
    a = np.exp(-0.5 * integral)
    s2 = 1 - np.exp(-integral)
    v1 = a * a * 0.01 + s2
    vk = a * a * 0.01 / k + s2
    expect = 6 * a * 10.0 / vk * np.exp(-a * a * 100.0 / (8 * v1))
    assert abs(th.bound_exp(GEOM, PAIR, VPS, t, k) - expect) < 1e-12 * max(1.0, expect)


def test_bound_poly_hand_value():
    t, k = 0.4, 4.0
    a, v1, vk = th.noisy_variances(PAIR, VPS, t, k)
    expect = a * 10.0 / (4 * vk) * (1 / vk - 1 / v1) * 2 * (vk + a * a * 100.0)
    assert th.bound_poly(GEOM, PAIR, VPS, t, k) == pytest.approx(expect, rel=1e-14)


def test_bound_poly_zero_at_k1():
    assert th.bound_poly(GEOM, PAIR, VPS, 0.3, 1.0) == 0.0


def test_bounds_vanish_near_t1():
    # both bounds carry an alpha_t prefactor; the default schedule keeps alpha ~ 7e-3 at t_max
    ts = np.linspace(0.6, VPS.t_max, 30)
    be = np.array([th.bound_exp(GEOM, PAIR, VPS, t, 4.0) for t in ts])
    bp = np.array([th.bound_poly(GEOM, PAIR, VPS, t, 4.0) for t in ts])
    assert np.all(np.diff(be) < 0) and np.all(np.diff(bp) < 0)
    alpha = VPS.alpha_sigma(ts)[0]
    assert np.all(be / alpha <= 6 * 10.0 / th.noisy_variances(PAIR, VPS, 0.6, 4.0)[2])
    steep = Schedule.vp(beta_max=60.0)
    assert th.bound_exp(GEOM, PAIR, steep, steep.t_max, 4.0) < 1e-4
    assert th.bound_poly(GEOM, PAIR, steep, steep.t_max, 4.0) < 1e-8


def test_bounds_reject_flattening():
    with pytest.raises(UnsupportedRegimeError):
        th.bound_exp(GEOM, PAIR, VPS, 0.5, 0.5)
    with pytest.raises(UnsupportedRegimeError):
        th.bound_poly(GEOM, PAIR, VPS, 0.5, 0.5)
    with pytest.raises(UnsupportedRegimeError):
        th.validate_bounds(PAIR, VPS, 0.5, [0.5], 1000)


def test_validate_trivial_cases():
    single = GaussianMixture([1.0], [[0.0]], 0.1)
    for mix, k in ((single, 4.0), (PAIR, 1.0)):
        reps = th.validate_bounds(mix, VPS, k, np.linspace(0.05, 0.95, 5), 1000, 0)
        assert all(r.satisfied and r.error_mc == 0.0 for r in reps)


def test_report_satisfied_rule():
    r = th.BoundReport(0.5, 1.0, 0.01, 0.96, 5.0)
    assert r.satisfied  # 1.0 <= 0.96 * 1.05 + 0.03
    assert not th.BoundReport(0.5, 1.1, 0.01, 0.96, 5.0).satisfied
    assert r.row()["satisfied"] is True


def test_validate_is_deterministic():
    a = th.validate_bounds(PAIR, VPS, 4.0, [0.3, 0.5], 2000, 9)
    b = th.validate_bounds(PAIR, VPS, 4.0, [0.3, 0.5], 2000, 9)
    assert [r.row() for r in a] == [r.row() for r in b]


@settings(max_examples=50)
@given(st.floats(0.001, 0.999), st.floats(0.2, 20.0))
def test_cns_gap_standard_normal_vanishes(t, k):
    x = np.linspace(-4, 4, 100).reshape(-1, 1)
    assert np.max(th.cns_gap(STD, VPS, t, k, x)) < 1e-10


def test_cns_gap_single_gaussian_vanishes():
    mix = GaussianMixture([1.0], [[2.0]], 0.5)
    x = np.linspace(-3, 3, 50).reshape(-1, 1)
    assert np.max(th.cns_gap(mix, VPS, 0.4, 4.0, x)) < 1e-10


def _log_mixture(x, centers, var):
    lg = -0.5 * (x - centers) ** 2 / var
    return np.log(np.mean(np.exp(lg))) - 0.5 * np.log(2 * np.pi * var)


def test_cns_gap_two_mode_regression():
    gap = th.cns_gap(TWO, VPS, 0.5, 4.0, [[1.0]])[0]
    assert gap == pytest.approx(1.0710367817047608, rel=1e-12)
    assert gap > 0.1
    # independent finite-difference check of both closed-form scores
    a, s = VPS.alpha_sigma(0.5)
    c = a * np.array([-2.0, 2.0])
    vp_ = a * a * 0.25 + s * s
    h = 1e-5
    gq = (_log_mixture(1 + h, c, vp_ / 4) - _log_mixture(1 - h, c, vp_ / 4)) / (2 * h)
    gp = (_log_mixture(1 + h, c, vp_) - _log_mixture(1 - h, c, vp_)) / (2 * h)
    assert abs(abs(gq - 4 * gp) - gap) < 1e-6


def test_cns_gap_flow_unsupported():
    with pytest.raises(UnsupportedScheduleError):
        th.cns_gap(TWO, Schedule.flow(), 0.5, 4.0, [[1.0]])
