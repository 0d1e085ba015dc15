import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsr.errors import DomainError, ParameterError, UnsupportedScheduleError
from tsr.schedule import FLOW, VP, Schedule, from_config

VPS = Schedule.vp()
FLOWS = Schedule.flow()
times = st.floats(1e-3, 1 - 1e-3)


def test_flow_coefficients():
    assert FLOWS.alpha_sigma(0.25) == (0.75, 0.25)
    assert FLOWS.alpha_sigma(0.5) == (0.5, 0.5)


@given(times)
def test_vp_variance_preserving(t):
    a, s = VPS.alpha_sigma(t)
    assert abs(a * a + s * s - 1.0) < 1e-12


@given(times)
def test_flow_exact(t):
    a, s = FLOWS.alpha_sigma(t)
    assert a == 1.0 - t and s == t


@pytest.mark.parametrize("sched", [VPS, FLOWS], ids=[VP, FLOW])
def test_monotone_coefficients(sched):
    ts = np.linspace(sched.t_clip, sched.t_max, 500)
    a, s = sched.alpha_sigma(ts)
    assert np.all(np.diff(a) <= 0) and np.all(np.diff(s) >= 0)
    assert np.all(np.diff(sched.snr(ts)) < 0)


def test_flow_snr_values():
    assert FLOWS.snr(0.5) == pytest.approx(1.0, abs=1e-15)
    assert FLOWS.snr(0.2) == pytest.approx(16.0, rel=1e-14)


@given(times)
def test_snr_identity(t):
    for sched in (VPS, FLOWS):
        a, s = sched.alpha_sigma(t)
        assert abs(sched.snr(t) * s * s - a * a) < 1e-12


def test_flow_derivatives():
    for t in (0.1, 0.5, 0.9):
        assert FLOWS.alpha_sigma_dot(t) == (-1.0, 1.0)
        a, s = FLOWS.alpha_sigma(t)
        ad, sd = FLOWS.alpha_sigma_dot(t)
        assert ad * s - a * sd == pytest.approx(-1.0, abs=1e-15)


def test_vp_alpha_dot_formula_and_fd():
    t, h = 0.3, 1e-6
    a, _ = VPS.alpha_sigma(t)
    ad, _ = VPS.alpha_sigma_dot(t)
    beta = 0.1 + (20.0 - 0.1) * t
    assert ad == pytest.approx(-0.5 * beta * a, rel=1e-14)
    fd = (VPS.alpha_sigma(t + h)[0] - VPS.alpha_sigma(t - h)[0]) / (2 * h)
    assert abs(ad - fd) < 1e-6


@pytest.mark.parametrize("sched", [VPS, FLOWS], ids=[VP, FLOW])
def test_derivatives_match_finite_differences(sched):
    h = 1e-6
    ts = np.linspace(sched.t_clip + 1e-5, sched.t_max - 1e-5, 100)
    ap, sp_ = sched.alpha_sigma(ts + h)
    am, sm = sched.alpha_sigma(ts - h)
    ad, sd = sched.alpha_sigma_dot(ts)
    assert np.max(np.abs((ap - am) / (2 * h) - ad)) < 1e-5
    assert np.max(np.abs((sp_ - sm) / (2 * h) - sd)) < 1e-5


def test_drift_diffusion_endpoints():
    f, g = VPS.drift_diffusion(0.0)
    assert f == pytest.approx(-0.05) and g == pytest.approx(np.sqrt(0.1))
    f, g = VPS.drift_diffusion(1.0)
    assert f == pytest.approx(-10.0) and g == pytest.approx(np.sqrt(20.0))


@given(st.floats(0.0, 1.0))
def test_drift_diffusion_identity(t):
    f, g = VPS.drift_diffusion(t)
    assert g * g == pytest.approx(-2 * f, rel=1e-14)


def test_drift_diffusion_flow_unsupported():
    with pytest.raises(UnsupportedScheduleError):
        FLOWS.drift_diffusion(0.5)


@pytest.mark.parametrize("t", [0.0, 1e-4, 1.0, 0.9995, np.nan])
def test_domain_errors(t):
    with pytest.raises(DomainError):
        VPS.alpha_sigma(t)


def test_bad_parameters():
    with pytest.raises(ParameterError):
        Schedule("cosine")
    with pytest.raises(ParameterError):
        Schedule.vp(beta_min=0.0)
    with pytest.raises(ParameterError):
        Schedule.vp(t_clip=0.0)


@settings(max_examples=50)
@given(st.floats(1e-2, 1e2), st.sampled_from([VP, FLOW]))
def test_noise_ratio_inverse(rho, kind):
    sched = VPS if kind == VP else FLOWS
    t = sched.t_from_noise_ratio(rho)
    if sched.t_clip <= t <= sched.t_max:
        a, s = sched.alpha_sigma(t)
        assert s / a == pytest.approx(rho, rel=1e-9)


@pytest.mark.parametrize("spacing", ["uniform", "angle"])
@pytest.mark.parametrize("sched", [VPS, FLOWS], ids=[VP, FLOW])
def test_time_grid(sched, spacing):
    ts = sched.time_grid(50, spacing)
    assert len(ts) == 51
    assert ts[0] == sched.t_max and ts[-1] == sched.t_clip
    assert np.all(np.diff(ts) < 0)


def test_time_grid_errors():
    with pytest.raises(ParameterError):
        VPS.time_grid(10, "cosine")
    with pytest.raises(ParameterError):
        VPS.time_grid(0)


def test_from_config():
    assert from_config({"schedule": "flow"}) == Schedule.flow()
    s = from_config({"schedule": "vp", "beta_max": 10.0})
    assert s.beta_max == 10.0 and s.beta_min == 0.1
