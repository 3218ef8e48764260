import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm

from levitomech import fock
from levitomech import photon as Ph
from levitomech.errors import ConfigError, DomainError


@pytest.fixture(scope="module")
def swap_run():
    pulse = Ph.gaussian_pulse(10.0, 5.6, 5.0)
    return Ph.run(pulse, 1.0, 1.0, 10.0, 12.0)


@given(st.floats(0.05, 3), st.floats(0.05, 3))
def test_kernels_match_propagator(g, kappa):
    t = np.array([0.0, 0.3, 1.7, 4.0])
    pp, pm, q = Ph.kernels(g, kappa, t)
    gen = np.array([[-kappa, -1j * g], [-1j * g, 0]])
    for k, tk in enumerate(t):
        m = expm(gen * tk)
        assert abs(m[0, 0] - pm[k]) < 1e-12
        assert abs(m[1, 1] - pp[k]) < 1e-12
        assert abs(m[0, 1] - q[k]) < 1e-12


def test_kernels_critical_point_and_norm():
    # chi = 0 is handled by the series branch
    t = np.linspace(0, 6, 6001)
    pp, pm, q = Ph.kernels(0.5, 1.0, t)
    assert np.all(np.isfinite(q))
    loss = 2 * 1.0 * cumulative_trapezoid(np.abs(q) ** 2, t, initial=0)
    assert np.max(np.abs(np.abs(pp) ** 2 + np.abs(q) ** 2 + loss - 1)) < 1e-6
    with pytest.raises(DomainError):
        Ph.kernels(1.0, 1.0, np.array([-1.0]))


def test_pulse_normalization_and_fourier():
    pulse = Ph.gaussian_pulse(3.0, 2.0, 4.0)
    assert pulse.grid_norm() == pytest.approx(1, abs=1e-10)
    t = np.linspace(0, 8, 41)
    assert pulse.fourier_mismatch(t) < 1e-10
    assert np.trapezoid(np.abs(pulse.amplitude(np.linspace(-20, 30, 5001))) ** 2,
                        np.linspace(-20, 30, 5001)) == pytest.approx(1, abs=1e-9)
    assert np.argmax(pulse.envelope(t)) == 20
    with pytest.raises(ConfigError):
        Ph.gaussian_pulse(0.0, 1.0, 0.0, span=4)
    with pytest.raises(ConfigError):
        Ph.gaussian_pulse(0.0, -1.0, 0.0)


def test_t_hold():
    assert Ph.t_hold(1.0, 1.0) == pytest.approx(math.acos(0.5) / math.sqrt(0.75))
    with pytest.raises(DomainError):
        Ph.t_hold(0.4, 1.0)


def test_swap_peak(swap_run):
    t_h = Ph.t_hold(1.0, 1.0, 5.0)
    k = int(np.argmax(swap_run.n_b))
    assert swap_run.n_b[k] == pytest.approx(0.50, abs=0.03)
    assert swap_run.t[k] == pytest.approx(t_h, abs=0.1)
    assert np.interp(t_h, swap_run.t, swap_run.n_a) < 0.02
    assert swap_run.oracle_deviation < 1e-3
    assert swap_run.grid_norm_error < 1e-3


def test_norm_conserved(swap_run):
    times = np.linspace(0.5, 12, 9)
    assert np.max(np.abs(swap_run.norm_defect(times))) < 1e-4


def test_no_coupling_no_phonon():
    pulse = Ph.gaussian_pulse(0.0, 1.0, 4.0, n_omega=512)
    traj = Ph.run(pulse, 0.0, 1.0, 0.0, 14.0, cross_check=False)
    assert np.max(traj.n_b) == 0
    # resonant reflection: the cavity fills and empties
    assert np.max(traj.n_a) > 0.1
    assert traj.n_a[-1] < 1e-3


def test_output_mode(swap_run):
    t_h = Ph.t_hold(1.0, 1.0, 5.0)
    mode = Ph.output_mode(swap_run, t_h)
    dw = mode.omega[1] - mode.omega[0]
    assert np.sum(np.abs(mode.phi) ** 2) * dw == pytest.approx(1)
    assert mode.photon_weight == pytest.approx(1 - abs(mode.c_b) ** 2 - abs(mode.c_a) ** 2)
    with pytest.raises(ConfigError):
        Ph.output_mode(swap_run, 100.0)


def test_homodyne_collapse():
    c0, c1 = Ph.homodyne_collapse(1.0, 0.3)
    assert abs(c1) == pytest.approx(1) and c0 == 0
    c0, c1 = Ph.homodyne_collapse(math.sqrt(0.5), 0.0)
    assert abs(c1) == pytest.approx(1)
    c0, c1 = Ph.homodyne_collapse(math.sqrt(0.5), 1.3)
    assert c0 / c1 == pytest.approx(1.3)
    with pytest.raises(ConfigError):
        Ph.homodyne_collapse(0.9, 0.0, 0.9)


def test_homodyne_collapse_matches_projection():
    """Project the two-mode state on a discretized quadrature eigenbasis."""
    c_b, c_m, x_out = 0.6, 0.8j, -0.7
    joint = np.zeros((2, 2), complex)  # [n_b, n_photon]
    joint[1, 0], joint[0, 1] = c_b, c_m
    psi = fock.quadrature_wavefunctions(np.array([x_out]), 2)[:, 0]
    mech = fock.normalize(joint @ psi)
    c0, c1 = Ph.homodyne_collapse(c_b, x_out, c_m)
    assert abs(abs(np.vdot(mech, [c0, c1])) - 1) < 1e-12


def _rk4_switch(coupling0, kappa, T, steps=20000):
    h = T / steps
    y = np.array([0, 1], complex)

    def f(t, y):
        g = coupling0 * math.exp(-kappa * t)
        return np.array([-kappa * y[0] - 1j * g * y[1], -1j * g * y[0]])

    t = 0.0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y[1]


def test_switch_off_against_rk4():
    res = Ph.switch_off_factor(0.8, 1.0, 5.0)
    assert abs(res.factor - _rk4_switch(0.8, 1.0, 5.0)) < 1e-10
    assert res.attenuation < 1
    assert Ph.switch_off_factor(0.0, 1.0, 1.0).factor == 1
    assert Ph.switch_off(0.5, 0.08, 10.0, 1.0, 5.0) == pytest.approx(0.5 * res.factor, abs=1e-12)
    with pytest.raises(ConfigError):
        Ph.switch_off_factor(1.0, 1.0, 0.0)


def test_switch_off_weak_coupling_limit():
    # second order in g0 for g0 exp(-kappa t): 1 - g0^2/(4 kappa^2) at long times
    g0, kappa = 1e-3, 2.0
    f = Ph.switch_off_factor(g0, kappa, 40.0).factor
    assert (1 - f.real) == pytest.approx(g0**2 / (4 * kappa**2), rel=1e-4)


def test_displaced_output_offset():
    from levitomech.params import PhysicalConfig, derive
    dp = derive(PhysicalConfig())
    assert Ph.displaced_output_offset(dp) == dp.cavity_amplitude
