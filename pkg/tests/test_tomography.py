import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm
from scipy.stats import kstest

from levitomech import fock
from levitomech import tomography as T
from levitomech.params import PhysicalConfig, derive

TWO_PI = 2 * math.pi
DIM = 10
STATES = {
    "vac": fock.fock(0, DIM),
    "fock1": fock.fock(1, DIM),
    "sup": fock.normalize(fock.fock(0, DIM) + fock.fock(1, DIM)),
}


@pytest.fixture(scope="module")
def dp():
    return derive(PhysicalConfig())


def _plan(dp, n_angles=40, shots=5000, **kw):
    return T.half_period_plan(dp.trap_freq, dp.mass, dp.zero_point_momentum, n_angles, 0.05,
                              shots=shots, **kw)


def _cdf(rho, theta):
    x = np.linspace(-15, 15, 30001)
    c = cumulative_trapezoid(fock.quadrature_pdf(rho, theta, x), x, initial=0)
    return lambda v: np.interp(v, x, c)


@pytest.mark.parametrize("name", ["vac", "fock1", "sup"])
def test_samples_follow_quadrature_pdf(dp, name):
    plan = _plan(dp, n_angles=3, shots=10_000)
    data = T.sample(STATES[name], plan, seed=1)
    for th, xs in zip(data.theta, data.x):
        stat = kstest(xs, _cdf(fock.dm(STATES[name]), th)).statistic
        assert stat < 0.02


def test_variances(dp):
    plan = _plan(dp, n_angles=8, shots=10_000)
    _, v0 = T.sample(STATES["vac"], plan, 2).moments()
    _, v1 = T.sample(STATES["fock1"], plan, 3).moments()
    assert np.all(np.abs(v0 - 1) < 0.05)
    assert np.all(np.abs(v1 - 3) < 0.1)


def test_resolution_inflates_variance(dp):
    lever = _plan(dp).lever().min()
    plan = _plan(dp, n_angles=4, shots=20_000, dz=0.5 * lever)
    _, v = T.sample(STATES["vac"], plan, 4, accept_infeasible=True).moments()
    want = 1 + (plan.dz / plan.lever()) ** 2
    assert np.all(np.abs(v - want) < 0.05)


def test_cavity_noise_inflates_variance(dp):
    amp = T.Amplification(TWO_PI * 1e5, TWO_PI * 1e5, 2e-5)
    plan = _plan(dp, n_angles=3, shots=20_000, amplification=amp)
    _, v = T.sample(STATES["vac"], plan, 5).moments()
    want = 1 + plan.cavity_noise / plan.gain**2
    assert np.all(np.abs(v / want - 1) < 0.05)


def test_position_term(dp):
    plan = _plan(dp, n_angles=3, shots=20_000)
    data = T.sample(STATES["vac"], plan, 6, include_position=True)
    _, v = data.moments()
    want = 1 + (plan.zero_point_length / plan.lever()) ** 2
    assert np.all(np.abs(v - want) < 0.05)
    assert data.noise["position_term"]


def test_amplification_gain_values():
    assert T.amplification_gain(1.0, 2.0, 0.0) == (1.0, 0.0)
    p, q2 = T.amplification_gain(TWO_PI * 1e5, TWO_PI * 1e5, 2e-5)
    assert p == pytest.approx(1.7e3, rel=0.2)
    assert q2 > 0


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0, 3))
def test_amplification_matches_propagator(g, kappa, tau):
    m = expm(np.array([[-kappa, g], [g, 0.0]]) * tau)
    p, q2 = T.amplification_gain(g, kappa, tau)
    assert p == pytest.approx(m[1, 1], rel=1e-10)
    assert q2 == pytest.approx(m[0, 1] ** 2, rel=1e-9, abs=1e-300)
    assert p >= 1
    assert T.amplification_gain(g, kappa, tau + 0.1)[0] > p


def test_amplitude_bound_flag(dp):
    amp = T.Amplification(TWO_PI * 1e5, TWO_PI * 1e5, 2e-5)
    rep = _plan(dp, amplification=amp).feasibility()
    assert rep["amplified_amplitude_m"] == pytest.approx(dp.zero_point_length * rep["gain"], rel=1e-12)
    assert rep["amplitude_within_slope"] == (rep["amplified_amplitude_m"] < 1e-9)


def test_feasibility_arithmetic(dp):
    # no gain and 100 nm resolution: tens of milliseconds of flight
    t_plain = T.required_flight_time(dp.mass, dp.zero_point_momentum, 1e-7)
    assert 0.01 < t_plain < 0.1
    # a gain of 1e3 lets a resolution of order 100 um work on the same time scale
    t_gain = T.required_flight_time(dp.mass, dp.zero_point_momentum, 1e-4, 1e3)
    assert 0.01 < t_gain < 0.1
    rep = _plan(dp, dz=1e-9).feasibility()
    assert rep["feasible"] and rep["drop_distance_m"] == pytest.approx(9.81 * 0.05**2 / 2)
    assert rep["lever_m"] == pytest.approx((0.05 - max(_plan(dp).release_times))
                                           * dp.zero_point_momentum / dp.mass)


def test_infeasible_plan(dp):
    plan = _plan(dp, n_angles=20, shots=1000, dz=1e-6)
    with pytest.raises(T.InfeasiblePlanError):
        T.sample(STATES["vac"], plan)
    data = T.sample(STATES["vac"], plan, accept_infeasible=True)
    assert data.x.shape == (20, 1000)


def test_plan_validation(dp):
    with pytest.raises(T.ConfigError):
        _plan(dp, shots=0)
    with pytest.raises(T.ConfigError):
        T.TofPlan(1.0, 1.0, 1.0, (0.0, 2.0), 1.0)
    with pytest.raises(T.ConfigError):
        T.TofPlan(1.0, 1.0, 1.0, (), 1.0)
    assert _plan(dp).to_dict()["shots"] == 5000


@pytest.fixture(scope="module")
def grid():
    x = np.linspace(-5, 5, 101)
    return x, x


@pytest.fixture(scope="module")
def recs(dp, grid):
    plan = _plan(dp)
    out = {}
    for i, (name, psi) in enumerate(STATES.items()):
        out[name] = T.reconstruct(T.sample(psi, plan, seed=20 + i), *grid)
    return out


@pytest.mark.parametrize("name", ["vac", "fock1", "sup"])
def test_reconstruction_error(recs, grid, name):
    true = fock.wigner(STATES[name], *grid)
    assert np.max(np.abs(recs[name].w - true)) < 0.08 * np.max(np.abs(true))
    assert T.overlap_fidelity(recs[name], STATES[name]) > 0.95


def test_vacuum_peak(recs, grid):
    w = recs["vac"].w
    assert w[50, 50] == pytest.approx(1 / TWO_PI, rel=0.1)
    assert np.unravel_index(np.argmax(w), w.shape) in {(50, 50), (49, 50), (50, 49), (51, 50), (50, 51)}


def test_negativity(recs):
    assert recs["fock1"].negativity_detected()
    assert recs["sup"].negativity_detected()
    assert not recs["vac"].negativity_detected()


def test_rotation_covariance(grid):
    angles = np.linspace(0, np.pi, 24, endpoint=False)
    data = T.dataset_from_angles(STATES["sup"], angles, 1000, seed=8)
    a = T.reconstruct(data, *grid)
    shifted = T.QuadratureDataset(data.theta + np.pi / 2, data.x, 8, 1000)
    b = T.reconstruct(shifted, *grid)
    # theta -> theta + pi/2 maps W(x, p) to W(p, -x)
    assert np.max(np.abs(b.w - a.w[::-1, :].T)) < 1e-10


def test_coverage_errors(grid):
    few = T.dataset_from_angles(STATES["vac"], np.linspace(0, np.pi, 10, endpoint=False), 1000)
    with pytest.raises(T.CoverageError):
        T.reconstruct(few, *grid)
    thin = T.dataset_from_angles(STATES["vac"], np.linspace(0, np.pi, 24, endpoint=False), 500)
    with pytest.raises(T.CoverageError):
        T.reconstruct(thin, *grid)
    clustered = T.dataset_from_angles(STATES["vac"], np.linspace(0, 0.6 * np.pi, 24), 1000)
    with pytest.raises(T.CoverageError):
        T.reconstruct(clustered, *grid)


def test_fold_and_weights():
    th, x = T._fold(np.array([0.5, 0.5 + np.pi, 0.5 + 2 * np.pi]), np.ones((3, 2)))
    assert np.allclose(th, 0.5) and np.allclose(x[:, 0], [1, -1, 1])
    w = T._angle_weights(np.linspace(0, np.pi, 8, endpoint=False))
    assert np.allclose(w, np.pi / 8) and w.sum() == pytest.approx(np.pi)


def test_ramp_kernel_fourier():
    # the kernel is the inverse transform of |k| on |k| < cutoff
    k = np.linspace(-3, 3, 60001)
    for s in (0.0, 1e-5, 0.7, 2.3):
        num = np.trapezoid(np.abs(k) * np.cos(k * s), k)
        assert T.ramp_kernel(np.array([s]), 3.0)[0] == pytest.approx(num, abs=1e-6)


def test_overlap_identity(grid):
    x = np.linspace(-8, 8, 201)
    a, b = STATES["sup"], STATES["fock1"]
    val = T.overlap(fock.wigner(a, x, x), fock.wigner(b, x, x), x, x)
    assert val == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=2e-2)


def test_dataset_rows(dp):
    data = T.sample(STATES["vac"], _plan(dp, n_angles=20, shots=1000), seed=1)
    rows = list(data.rows())
    assert len(rows) == 20 * 1000 and rows[0][0] == data.theta[0]
    again = T.sample(STATES["vac"], _plan(dp, n_angles=20, shots=1000), seed=1)
    assert np.array_equal(data.x, again.x)
