import math
import numpy as np
import pytest
from hypothesis import given, strategies as st

from levitomech import fock
from levitomech import teleport as T
from levitomech.errors import ConfigError, DomainError, TruncationError
from levitomech.params import PhysicalConfig, derive

# (x = 2 g^2 t / kappa, <n>, r, F) evaluated with mpmath at 30 digits
HAND = [
    (0.0, 0.0, 0.0, 0.5),
    (0.5, 0.648721270700128146848650787814, 1.47380918124193748084158768823,
     0.950150804820695224171735179615),
    (1.0, 1.71828182845904523536028747135, 2.17007700389677554051738080276,
     0.987133192042687425436570259665),
]
HAND_STANDARD = [(0.5, 0.736904590620968740420793844114, 0.813635672511660644005528653048),
                 (1.0, 1.08503850194838777025869040138, 0.897530048810325053647884706429)]


def _time(x, g=0.1, kappa=1.0):
    return x * kappa / (2 * g**2)


@pytest.mark.parametrize("x,n,r,f", HAND)
def test_hand_values(x, n, r, f):
    got = T.squeezing(0.1, 1.0, _time(x))
    assert got[0] == pytest.approx(n, abs=1e-12)
    assert got[1] == pytest.approx(r, abs=1e-6)
    assert got[2] == pytest.approx(f, abs=1e-6)


@pytest.mark.parametrize("x,r,f", HAND_STANDARD)
def test_standard_relation(x, r, f):
    _, rs, fs = T.squeezing(0.1, 1.0, _time(x), relation="standard")
    assert rs == pytest.approx(r, abs=1e-9) and fs == pytest.approx(f, abs=1e-9)
    assert fock.tms_mean_occupation(rs) == pytest.approx(math.expm1(x))


def test_cosh_relation_matches_occupation_inverse():
    _, r, _ = T.squeezing(0.1, 1.0, _time(0.7))
    assert fock.tms_mean_occupation(r, "cosh") == pytest.approx(math.exp(0.7) - 1)


def test_squeezing_monotone_and_limit():
    ts = np.linspace(0, 400, 401)
    rs = np.array([T.squeezing(0.1, 1.0, t)[1] for t in ts])
    fs = np.array([T.squeezing(0.1, 1.0, t)[2] for t in ts])
    assert np.all(np.diff(rs) > 0) and np.all(np.diff(fs) > 0)
    assert np.all((fs >= 0.5) & (fs < 1))
    assert T.squeezing(0.1, 1.0, 2000.0)[2] == pytest.approx(1, abs=1e-8)


@given(st.floats(0, 100), st.floats(1e-3, 10))
def test_squeezing_derivative_positive(t, dt):
    _, r1, f1 = T.squeezing(0.1, 1.0, t)
    _, r2, f2 = T.squeezing(0.1, 1.0, t + dt)
    assert r2 > r1 and f2 >= f1


def test_squeezing_errors():
    with pytest.raises(ConfigError):
        T.squeezing(0.1, 1.0, -1.0)
    with pytest.raises(ConfigError):
        T.squeezing(0.1, 0.0, 1.0)
    with pytest.raises(ConfigError):
        T.squeezing(0.1, 1.0, 1.0, relation="other")


def test_plan():
    plan = T.make_plan(0.1, 1.0, 50.0)
    assert plan.r == pytest.approx(HAND[2][2], abs=1e-6)
    assert abs(plan.ratio) == pytest.approx(math.tanh(plan.r))
    assert np.allclose(plan.filter_diag(4), plan.ratio ** np.arange(4) / math.cosh(plan.r))
    assert plan.to_dict()["F"] == plan.fidelity
    with pytest.warns(UserWarning):
        T.make_plan(2.0, 1.0, 1.0)


def test_kraus_brute_force():
    beta, r = 0.4 - 0.3j, 0.8
    big = 60
    d = fock.displacement(beta, big)
    filt = np.diag(math.tanh(r) ** np.arange(big))
    ref = (d @ filt @ d.conj().T)[:10, :7]
    assert np.max(np.abs(T.kraus(np.array([beta]), r, 10, 7)[0] - ref)) < 1e-12


def test_kraus_completeness():
    """Outcome average of K^dag K over the outcome density is the identity."""
    r = 0.6
    x, w = np.polynomial.laguerre.laggauss(60)
    angles = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    acc = np.zeros((4, 4), complex)
    # K^dag K integrated over the plane with measure d^2 beta / (pi cosh^2 r)
    scale = 3.0
    for xi, wi in zip(x, w):
        rad = math.sqrt(xi) * scale
        betas = rad * np.exp(1j * angles)
        k = T.kraus(betas, r, 60, 4)
        kk = np.einsum("sji,sjk->ik", k.conj(), k) / len(angles)
        acc += wi * np.exp(xi) * kk * math.pi * scale**2 / (math.pi * math.cosh(r) ** 2)
    assert np.max(np.abs(acc - np.eye(4))) < 1e-6


R_VALUES = [0.0, 0.5, 1.0, 1.5, 2.0]


@pytest.mark.parametrize("r", R_VALUES)
def test_coherent_fidelity(r):
    psi = fock.coherent(0.5, 12)
    res = T.teleport(psi, r, shots=10_000, seed=11)
    target = T.fidelity_formula(r)
    assert abs(res.fidelity - target) <= 2 * res.stderr + 1e-12
    assert abs(res.fidelity - target) < 0.02


def test_fock_one_against_channel_oracle():
    psi = fock.fock(1, 6)
    res = T.teleport(psi, 1.0, shots=20_000, seed=3)
    ref = T.channel_oracle(fock.dm(psi), 1.0, 40)
    assert np.max(np.abs(res.rho - ref)) < 5e-3
    assert abs(res.fidelity - ref[1, 1].real) < 3 * res.stderr + 1e-3


def test_channel_oracle_is_gaussian_noise():
    # vacuum plus additive noise is thermal with the same mean occupation
    ref = T.channel_oracle(fock.dm(fock.fock(0, 4)), 0.7, 30)
    assert np.max(np.abs(ref - fock.thermal(math.exp(-1.4), 30))) < 1e-9


def test_large_r_fock():
    res = T.teleport(fock.fock(1, 6), 3.0, shots=10_000, seed=5)
    assert res.fidelity > 0.95


def test_linearity_on_mixture():
    r = 0.8
    a, b = fock.dm(fock.coherent(0.3, 8)), fock.dm(fock.fock(2, 8))
    mix = 0.3 * a + 0.7 * b
    prop = T._proposal(mix, r)
    kw = dict(r=r, shots=2000, seed=9, proposal=prop, self_normalize=False)
    out_mix = T.teleport(mix, **kw).rho
    out_sep = 0.3 * T.teleport(a, **kw).rho + 0.7 * T.teleport(b, **kw).rho
    assert np.max(np.abs(out_mix - out_sep)) < 1e-12


def test_reproducible_and_chunked():
    psi = fock.coherent(0.2, 8)
    a = T.teleport(psi, 1.0, shots=2500, seed=4)
    b = T.teleport(psi, 1.0, shots=2500, seed=4)
    c = T.teleport(psi, 1.0, shots=2500, seed=5)
    assert np.array_equal(a.rho, b.rho)
    assert not np.array_equal(a.rho, c.rho)
    # the first block does not depend on the total count
    d = T.teleport(psi, 1.0, shots=1000, seed=4, self_normalize=False)
    e = T.teleport(psi, 1.0, shots=1000, seed=4, self_normalize=False)
    assert np.array_equal(d.rho, e.rho)


def test_output_is_density():
    res = T.teleport(fock.fock(1, 5), 1.2, shots=3000, seed=2)
    fock.check_density(res.rho, herm_tol=1e-10, trace_tol=1e-10, eig_tol=1e-8)


def test_phase_not_undone():
    psi = fock.coherent(0.5, 12)
    res = T.teleport(psi, 2.0, shots=2000, seed=1, undo_phase=False)
    # the output is rotated by pi + phi, so coherent 0.5 maps near coherent(0.5 i)
    rot = fock.coherent(0.5 * np.exp(1j * (np.pi + np.pi / 2)), 40)
    assert fock.fidelity_pure(rot, res.rho) > 0.95


def test_truncation_guard():
    with pytest.raises(TruncationError):
        T.teleport(fock.coherent(1.0, 12), 0.0, shots=1000, dim_out=12)
    with pytest.raises(ConfigError):
        T.teleport(fock.fock(0, 4), 1.0, shots=0)
    with pytest.raises(ConfigError):
        T.teleport(fock.fock(0, 4), -1.0)


def test_frame_corrections_vacuum_target():
    plan = T.make_plan(0.1, 1.0, 50.0, alpha_out=0.5)
    fc = T.frame_corrections(plan, None, fock.fock(0, 12))
    assert np.max(np.abs(fc.state - fock.coherent(0.5, 12))) < 1e-9
    assert fc.min_weight == pytest.approx(1 / math.cosh(plan.r))


def test_frame_corrections_superposition():
    plan = T.TeleportPlan(0.1, 1.0, 1.0, 1.0, complex(-1j * math.tanh(1.0)), T.fidelity_formula(1.0))
    target = fock.normalize(np.array([1, 1, 0, 0]))
    fc = T.frame_corrections(plan, None, target)
    theta = plan.ratio
    ref = fock.normalize(np.array([1, 1 / theta, 0, 0]))
    assert np.allclose(fc.filtered, ref)
    # applying the filter gives back the target up to normalization
    back = fock.normalize(plan.filter_diag(4) * fc.filtered)
    assert abs(abs(np.vdot(back, target)) - 1) < 1e-12


def test_frame_corrections_large_r_is_displacement():
    plan = T.TeleportPlan(0.1, 1.0, 1.0, 12.0, complex(-1j * math.tanh(12.0)), 1.0, 0.3)
    phi = fock.normalize(np.array([1, 0.5, 0.2j]))
    fc = T.frame_corrections(plan, None, phi)
    phases = (-1j) ** -np.arange(3)
    assert np.allclose(fc.filtered, phi * phases, atol=1e-9)


def test_frame_corrections_from_params():
    dp = derive(PhysicalConfig())
    plan = T.make_plan(0.1, 1.0, 50.0)
    fc = T.frame_corrections(plan, dp, fock.fock(0, 4))
    assert fc.pre_displacement == pytest.approx(np.conj(dp.cavity_amplitude))
    assert fc.state is None


def test_frame_corrections_ill_conditioned():
    plan = T.TeleportPlan(0.1, 1.0, 0.0, 1e-3, complex(-1e-3j), 0.5)
    with pytest.raises(DomainError):
        T.frame_corrections(plan, None, fock.fock(5, 8))
