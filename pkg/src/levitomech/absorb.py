"""Perfect absorption of a light pulse into the mechanical mode.

The coupling schedule follows from requiring that nothing but the coherent
drive leaves the cavity. With ``eta = kappa mu - mu'`` the nonlinear condition
``eta g' - eta' g + mu g^3 = 0`` becomes linear in ``u = 1/g^2`` and
integrates to ``g^2 = eta^2 / D`` with ``D' = 2 mu eta``.

For a Gaussian envelope ``eta`` changes sign once, at ``t_star``. Every
admissible solution has ``D = D_touch + delta`` with ``D_touch`` the integral
of ``2 mu eta`` from ``t_star`` (nonnegative, vanishing only at ``t_star``)
and ``delta >= 0``. The boundary value requested at the start of the window
fixes ``delta`` and is raised to the smallest admissible value when needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.special import erf

from .errors import ConfigError, ConvergenceError, DomainError
from .photon import PulseShape

Array = np.ndarray

_GL = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class CouplingSchedule:
    t: Array
    g: Array
    mu: Array
    kappa: float
    phase: complex = 1.0
    residual: float = 0.0
    delta: float = 0.0
    clipped: bool = False
    t_star: float = math.nan
    drive: Array | None = field(default=None, repr=False)
    _g_fn: object = field(default=None, repr=False, compare=False)
    _mu_fn: object = field(default=None, repr=False, compare=False)

    CSV_HEADER = ("t", "g_over_kappa", "abs_b")

    def g_at(self, t: float) -> float:
        if self._g_fn is not None:
            return float(self._g_fn(t))
        return float(np.interp(t, self.t, self.g))

    def mu_at(self, t: float) -> float:
        if self._mu_fn is not None:
            return float(self._mu_fn(t))
        return float(np.interp(t, self.t, self.mu))

    def to_dict(self) -> dict:
        out = {"kappa": self.kappa, "t": self.t.tolist(), "g": self.g.tolist(),
               "mu": self.mu.tolist(), "residual": self.residual, "delta": self.delta,
               "clipped": self.clipped, "t_star": self.t_star,
               "phase": [self.phase.real, self.phase.imag]}
        if self.drive is not None:
            out["drive"] = [[float(z.real), float(z.imag)] for z in self.drive]
        return out


class _Gaussian:
    """Envelope ``A exp(-s^2 (t-x)^2/4)`` with its derivatives and integrals."""

    def __init__(self, pulse: PulseShape, kappa: float):
        self.s, self.x, self.k = pulse.width, pulse.x_in, kappa
        self.amp = pulse.norm_const * pulse.width * math.sqrt(math.pi) / math.sqrt(2 * math.pi)
        self.t_star = self.x - 2 * kappa / self.s**2

    def mu(self, t):
        return self.amp * np.exp(-self.s**2 * (np.asarray(t) - self.x) ** 2 / 4)

    def eta(self, t):
        return self.mu(t) * (self.k + self.s**2 * (np.asarray(t) - self.x) / 2)

    def eta_dot(self, t):
        u = np.asarray(t) - self.x
        return self.mu(t) * (self.s**2 / 2 - self.s**2 * u / 2 * (self.k + self.s**2 * u / 2))

    def mu_sq_integral(self, t):
        return self.amp**2 * math.sqrt(math.pi / 2) / self.s * erf(self.s * (np.asarray(t) - self.x) / math.sqrt(2))

    def d_touch(self, t):
        ts = self.t_star
        t = np.asarray(t, float)
        closed = (2 * self.k * (self.mu_sq_integral(t) - self.mu_sq_integral(ts))
                  - self.mu(t) ** 2 + self.mu(ts) ** 2)
        # the closed form cancels near t_star; integrate 2 mu eta directly there
        near = np.abs(t - ts) < 1 / self.s
        if not np.any(near):
            return closed
        x, w = _GL
        tn = np.atleast_1d(t[near] if t.ndim else t)
        half = (tn - ts) / 2
        nodes = ts + half[:, None] * (x[None, :] + 1)
        quad = half * ((2 * self.mu(nodes) * self.eta(nodes)) @ w)
        out = np.array(closed, dtype=float, copy=True)
        if t.ndim:
            out[near] = quad
            return out
        return quad[0]

    def g_limit(self) -> float:
        # value at t_star of eta^2 / D_touch, both vanishing quadratically
        return math.sqrt(self.eta_dot(self.t_star) / self.mu(self.t_star))


def pulse_window(pulse: PulseShape, threshold: float = 1e-8) -> tuple[float, float]:
    half = 2 * math.sqrt(math.log(1 / threshold)) / pulse.width
    return pulse.x_in - half, pulse.x_in + half


def solve_g(pulse: PulseShape, kappa: float, detuning: float, g_min: float | None = None,
            threshold: float = 1e-8, dt: float | None = None,
            t_span: tuple[float, float] | None = None) -> CouplingSchedule:
    """Coupling schedule that absorbs ``pulse`` into the mechanics.

    The window starts where the envelope falls below ``threshold`` of its peak;
    there ``u = 1/g_min^2`` is imposed (default ``g_min = 1e-6 kappa``), raised
    to the admissible minimum when the pulse front is too steep for it.
    """
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    g_min = 1e-6 * kappa if g_min is None else g_min
    if abs(pulse.detuning - detuning) > 1e-12 * max(1.0, abs(detuning)):
        raise DomainError("envelope is not real: pulse carrier must match the cavity detuning")
    model = _Gaussian(pulse, kappa)
    t0, t1 = pulse_window(pulse, threshold) if t_span is None else t_span
    dt = 0.002 / max(kappa, pulse.width) if dt is None else dt
    t = np.linspace(t0, t1, int(math.ceil((t1 - t0) / dt)) + 1)
    phase = np.exp(1j * detuning * pulse.x_in)
    probe = np.conj(pulse.amplitude(t)) * np.exp(1j * detuning * t)
    if np.max(np.abs(probe - phase * model.mu(t))) > 1e-12 * model.amp:
        raise DomainError("envelope phase is not constant")

    eta0 = float(model.eta(t0))
    touch0 = float(model.d_touch(t0))
    wanted = eta0**2 / g_min**2
    delta = max(0.0, wanted - touch0)
    clipped = wanted < touch0
    limit = model.g_limit()
    width = 1e-6 / max(kappa, pulse.width)

    def g_fn(tt):
        tt = np.asarray(tt, float)
        d = model.d_touch(tt) + delta
        eta = model.eta(tt)
        near = np.abs(tt - model.t_star) < width
        safe_d = np.where(near, 1.0, d)
        val = np.sqrt(np.maximum(eta**2 / safe_d, 0.0))
        if delta == 0:
            return np.where(near, limit, val)
        return np.where(near, np.abs(eta) / np.sqrt(d), val)

    g = g_fn(t)
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ConvergenceError("coupling schedule is not finite")
    res = cubic_residual(t, g, model.mu(t), model.eta(t), model.eta_dot(t),
                         model.t_star if delta > 0 else None)
    return CouplingSchedule(t, g, model.mu(t), kappa, complex(phase), res, delta, clipped,
                            model.t_star, None, g_fn, model.mu)


def cubic_residual(t: Array, g: Array, mu: Array, eta: Array, eta_dot: Array,
                   kink: float | None = None) -> float:
    """Relative residual of the nonlinear schedule equation, with a
    fourth-order central difference for the derivative of ``g``.

    Stencils reaching across ``kink`` (where ``g`` touches zero with a
    slope jump) are skipped.
    """
    h = t[1] - t[0]
    gd = (g[:-4] - 8 * g[1:-3] + 8 * g[3:-1] - g[4:]) / (12 * h)
    sl = slice(2, -2)
    res = eta[sl] * gd - eta_dot[sl] * g[sl] + mu[sl] * g[sl] ** 3
    if kink is not None:
        res = np.where(np.abs(t[sl] - kink) < 2.5 * h, 0.0, res)
    scale = np.max(np.abs(eta[sl] * gd) + np.abs(eta_dot[sl] * g[sl]) + np.abs(mu[sl] * g[sl] ** 3))
    return float(np.max(np.abs(res)) / scale)


def touch_integral_numeric(schedule_t: Array, mu: Array, eta: Array, t_star: float) -> Array:
    """Cumulative quadrature of ``2 mu eta`` from ``t_star``; independent of
    the closed form used by :func:`solve_g`."""
    cum = cumulative_trapezoid(2 * mu * eta, schedule_t, initial=0.0)
    return cum - np.interp(t_star, schedule_t, cum)


@dataclass(frozen=True)
class MeanTrajectory:
    t: Array
    a: Array
    b: Array
    source: Array


def simulate_means(schedule: CouplingSchedule, alpha_s: complex = 1.0,
                   weights: tuple[complex, complex] | None = None, xi: float = 0.0,
                   rtol: float = 1e-10) -> MeanTrajectory:
    """Mean cavity and phonon amplitudes driven by the pulse.

    ``alpha_s`` is the coherent amplitude of the incoming pulse. For a
    superposition ``w0 |0> + w1 |1>`` of photon numbers pass ``weights``; the
    mean field then follows from linearity as ``conj(w0) w1`` times the
    single-amplitude response.
    """
    kappa = schedule.kappa
    src_amp = alpha_s
    if weights is not None:
        w0, w1 = weights
        if abs(abs(w0) ** 2 + abs(w1) ** 2 - 1) > 1e-9:
            raise ConfigError("superposition weights must be normalized")
        src_amp = complex(np.conj(w0) * w1)
    root = math.sqrt(2 * kappa)
    ex, emx = np.exp(1j * xi), np.exp(-1j * xi)
    phase = schedule.phase

    def rhs(tt, y):
        a = y[0] + 1j * y[1]
        b = y[2] + 1j * y[3]
        g = schedule.g_at(tt)
        da = -kappa * a - 1j * g * ex * b + root * src_amp * phase * schedule.mu_at(tt)
        db = -1j * g * emx * a
        return [da.real, da.imag, db.real, db.imag]

    if src_amp == 0:
        z = np.zeros(len(schedule.t), complex)
        return MeanTrajectory(schedule.t, z, z.copy(), z.copy())
    sol = solve_ivp(rhs, (schedule.t[0], schedule.t[-1]), [0.0, 0.0, 0.0, 0.0],
                    method="DOP853", t_eval=schedule.t, rtol=rtol, atol=rtol * 1e-4)
    if sol.status != 0:
        raise ConvergenceError(sol.message)
    a = sol.y[0] + 1j * sol.y[1]
    b = sol.y[2] + 1j * sol.y[3]
    return MeanTrajectory(schedule.t, a, b, src_amp * phase * schedule.mu)


def absorption_residual(schedule: CouplingSchedule, traj: MeanTrajectory) -> float:
    """Reflected fraction: integral of ``|a_in - sqrt(2 kappa) a|^2`` over the
    window divided by the input energy."""
    out = traj.source - math.sqrt(2 * schedule.kappa) * traj.a
    num = np.trapezoid(np.abs(out) ** 2, traj.t)
    den = np.trapezoid(np.abs(traj.source) ** 2, traj.t)
    return float(num / den) if den else 0.0


def drive_from_alpha(schedule: CouplingSchedule, g0: float, omega_t: float,
                     bare_detuning: float, kappa: float, xi: float = 0.0,
                     beta0: complex | None = None, tol: float = 1e-3,
                     check_boundary: bool = True) -> Array:
    """Laser drive realizing the schedule through the intracavity amplitude
    ``alpha = g e^{i xi} / g0``.

    Raises when the drive does not vanish at both ends of the window to within
    ``tol`` of its peak, unless ``check_boundary`` is off (static schedules).
    """
    if g0 == 0:
        raise DomainError("single-photon coupling must be nonzero")
    t, g = schedule.t, schedule.g
    alpha = g * np.exp(1j * xi) / g0
    if np.all(g == 0):
        return np.zeros(len(t), complex)
    alpha_dot = np.gradient(alpha, t, edge_order=2)
    n_of = lambda tt: (np.interp(tt, t, g) / g0) ** 2
    b0 = -g0 * n_of(t[0]) / omega_t if beta0 is None else beta0

    def rhs(tt, y):
        beta = y[0] + 1j * y[1]
        d = -1j * omega_t * beta - 1j * g0 * n_of(tt)
        return [d.real, d.imag]

    sol = solve_ivp(rhs, (t[0], t[-1]), [complex(b0).real, complex(b0).imag], t_eval=t,
                    method="DOP853", rtol=1e-10, atol=1e-14 * max(1.0, abs(g0 * n_of(t).max() / omega_t)))
    if sol.status != 0:
        raise ConvergenceError(sol.message)
    beta = sol.y[0] + 1j * sol.y[1]
    drive = alpha_dot + (1j * bare_detuning + kappa) * alpha + 1j * g0 * alpha * 2 * beta.real
    peak = np.max(np.abs(drive))
    if check_boundary and peak and max(abs(drive[0]), abs(drive[-1])) > tol * peak:
        raise ConvergenceError("drive does not vanish at the window boundaries")
    return drive
