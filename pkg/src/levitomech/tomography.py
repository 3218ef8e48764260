"""Time-of-flight tomography of the mechanical state.

Releasing the trap at ``t_e`` and imaging the particle after a flight of
length ``t_f`` measures the in-trap momentum, which in ``p_m`` units is the
rotated quadrature ``X(omega_t t_e + pi/2)``. Repeating over release times
gives quadrature histograms from which the Wigner function is rebuilt by
filtered back-projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import fock
from .errors import ConfigError, DomainError
from .params import SI

Array = np.ndarray

GRAVITY = 9.81
FEASIBILITY_MARGIN = 10.0
MIN_ANGLES = 20
MIN_SHOTS = 1000


class CoverageError(DomainError):
    """The quadrature angles or shot counts cannot support a reconstruction."""


class InfeasiblePlanError(DomainError):
    """Readout resolution is too coarse for the flight lever arm."""


def amplification_gain(g: float, kappa: float, tau: float) -> tuple[float, float]:
    """Momentum gain ``p_+`` of a blue-detuned pulse of length ``tau`` and the
    added cavity noise variance ``|q|^2`` in ``p_m`` units."""
    if tau < 0:
        raise ConfigError("amplification time must be nonnegative")
    chi = math.sqrt(g**2 + kappa**2 / 4)
    decay = math.exp(-kappa * tau / 2)
    p_plus = decay * (math.cosh(chi * tau) + kappa / (2 * chi) * math.sinh(chi * tau))
    q = g / chi * decay * math.sinh(chi * tau)
    return p_plus, q**2


@dataclass(frozen=True)
class Amplification:
    g: float
    kappa: float
    tau: float


@dataclass(frozen=True)
class TofPlan:
    omega_t: float
    mass: float
    p_m: float
    release_times: tuple[float, ...]
    t_f: float
    dz: float = 0.0
    shots: int = 5000
    amplification: Amplification | None = None

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ConfigError("shots per angle must be positive")
        if min(self.omega_t, self.mass, self.p_m) <= 0:
            raise ConfigError("trap frequency, mass and p_m must be positive")
        if self.dz < 0:
            raise ConfigError("position resolution must be nonnegative")
        if not self.release_times:
            raise ConfigError("need at least one release time")
        if self.t_f <= max(self.release_times):
            raise ConfigError("detection time must follow every release time")

    @property
    def angles(self) -> Array:
        return self.omega_t * np.asarray(self.release_times) + np.pi / 2

    @property
    def gain(self) -> float:
        return 1.0 if self.amplification is None else amplification_gain(
            self.amplification.g, self.amplification.kappa, self.amplification.tau)[0]

    @property
    def cavity_noise(self) -> float:
        return 0.0 if self.amplification is None else amplification_gain(
            self.amplification.g, self.amplification.kappa, self.amplification.tau)[1]

    def lever(self) -> Array:
        """Position per unit quadrature, one value per release time (m)."""
        flight = self.t_f - np.asarray(self.release_times)
        return flight * self.p_m * self.gain / self.mass

    @property
    def zero_point_length(self) -> float:
        return SI.hbar / (2 * self.p_m)

    def feasibility(self) -> dict:
        lever = float(self.lever().min())
        ratio = math.inf if self.dz == 0 else lever / self.dz
        span = float(np.ptp(np.mod(self.angles, np.pi))) if len(self.release_times) > 1 else 0.0
        report = {"lever_m": lever, "resolution_ratio": ratio,
                  "feasible": ratio >= FEASIBILITY_MARGIN,
                  "drop_distance_m": GRAVITY * self.t_f**2 / 2,
                  "required_flight_time_s": required_flight_time(
                      self.mass, self.p_m, self.dz, self.gain),
                  "gain": self.gain, "cavity_noise_var": self.cavity_noise,
                  "angle_span_rad": span}
        if self.amplification is not None:
            amp = self.zero_point_length * self.gain
            report["amplified_amplitude_m"] = amp
            report["amplitude_within_slope"] = amp < 1e-9
        return report

    def to_dict(self) -> dict:
        amp = None if self.amplification is None else vars(self.amplification)
        return {"omega_t": self.omega_t, "mass": self.mass, "p_m": self.p_m,
                "release_times": list(self.release_times), "t_f": self.t_f,
                "dz": self.dz, "shots": self.shots, "amplification": amp}


def required_flight_time(mass: float, p_m: float, dz: float, gain: float = 1.0) -> float:
    """Flight time at which one quadrature unit moves the particle by ``dz``."""
    return mass * dz / (p_m * gain)


def half_period_plan(omega_t: float, mass: float, p_m: float, n_angles: int, t_f: float,
                     **kw) -> TofPlan:
    """Release times evenly covering half a trap period."""
    times = tuple(float(t) for t in np.arange(n_angles) * np.pi / (n_angles * omega_t))
    return TofPlan(omega_t, mass, p_m, times, t_f, **kw)


@dataclass(frozen=True)
class QuadratureDataset:
    theta: Array
    x: Array
    seed: int
    shots: int
    noise: dict = field(default_factory=dict)

    CSV_HEADER = ("theta_rad", "x")

    def rows(self):
        for th, xs in zip(self.theta, self.x):
            for v in xs:
                yield float(th), float(v)

    def moments(self) -> tuple[Array, Array]:
        return self.x.mean(axis=1), self.x.var(axis=1)


def _quadrature_sampler(rho: Array, theta: float, n: int, rng: np.random.Generator,
                        points: int = 8001) -> Array:
    dim = rho.shape[0]
    half = 8.0 + 3.0 * math.sqrt(dim)
    grid = np.linspace(-half, half, points)
    pdf = fock.quadrature_pdf(rho, theta, grid)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(grid))])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(rng.random(n), cdf[keep], grid[keep])


def sample(rho: Array, plan: TofPlan, seed: int = 0, accept_infeasible: bool = False,
           include_position: bool = False) -> QuadratureDataset:
    """Simulated release-and-image records, inverted back to quadrature units.

    Each release time draws from its own stream derived from ``seed`` and the
    angle index. With ``include_position`` the particle's position at release
    is kept, so the record is an exact linear mix of two quadratures rather
    than the momentum alone.
    """
    rho = np.asarray(rho, complex)
    if rho.ndim == 1:
        rho = fock.dm(rho)
    fock.check_density(rho, herm_tol=1e-10, trace_tol=1e-8)
    report = plan.feasibility()
    if not report["feasible"] and not accept_infeasible:
        raise InfeasiblePlanError(
            f"lever arm {report['lever_m']:.3e} m is only {report['resolution_ratio']:.3g} "
            f"times the resolution {plan.dz:.3e} m")
    gain, qvar = plan.gain, plan.cavity_noise
    z0 = plan.zero_point_length
    levers = plan.lever()
    out = np.empty((len(plan.release_times), plan.shots))
    for i, (t_e, lever) in enumerate(zip(plan.release_times, levers)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        theta0 = plan.omega_t * t_e
        if include_position:
            angle = theta0 + math.atan2(lever, z0)
            z = math.hypot(lever, z0) * _quadrature_sampler(rho, angle, plan.shots, rng)
        else:
            z = lever * _quadrature_sampler(rho, theta0 + np.pi / 2, plan.shots, rng)
        if qvar:
            z = z + lever / gain * math.sqrt(qvar) * rng.standard_normal(plan.shots)
        if plan.dz:
            z = z + plan.dz * rng.standard_normal(plan.shots)
        out[i] = z / lever
    noise = {"dz": plan.dz, "gain": gain, "cavity_noise_var": qvar,
             "position_term": include_position}
    return QuadratureDataset(plan.angles.copy(), out, seed, plan.shots, noise)


def dataset_from_angles(rho: Array, angles: Array, shots: int, seed: int = 0) -> QuadratureDataset:
    """Ideal quadrature samples at arbitrary angles, bypassing the flight model."""
    rho = fock.dm(rho) if np.ndim(rho) == 1 else np.asarray(rho, complex)
    out = np.empty((len(angles), shots))
    for i, th in enumerate(angles):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out[i] = _quadrature_sampler(rho, float(th), shots, rng)
    return QuadratureDataset(np.asarray(angles, float), out, seed, shots, {"dz": 0.0})


def ramp_kernel(s: Array, cutoff: float) -> Array:
    """Band-limited ramp filter: the integral of ``|k| exp(iks)`` over ``|k| < cutoff``."""
    s = np.asarray(s, float)
    ks = cutoff * s
    small = np.abs(ks) < 1e-3
    safe = np.where(small, 1.0, s)
    val = 2 * (ks * np.sin(ks) + np.cos(ks) - 1) / safe**2
    return np.where(small, cutoff**2 * (1 - ks**2 / 4), val)


def _fold(theta: Array, x: Array) -> tuple[Array, Array]:
    # X(theta + pi) = -X(theta)
    turns = np.floor(theta / np.pi)
    sign = np.where(turns % 2 == 0, 1.0, -1.0)
    return theta - turns * np.pi, x * sign[:, None]


def _angle_weights(theta: Array) -> Array:
    order = np.argsort(theta)
    srt = theta[order]
    gaps = np.diff(np.concatenate([srt, [srt[0] + np.pi]]))
    w_sorted = (gaps + np.roll(gaps, 1)) / 2
    w = np.empty_like(theta)
    w[order] = w_sorted
    return w


@dataclass(frozen=True)
class Reconstruction:
    x: Array
    p: Array
    w: Array
    cutoff: float
    angles: int
    shots: int
    stat_error: float

    def negativity(self) -> float:
        return float(-min(self.w.min(), 0.0))

    def negativity_detected(self, nsigma: float = 3.0) -> bool:
        return self.negativity() > nsigma * self.stat_error

    def rows(self):
        return fock.grid_csv_rows(self.x, self.p, self.w)


def reconstruct(data: QuadratureDataset, x: Array, p: Array, cutoff: float = 4.0,
                bin_width: float = 0.02) -> Reconstruction:
    """Filtered back-projection of the quadrature histograms onto the ``(x, p)`` grid.

    ``stat_error`` is a one-sigma estimate of the pointwise shot noise from
    the spread of the filtered projections.
    """
    theta, samples = _fold(np.asarray(data.theta, float), np.asarray(data.x, float))
    uniq = np.unique(np.round(theta, 12))
    if len(uniq) < MIN_ANGLES:
        raise CoverageError(f"{len(uniq)} distinct angles; need at least {MIN_ANGLES}")
    if samples.shape[1] < MIN_SHOTS:
        raise CoverageError(f"{samples.shape[1]} shots per angle; need at least {MIN_SHOTS}")
    weights = _angle_weights(theta)
    if weights.max() > 4 * np.pi / MIN_ANGLES:
        raise CoverageError("angles leave a gap wider than the coverage limit")
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    reach = math.hypot(np.abs(x).max(), np.abs(p).max())
    # bins symmetric about zero so that folding by a sign flip is exact
    half = math.ceil((max(np.abs(samples).max(), reach) + 4 * bin_width) / bin_width)
    edges = bin_width * np.arange(-half, half + 1)
    centers = (edges[1:] + edges[:-1]) / 2
    n = len(centers)
    kern = ramp_kernel((np.arange(2 * n - 1) - (n - 1)) * bin_width, cutoff)
    xg, pg = np.meshgrid(x, p)
    w = np.zeros(xg.shape)
    var = np.zeros(xg.shape)
    shots = samples.shape[1]
    k2 = kern**2
    for th, row, dth in zip(theta, samples, weights):
        hist, _ = np.histogram(row, bins=edges)
        dens = hist / (shots * bin_width)
        filt = fftconvolve(dens, kern, mode="full")[n - 1: 2 * n - 1] * bin_width
        second = fftconvolve(dens, k2, mode="full")[n - 1: 2 * n - 1] * bin_width
        s = xg * math.cos(th) + pg * math.sin(th)
        q = np.interp(s, centers, filt)
        w += dth * q
        var += dth**2 * np.maximum(np.interp(s, centers, second) - q**2, 0) / shots
    scale = 1 / (4 * np.pi**2)
    return Reconstruction(x, p, w * scale, cutoff, len(uniq), shots,
                          float(np.sqrt(var.max()) * scale))


def overlap(w1: Array, w2: Array, x: Array, p: Array) -> float:
    """``tr(rho1 rho2)`` from two Wigner grids, ``4 pi`` times their phase-space overlap."""
    integrand = np.asarray(w1) * np.asarray(w2)
    return float(4 * np.pi * np.trapezoid(np.trapezoid(integrand, x, axis=1), p))


def overlap_fidelity(rec: Reconstruction, psi: Array) -> float:
    """Fidelity of the reconstruction with a pure target state."""
    return overlap(rec.w, fock.wigner(fock.dm(psi), rec.x, rec.p), rec.x, rec.p)
