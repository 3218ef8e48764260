"""Internal vibrations of the trapped sphere and their coupling to the centre of mass.

Longitudinal modes use the cube-of-side-2R cosine ansatz
``u_n(z) = sqrt(2) cos(k_n (z + R))``, ``k_n = n pi / 2R``, normalized so that
``int u_n u_m d^3x = delta_nm V`` over the cube. Couplings are integrated over
the sphere volume after removing each mode's mean on the sphere, which keeps
the zero-mean deformation constraint on the actual body. A sphere integral of
a function of ``z`` reduces to ``int pi (R^2 - z^2) f(z) dz``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Protocol

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, ConvergenceError, DomainError
from .params import SI, DerivedParams, epsilon_c

Array = np.ndarray


def lame_constants(young: float, poisson: float) -> tuple[float, float]:
    lam = poisson * young / ((1 + poisson) * (1 - 2 * poisson))
    mu = young / (2 * (1 + poisson))
    return lam, mu


@dataclass(frozen=True)
class ElasticModel:
    young: float
    poisson: float
    density: float
    radius: float
    n_max: int
    omega_t: float
    mass: float
    occupations: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if min(self.young, self.density, self.radius, self.mass) <= 0:
            raise ConfigError("material constants, radius and mass must be positive")
        if not 0 < self.poisson < 0.5:
            raise ConfigError("Poisson ratio must lie in (0, 0.5)")
        if self.n_max < 1:
            raise ConfigError("need at least one mode")
        if self.omega_t < 0:
            raise ConfigError("trap frequency must be nonnegative")
        if self.occupations is not None:
            if len(self.occupations) != self.n_max or min(self.occupations) < 0:
                raise ConfigError("need one nonnegative occupation per mode")

    @cached_property
    def lame(self) -> tuple[float, float]:
        return lame_constants(self.young, self.poisson)

    @property
    def c_par(self) -> float:
        lam, mu = self.lame
        return math.sqrt((lam + 2 * mu) / self.density)

    @property
    def c_perp(self) -> float:
        return math.sqrt(self.lame[1] / self.density)

    @property
    def n(self) -> Array:
        return np.arange(1, self.n_max + 1)

    @property
    def k(self) -> Array:
        return self.n * np.pi / (2 * self.radius)

    @property
    def omega(self) -> Array:
        return self.c_par * self.k

    @property
    def omega_prime(self) -> Array:
        return np.sqrt(self.omega_t**2 + self.omega**2)

    @property
    def occupation(self) -> Array:
        return np.zeros(self.n_max) if self.occupations is None else np.asarray(self.occupations)

    def lame_identity_residual(self) -> float:
        lam, mu = self.lame
        return abs(lam * (1 - self.poisson) / self.poisson - (lam + 2 * mu)) / (lam + 2 * mu)

    def to_dict(self) -> dict:
        lam, mu = self.lame
        return {"young": self.young, "poisson": self.poisson, "density": self.density,
                "radius": self.radius, "lame_lambda": lam, "lame_mu": mu,
                "c_par": self.c_par, "c_perp": self.c_perp, "omega_t": self.omega_t,
                "mass": self.mass, "n": self.n.tolist(), "k": self.k.tolist(),
                "omega": self.omega.tolist(), "omega_prime": self.omega_prime.tolist(),
                "occupations": self.occupation.tolist()}


def build(young: float, poisson: float, density: float, radius: float, n_max: int = 20,
          omega_t: float = 0.0, mass: float | None = None,
          occupations: tuple[float, ...] | None = None) -> ElasticModel:
    if mass is None:
        mass = density * 4 / 3 * math.pi * radius**3
    occ = None if occupations is None else tuple(float(o) for o in occupations)
    return ElasticModel(young, poisson, density, radius, n_max, omega_t, mass, occ)


def from_derived(dp: DerivedParams, n_max: int = 20,
                 occupations: tuple[float, ...] | None = None) -> ElasticModel:
    cfg = dp.config
    return build(cfg.young_modulus, cfg.poisson_ratio, cfg.density, cfg.radius, n_max,
                 dp.trap_freq, dp.mass, occupations)


def mode(n: int, radius: float, z: Array) -> Array:
    """Cube eigenmode ``n`` at axial positions ``z`` measured from the centre."""
    return math.sqrt(2) * np.cos(n * np.pi / (2 * radius) * (np.asarray(z) + radius))


def mode_derivative(n: int, radius: float, z: Array) -> Array:
    k = n * np.pi / (2 * radius)
    return -math.sqrt(2) * k * np.sin(k * (np.asarray(z) + radius))


class Potential(Protocol):
    def d1(self, z: Array) -> Array: ...
    def d2(self, z: Array) -> Array: ...


@dataclass(frozen=True)
class StandingWave:
    """Energy density ``-A cos^2(k z - phi)`` of the intracavity standing wave (J/m^3)."""

    amplitude: float
    k: float
    phi: float

    def value(self, z):
        return -self.amplitude * np.cos(self.k * np.asarray(z) - self.phi) ** 2

    def d1(self, z):
        return self.amplitude * self.k * np.sin(2 * (self.k * np.asarray(z) - self.phi))

    def d2(self, z):
        return 2 * self.amplitude * self.k**2 * np.cos(2 * (self.k * np.asarray(z) - self.phi))

    @classmethod
    def from_derived(cls, dp: DerivedParams) -> "StandingWave":
        eps = epsilon_c(dp.config.relative_permittivity)
        amp = eps * dp.constants.hbar * dp.cavity_freq * dp.photon_number / dp.mode_volume
        return cls(amp, dp.cavity_freq / dp.constants.c, dp.config.trap_position_phase)


@dataclass(frozen=True)
class Harmonic:
    curvature: float

    def d1(self, z):
        return self.curvature * np.asarray(z)

    def d2(self, z):
        return np.full(np.shape(z), self.curvature, float)


@dataclass(frozen=True)
class Profile:
    """Potential given by callables for its first and second derivatives."""

    first: Callable[[Array], Array]
    second: Callable[[Array], Array]

    def d1(self, z):
        return self.first(np.asarray(z))

    def d2(self, z):
        return self.second(np.asarray(z))


def _sphere_rule(radius: float, nodes: int) -> tuple[Array, Array]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    z = radius * x
    return z, radius * w * np.pi * (radius**2 - z**2)


def _sphere_means(model: ElasticModel, z: Array, w: Array) -> Array:
    vol = 4 / 3 * math.pi * model.radius**3
    return np.array([w @ mode(n, model.radius, z) for n in model.n]) / vol


@dataclass(frozen=True)
class Couplings:
    gamma: Array
    xi: Array
    g: Array
    q0: Array
    quadrature_error: float

    CSV_HEADER = ("n", "omega_n", "gamma_n")


def _integrals(model: ElasticModel, potential: Potential, nodes: int):
    z, w = _sphere_rule(model.radius, nodes)
    means = _sphere_means(model, z, w)
    u = np.array([mode(n, model.radius, z) for n in model.n]) - means[:, None]
    d1, d2 = potential.d1(z), potential.d2(z)
    vals = (u @ (w * d1), u @ (w * d2), (u * (w * d2)) @ u.T)
    # integrals of absolute values set the scale for the convergence test
    au = np.abs(u)
    mags = (au @ (w * np.abs(d1)), au @ (w * np.abs(d2)), (au * (w * np.abs(d2))) @ au.T)
    return vals, mags


def couplings(model: ElasticModel, potential: Potential, z0: float, nodes: int = 256,
              hbar: float = SI.hbar, rtol: float = 1e-10) -> Couplings:
    """Vibrational couplings ``gamma_n`` (to the centre of mass), ``xi_nm``
    (mode-mode) and ``g_n`` (to the field), all in rad/s.

    Gauss-Legendre over the sphere, compared against a rule with twice the
    nodes; a change beyond ``rtol`` of the absolute-value integral raises.
    """
    coarse, _ = _integrals(model, potential, nodes)
    fine, mags = _integrals(model, potential, 2 * nodes)
    err = 0.0
    for a, b, m in zip(coarse, fine, mags):
        scale = np.max(m)
        if scale:
            err = max(err, float(np.abs(a - b).max() / scale))
    if err > rtol:
        raise ConvergenceError(f"sphere quadrature did not converge (relative change {err:.1e})")
    j1, j2, j_nm = fine
    q0 = np.sqrt(hbar / (2 * model.mass * model.omega_prime))
    gamma = z0 * q0 * j2 / hbar
    g = q0 * j1 / hbar
    xi = np.outer(q0, q0) * j_nm / (2 * hbar)
    return Couplings(gamma, xi, g, q0, err)


def gamma_adaptive(model: ElasticModel, potential: Potential, z0: float, n: int,
                   hbar: float = SI.hbar, epsrel: float = 1e-12) -> float:
    """Single ``gamma_n`` by adaptive quadrature, independent of the fixed rule."""
    r = model.radius
    weight = lambda z: np.pi * (r**2 - z**2)
    vol = 4 / 3 * math.pi * r**3
    mean = quad(lambda z: weight(z) * mode(n, r, z), -r, r, epsrel=epsrel, limit=200)[0] / vol
    f = lambda z: weight(z) * float(potential.d2(z)) * (mode(n, r, z) - mean)
    mag = quad(lambda z: abs(f(z)), -r, r, limit=200)[0]
    val = quad(f, -r, r, epsrel=epsrel, epsabs=epsrel * mag, limit=200)[0]
    q0 = math.sqrt(hbar / (2 * model.mass * model.omega_prime[n - 1]))
    return z0 * q0 * val / hbar


def mode_frequency_numeric(model: ElasticModel, n: int, nodes: int = 256) -> float:
    """Rayleigh quotient ``(lambda + 2 mu) int u'^2 / (rho int u^2)`` on the cube."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    z, w = model.radius * x, model.radius * w
    lam, mu = model.lame
    num = (lam + 2 * mu) * w @ mode_derivative(n, model.radius, z) ** 2
    den = model.density * w @ mode(n, model.radius, z) ** 2
    return math.sqrt(num / den)


def cube_overlaps(model: ElasticModel, nodes: int = 256) -> tuple[Array, Array]:
    """Mode integrals over the cube divided by its volume: means and the Gram matrix."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    z, w = model.radius * x, model.radius * w
    side = 2 * model.radius
    u = np.array([mode(n, model.radius, z) for n in model.n])
    # transverse factors integrate to side^2 and cancel against the cube volume
    return u @ w / side, (u * w) @ u.T / side


def sphere_means(model: ElasticModel, nodes: int = 256) -> Array:
    """Means over the sphere after the mean subtraction used for couplings (should vanish)."""
    z, w = _sphere_rule(model.radius, nodes)
    means = _sphere_means(model, z, w)
    u = np.array([mode(n, model.radius, z) for n in model.n]) - means[:, None]
    return u @ w / (4 / 3 * math.pi * model.radius**3)


@dataclass(frozen=True)
class Renormalization:
    ratio_sq: float
    correction: float
    terms: Array
    tail_ratio: float
    scale_separation: float


def trap_renormalization(model: ElasticModel, gamma: Array, omega_t: float | None = None,
                         occupations: Array | None = None,
                         min_separation: float = 10.0) -> Renormalization:
    """Squared trap-frequency ratio after eliminating the vibrational modes.

    ``tail_ratio`` is the share of the sum carried by the upper half of the
    modes, a convergence indicator for the truncation at ``n_max``.
    """
    w_t = model.omega_t if omega_t is None else omega_t
    if w_t <= 0:
        raise ConfigError("trap frequency must be positive")
    occ = model.occupation if occupations is None else np.asarray(occupations, float)
    w_n = model.omega_prime
    if np.any(w_n < min_separation * w_t):
        worst = int(np.argmin(w_n)) + 1
        raise DomainError(f"mode {worst} is within a factor {min_separation:g} of the trap "
                          "frequency; adiabatic elimination does not apply")
    terms = 4 * np.asarray(gamma) ** 2 * (2 * occ + 1) / (w_t * (w_n - w_t))
    total = float(terms.sum())
    ratio_sq = 1 - total
    # |sqrt(1 - S) - 1| without cancellation
    correction = abs(total) / (1 + math.sqrt(max(ratio_sq, 0.0)))
    half = len(terms) // 2
    tail = float(np.abs(terms[half:]).sum() / np.abs(terms).sum()) if total else 0.0
    return Renormalization(ratio_sq, correction, terms, tail, w_t / model.omega[0])
