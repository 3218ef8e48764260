"""Closed-form optomechanical parameters of a levitated dielectric sphere.

Everything is SI. Reduced Planck's constant appears explicitly wherever a
photon flux or a zero-point scale is formed, and rates are angular (rad/s).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

import numpy as np
from scipy import constants as sc

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class Constants:
    hbar: float = sc.hbar
    c: float = sc.c


SI = Constants()


@dataclass(frozen=True)
class PhysicalConfig:
    """Raw experimental inputs.

    ``detuning`` is the effective cavity detuning including the static
    mechanical shift; ``None`` selects the red sideband (detuning equal to the
    trap frequency).
    """

    radius: float = 100e-9
    density: float = 2201.0
    relative_permittivity: float = 2.1
    young_modulus: float = 73e9
    poisson_ratio: float = 0.17
    cavity_length: float = 4e-3
    finesse: float = 5e5
    cavity_decay_override: float | None = 2 * math.pi * 44e3
    wavelength: float = 1064e-9
    tweezer_power: float = 15e-3
    numerical_aperture: float = 0.8
    cavity_drive_power: float = 0.1e-3
    trap_position_phase: float = math.pi / 4
    detuning: float | None = None

    def __post_init__(self) -> None:
        positive = ("radius", "density", "young_modulus", "cavity_length",
                    "finesse", "wavelength", "tweezer_power",
                    "numerical_aperture", "cavity_drive_power")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if not self.relative_permittivity > 1:
            raise ConfigError("relative_permittivity must exceed 1")
        if not 0 < self.poisson_ratio < 0.5:
            raise ConfigError("poisson_ratio must lie in (0, 0.5)")
        if not self.numerical_aperture <= 1:
            raise ConfigError("numerical_aperture must not exceed 1")
        if self.cavity_decay_override is not None and not self.cavity_decay_override > 0:
            raise ConfigError("cavity_decay_override must be positive when given")
        if self.detuning is not None and not math.isfinite(self.detuning):
            raise ConfigError("detuning must be finite")
        if not math.isfinite(self.trap_position_phase):
            raise ConfigError("trap_position_phase must be finite")
        if self.radius >= self.wavelength:
            warnings.warn("radius is not small compared to the wavelength; "
                          "the point-dipole formulas are outside their validity domain",
                          stacklevel=3)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "PhysicalConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


# Dimension exponents (kg, m, s) of every derived field; radians are dimensionless.
UNITS: dict[str, tuple[int, int, int]] = {
    "dielectric_factor": (0, 0, 0),
    "volume": (0, 3, 0),
    "mass": (1, 0, 0),
    "tweezer_waist": (0, 1, 0),
    "cavity_waist": (0, 1, 0),
    "mode_volume": (0, 3, 0),
    "trap_freq": (0, 0, -1),
    "axial_trap_freq": (0, 0, -1),
    "cavity_freq": (0, 0, -1),
    "laser_freq": (0, 0, -1),
    "zero_point_length": (0, 1, 0),
    "zero_point_momentum": (1, 1, -1),
    "single_photon_coupling": (0, 0, -1),
    "cavity_decay": (0, 0, -1),
    "scatter_decay": (0, 0, -1),
    "recoil_heating": (0, 0, -1),
    "recoil_heating_tweezer": (0, 0, -1),
    "recoil_heating_cavity": (0, 0, -1),
    "drive_rate": (0, 0, -1),
    "cavity_amplitude": (0, 0, 0),
    "photon_number": (0, 0, 0),
    "mech_amplitude": (0, 0, 0),
    "coupling": (0, 0, -1),
    "bare_detuning": (0, 0, -1),
    "detuning": (0, 0, -1),
    "shift_freq": (0, 0, -1),
    "shift_drive": (0, 0, -1),
    "cooling_rate": (0, 0, -1),
    "min_phonons_ideal": (0, 0, 0),
    "min_phonons": (0, 0, 0),
}


@dataclass(frozen=True)
class DerivedParams:
    dielectric_factor: float
    volume: float
    mass: float
    tweezer_waist: float
    cavity_waist: float
    mode_volume: float
    trap_freq: float
    axial_trap_freq: float
    cavity_freq: float
    laser_freq: float
    zero_point_length: float
    zero_point_momentum: float
    single_photon_coupling: float
    cavity_decay: float
    scatter_decay: float
    recoil_heating: float
    recoil_heating_tweezer: float
    recoil_heating_cavity: float
    drive_rate: float
    cavity_amplitude: complex
    photon_number: float
    mech_amplitude: complex
    coupling: float
    bare_detuning: float
    detuning: float
    shift_freq: float
    shift_drive: float
    cooling_rate: float
    min_phonons_ideal: float
    min_phonons: float
    rn_applied: bool = False
    config: PhysicalConfig = field(default_factory=PhysicalConfig, repr=False)
    constants: Constants = field(default=SI, repr=False)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in UNITS:
            v = getattr(self, name)
            out[name] = [v.real, v.imag] if isinstance(v, complex) else float(v)
        out["rn_applied"] = self.rn_applied
        out["units"] = {k: unit_label(d) for k, d in UNITS.items()}
        return out


def unit_label(dims: tuple[int, int, int]) -> str:
    parts = []
    for sym, p in zip(("kg", "m", "s"), dims):
        if p == 1:
            parts.append(sym)
        elif p:
            parts.append(f"{sym}^{p}")
    return " ".join(parts) or "1"


def epsilon_c(relative_permittivity: float) -> float:
    """Clausius-Mossotti factor 3(e-1)/(e+2) of a dielectric sphere."""
    if not relative_permittivity > 1:
        raise DomainError("relative permittivity must exceed 1")
    if math.isinf(relative_permittivity):
        return 3.0
    return 3 * (relative_permittivity - 1) / (relative_permittivity + 2)


def _assemble(cfg: PhysicalConfig, const: Constants, rn: bool) -> DerivedParams:
    hbar, c = const.hbar, const.c
    eps = epsilon_c(cfg.relative_permittivity)
    volume = 4 / 3 * math.pi * cfg.radius**3
    mass = cfg.density * volume
    w_t = cfg.wavelength / (math.pi * cfg.numerical_aperture)
    w_c = math.sqrt(cfg.wavelength * cfg.cavity_length / (2 * math.pi))
    v_c = math.pi * w_c**2 * cfg.cavity_length / 4
    omega_l = 2 * math.pi * c / cfg.wavelength
    intensity = cfg.tweezer_power / (math.pi * w_t**2)
    omega_t0 = math.sqrt(4 * eps * intensity / (cfg.density * c * w_t**2))
    factor = 1 - eps if rn else 1.0
    omega_t = omega_t0 * factor
    omega_par = omega_t * cfg.numerical_aperture / math.sqrt(2)
    kappa = (cfg.cavity_decay_override if cfg.cavity_decay_override is not None
             else c * math.pi / (2 * cfg.finesse * cfg.cavity_length))
    detuning = omega_t if cfg.detuning is None else cfg.detuning
    drive = math.sqrt(2 * cfg.cavity_drive_power * kappa / (hbar * omega_l))
    alpha = drive / complex(kappa, detuning)
    n_ph = abs(alpha) ** 2

    z0_bare = math.sqrt(hbar / (2 * mass * omega_t0))
    delta0 = 0.0
    for _ in range(4):
        # the resonance depends on the bare detuning only through a ~1e-9 correction
        omega_c = omega_l + delta0
        g0 = -factor * z0_bare * eps * omega_c**2 * volume / (c * v_c)
        beta = -g0 * n_ph / omega_t
        delta0 = detuning - 2 * g0 * beta
    omega_c = omega_l + delta0
    k_c = omega_c / c

    z0 = math.sqrt(hbar / (2 * mass * omega_t))
    p_m = math.sqrt(hbar * mass * omega_t / 2)
    kappa_sc = eps**2 * volume**2 * k_c**4 * c / (16 * math.pi * v_c)
    pref = hbar * eps**2 * k_c**6 * volume / (6 * math.pi * cfg.density * omega_t)
    heat_tw = pref * intensity / (hbar * omega_l)
    heat_cav = pref * n_ph * hbar * omega_c * c / (2 * v_c) / (hbar * omega_l)
    g = g0 * abs(alpha)

    sh_freq, sh_drive = _shift(eps, volume, cfg.density, abs(alpha), k_c, omega_c,
                               cfg.tweezer_power, w_t, v_c, z0, const)
    rate, n0, n_m = _cooling(g, detuning, kappa, kappa_sc, omega_t, heat_tw + heat_cav, 0.0)
    return DerivedParams(
        dielectric_factor=eps, volume=volume, mass=mass, tweezer_waist=w_t,
        cavity_waist=w_c, mode_volume=v_c, trap_freq=omega_t,
        axial_trap_freq=omega_par, cavity_freq=omega_c, laser_freq=omega_l,
        zero_point_length=z0, zero_point_momentum=p_m, single_photon_coupling=g0,
        cavity_decay=kappa, scatter_decay=kappa_sc, recoil_heating=heat_tw + heat_cav,
        recoil_heating_tweezer=heat_tw, recoil_heating_cavity=heat_cav,
        drive_rate=drive, cavity_amplitude=alpha, photon_number=n_ph,
        mech_amplitude=complex(beta), coupling=g, bare_detuning=delta0,
        detuning=detuning, shift_freq=sh_freq, shift_drive=sh_drive,
        cooling_rate=rate, min_phonons_ideal=n0, min_phonons=n_m,
        rn_applied=rn, config=cfg, constants=const,
    )


def derive(cfg: PhysicalConfig, constants: Constants = SI) -> DerivedParams:
    return _assemble(cfg, constants, rn=False)


def apply_rn(dp: DerivedParams) -> DerivedParams:
    """Rescale trap frequency and single-photon coupling by (1 - dielectric factor)."""
    if dp.rn_applied:
        raise DomainError("renormalization already applied")
    return _assemble(dp.config, dp.constants, rn=True)


def _shift(eps, volume, density, amp, k_c, omega_c, p_t, w_t, v_c, z0, const):
    hbar, c = const.hbar, const.c
    root = math.sqrt(hbar * omega_c * p_t / (v_c * c * math.pi))
    freq_sq = eps * amp / density * root * (k_c**2 * w_t**2 + 2) / w_t**3
    drive = -eps * volume * amp * k_c * z0 * root / w_t / hbar
    return math.sqrt(freq_sq), drive


def shift_terms(dp: DerivedParams) -> tuple[float, float]:
    """Trap-frequency shift and linear force from tweezer/cavity interference.

    Returns the shift frequency (its square is the curvature per unit mass)
    and the linear drive in rad/s.
    """
    return dp.shift_freq, dp.shift_drive


def _cooling(g, detuning, kappa, kappa_sc, omega_t, heating, others):
    rate = 4 * g**2 * detuning / (kappa * omega_t)
    n0 = ((kappa + kappa_sc) / (4 * omega_t)) ** 2
    if rate == 0:
        return 0.0, n0, math.inf
    return rate, n0, n0 + (heating + others) / rate


def cooling_figures(dp: DerivedParams, other_heating: float = 0.0) -> tuple[float, float, float]:
    """Maximal cooling rate, ideal minimum occupation and heating-limited occupation."""
    if dp.coupling == 0 or dp.detuning == 0:
        raise DomainError("cooling rate vanishes")
    return _cooling(dp.coupling, dp.detuning, dp.cavity_decay, dp.scatter_decay,
                    dp.trap_freq, dp.recoil_heating, other_heating)


def displacement_residuals(dp: DerivedParams, probe: float | None = None) -> tuple[float, float, float]:
    """Relative residuals of the three steady-state displacement equations.

    The output-mode equation is checked through the regular part of the
    continuum amplitude at a probe frequency away from the laser line.
    """
    alpha, beta = dp.cavity_amplitude, dp.mech_amplitude
    g0, kappa, drive = dp.single_photon_coupling, dp.cavity_decay, dp.drive_rate
    cav = (dp.bare_detuning + 2 * g0 * beta.real) * alpha - 1j * kappa * alpha + 1j * drive
    r1 = abs(cav) / max(drive, abs(dp.detuning * alpha))
    r2 = abs(dp.trap_freq * beta + g0 * abs(alpha) ** 2) / max(abs(dp.trap_freq * beta), 1e-300)
    w = probe if probe is not None else dp.cavity_decay
    coupling = math.sqrt(kappa / math.pi)
    regular = 1j * alpha * coupling / w
    r3 = abs(w * regular - 1j * coupling * alpha) / (coupling * abs(alpha))
    return r1, r2, r3


@dataclass(frozen=True)
class SweepRow:
    radius: float
    kappa_ratio: float
    min_phonons: float
    recoil_heating: float
    single_photon_coupling: float


SWEEP_HEADER = ("radius_m", "kappa_sc_over_kappa", "n_M", "gamma_sc_rad_s", "g0_rad_s")


def sweep_radius(cfg: PhysicalConfig, r_min: float, r_max: float, steps: int) -> list[SweepRow]:
    if not (0 < r_min < r_max) or steps < 2:
        raise ConfigError("sweep needs 0 < r_min < r_max and at least two steps")
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for r in np.linspace(r_min, r_max, steps):
            dp = derive(replace(cfg, radius=float(r)))
            rows.append(SweepRow(float(r), dp.scatter_decay / dp.cavity_decay,
                                 dp.min_phonons, dp.recoil_heating,
                                 dp.single_photon_coupling))
    return rows


def crossing(x, y, level: float = 1.0) -> float:
    """First abscissa where ``y`` crosses ``level``, by linear interpolation."""
    x, y = np.asarray(x, float), np.asarray(y, float) - level
    idx = np.nonzero(np.sign(y[:-1]) * np.sign(y[1:]) <= 0)[0]
    if idx.size == 0:
        return math.nan
    i = idx[0]
    if y[i] == y[i + 1]:
        return float(x[i])
    return float(x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))
