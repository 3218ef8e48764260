"""Continuous-variable teleportation onto the mechanical mode.

A blue-detuned drive in the bad-cavity limit produces a two-mode squeezed
state of the mechanics and the leaking light. The light is consumed by an
ideal Bell measurement whose outcome ``beta`` leaves the mechanics in
``K_beta psi`` with

    K_beta = D(beta) tanh(r)^n D(beta)^dag,  outcome density (1/pi) <psi| D rho_th D^dag |psi>,

``rho_th`` being thermal with mean ``sinh(r)^2``. Averaged over outcomes this
is a Gaussian additive-noise channel of mean occupation ``exp(-2r)``, giving
coherent-state fidelity ``1/(1+exp(-2r))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import fock
from .photon import displaced_output_offset
from .errors import ConfigError, DomainError, TruncationError

Array = np.ndarray

SHOT_CHUNK = 1000
TAIL_TOL = 1e-6


def squeezing(g: float, kappa: float, t: float, relation: str = "cosh") -> tuple[float, float, float]:
    """Phonon number, squeezing parameter and coherent-state fidelity after
    driving for time ``t``.

    ``relation="cosh"`` extracts ``r`` from ``<n> = (cosh r - 1)/2``;
    ``"standard"`` uses ``<n> = sinh(r)^2``.
    """
    if t < 0:
        raise ConfigError("drive time must be nonnegative")
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    x = 2 * g**2 * t / kappa
    n = math.expm1(x)
    if relation == "cosh":
        r = math.acosh(2 * math.exp(x) - 1)
    elif relation == "standard":
        r = math.asinh(math.sqrt(n))
    else:
        raise ConfigError(f"unknown relation {relation!r}")
    return n, r, fidelity_formula(r)


def fidelity_formula(r: float) -> float:
    return 1 / (1 + math.exp(-2 * r))


@dataclass(frozen=True)
class TeleportPlan:
    g: float
    kappa: float
    t: float
    r: float
    ratio: complex
    fidelity: float
    alpha_out: complex = 0j
    phi: float = math.pi / 2

    def filter_diag(self, dim: int) -> Array:
        """Diagonal of the conditional filter: the squeezed-state amplitudes."""
        return fock.tms_amplitudes(self.r, self.phi, dim)

    def to_dict(self) -> dict:
        return {"g": self.g, "kappa": self.kappa, "t": self.t, "r": self.r,
                "ratio": [self.ratio.real, self.ratio.imag], "F": self.fidelity,
                "alpha_out": [self.alpha_out.real, self.alpha_out.imag], "phi": self.phi}


def make_plan(g: float, kappa: float, t: float, alpha_out: complex = 0j,
              phi: float = math.pi / 2, relation: str = "cosh") -> TeleportPlan:
    if g >= kappa:
        warnings.warn("coupling is not small compared to kappa; the bad-cavity "
                      "squeezing formula loses validity", stacklevel=2)
    _, r, f = squeezing(g, kappa, t, relation)
    ratio = -np.exp(1j * phi) * math.tanh(r)
    return TeleportPlan(g, kappa, t, r, complex(ratio), f, complex(alpha_out), phi)


def _binomial_table(n_out: int, n_in: int) -> Array:
    m = np.arange(n_out)[:, None]
    k = np.arange(n_in)[None, :]
    diff = m - k
    with np.errstate(invalid="ignore"):
        logc = 0.5 * (gammaln(m + 1) - gammaln(k + 1)) - gammaln(np.maximum(diff, 0) + 1)
    return np.where(diff >= 0, np.exp(logc), 0.0), diff


def kraus(beta: Array, r: float, n_out: int, n_in: int) -> Array:
    """Batch of ``D(beta) tanh(r)^n D(beta)^dag`` restricted to ``n_out x n_in``.

    Uses the normal-ordered closed form
    ``exp(-(1-t)|beta|^2) exp((1-t) beta b^dag) t^n exp((1-t) conj(beta) b)``,
    whose matrix elements are finite sums and therefore exact after truncation.
    """
    beta = np.atleast_1d(np.asarray(beta, complex))
    t = math.tanh(r)
    u = (1 - t) * beta
    n_mid = min(n_out, n_in)
    c_out, d_out = _binomial_table(n_out, n_mid)
    c_in, d_in = _binomial_table(n_in, n_mid)
    pow_out = u[:, None, None] ** np.maximum(d_out, 0)[None]
    pow_in = np.conj(u)[:, None, None] ** np.maximum(d_in, 0)[None]
    left = c_out[None] * pow_out
    right = c_in[None] * pow_in
    diag = t ** np.arange(n_mid)
    pref = np.exp(-(1 - t) * np.abs(beta) ** 2)
    return pref[:, None, None] * ((left * diag) @ right.transpose(0, 2, 1))


@dataclass(frozen=True)
class TeleportResult:
    rho: Array
    shots: int
    seed: int
    r: float
    fidelity: float = math.nan
    stderr: float = math.nan
    lost_trace: float = 0.0


def _proposal(rho: Array, r: float) -> tuple[complex, float]:
    dim = rho.shape[0]
    b = fock.ladder(dim)
    mean = complex(np.trace(b @ rho))
    nb = float(np.trace(b.conj().T @ b @ rho).real)
    return mean, math.cosh(r) ** 2 + max(nb - abs(mean) ** 2, 0.0)


def teleport(state: Array, r: float, shots: int = 10_000, seed: int = 0,
             phi: float = math.pi / 2, undo_phase: bool = True, target: Array | None = None,
             dim_out: int | None = None, proposal: tuple[complex, float] | None = None,
             self_normalize: bool = True, tail_tol: float = TAIL_TOL) -> TeleportResult:
    """Monte Carlo average of the conditional output over Bell outcomes.

    Outcomes are drawn from a complex Gaussian proposal (exact for coherent
    inputs, where every weight equals one) and reweighted by the outcome
    density. Each block of ``SHOT_CHUNK`` shots has its own seed derived from
    ``seed`` and the block index, so results do not depend on how blocks are
    scheduled. With ``undo_phase`` the receiver removes the known rotation
    picked up from the squeezed-state phase. Raises when the population of
    the top output level exceeds ``tail_tol``.
    """
    if shots < 1:
        raise ConfigError("need at least one shot")
    if r < 0:
        raise ConfigError("squeezing parameter must be nonnegative")
    state = np.asarray(state, complex)
    rho = fock.dm(state) if state.ndim == 1 else state
    n_in = rho.shape[0]
    n_out = max(n_in, 40) if dim_out is None else dim_out
    if target is None and state.ndim == 1:
        target = state
    mean, var = _proposal(rho, r) if proposal is None else proposal
    cosh2 = math.cosh(r) ** 2
    acc = np.zeros((n_out, n_out), complex)
    nums, dens = [], []
    tgt = None
    if target is not None:
        tgt = np.zeros(n_out, complex)
        tgt[: len(target)] = target
    done = 0
    block = 0
    while done < shots:
        size = min(SHOT_CHUNK, shots - done)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
        z = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * math.sqrt(var / 2)
        beta = mean + z
        q = np.exp(-np.abs(z) ** 2 / var) / (math.pi * var)
        k = kraus(beta, r, n_out, n_in)
        out = k @ rho @ k.conj().transpose(0, 2, 1)
        w = 1 / (math.pi * cosh2 * q)
        acc += np.tensordot(w, out, axes=1)
        dens.append(w * np.einsum("smm->s", out).real)
        if tgt is not None:
            nums.append(w * ((out @ tgt) @ tgt.conj()).real)
        done += size
        block += 1
    den = np.concatenate(dens)
    total = den.sum()
    rho_out = acc / total if self_normalize else acc / shots
    lost = 1 - total / shots
    tail = float(rho_out[-1, -1].real / max(np.trace(rho_out).real, 1e-300))
    if tail > tail_tol:
        raise TruncationError(f"output population {tail:.2e} at the cutoff; raise dim_out")
    if not undo_phase:
        rot = np.exp(1j * (np.pi + phi) * np.arange(n_out))
        rho_out = rot[:, None] * rho_out * rot.conj()[None, :]
    fid = err = math.nan
    if tgt is not None:
        num = np.concatenate(nums)
        fid = float(num.sum() / total)
        err = float(math.sqrt(np.sum((num - fid * den) ** 2)) / total)
        if not undo_phase:
            fid = fock.fidelity_pure(tgt, rho_out)
    return TeleportResult(rho_out, shots, seed, r, fid, err, float(lost))


def channel_oracle(rho: Array, r: float, dim_out: int | None = None, n_quad: int = 48) -> Array:
    """Additive Gaussian noise of mean occupation ``exp(-2r)`` applied to ``rho``,
    by Gauss-Laguerre/trapezoid quadrature over displacements."""
    rho = np.asarray(rho, complex)
    n_in = rho.shape[0]
    n_out = max(n_in, 40) if dim_out is None else dim_out
    big = np.zeros((n_out, n_out), complex)
    big[:n_in, :n_in] = rho
    nbar = math.exp(-2 * r)
    x, w = np.polynomial.laguerre.laggauss(n_quad)
    angles = np.linspace(0, 2 * np.pi, 2 * n_quad, endpoint=False)
    out = np.zeros_like(big)
    for xi, wi in zip(x, w):
        radius = math.sqrt(xi * nbar)
        for a in angles:
            d = fock.displacement(radius * np.exp(1j * a), n_out)
            out += wi / len(angles) * (d @ big @ d.conj().T)
    return out


@dataclass(frozen=True)
class FrameCorrection:
    pre_displacement: complex
    filtered: Array
    min_weight: float
    state: Array | None


def frame_corrections(plan: TeleportPlan, dp, target: Array, alpha_out: complex | None = None,
                      min_weight: float = 1e-12) -> FrameCorrection:
    """Input state that yields ``target`` after the squeezed-state filter.

    The output offset is taken from ``alpha_out`` if given, else from the
    derived parameters ``dp`` (the reflected-field offset), else from the plan.
    Returns the pre-displacement ``conj(alpha_out)``, the filtered ket
    ``O^-1 target`` normalized, the smallest filter weight on the target
    support, and the displaced input when it fits in the cutoff.
    """
    target = fock.normalize(target)
    dim = len(target)
    diag = plan.filter_diag(dim)
    support = np.abs(target) > 1e-14
    weight = float(np.min(np.abs(diag[support])))
    if weight < min_weight:
        raise DomainError(f"filter weight {weight:.2e} on the target support is ill-conditioned")
    filtered = fock.normalize(np.where(support, target / diag, 0))
    if alpha_out is None:
        alpha_out = plan.alpha_out if dp is None else displaced_output_offset(dp)
    shift = complex(np.conj(alpha_out))
    state = None
    if abs(shift) ** 2 < dim / 4:
        state = fock.displacement(shift, dim) @ filtered
    return FrameCorrection(shift, filtered, weight, state)
