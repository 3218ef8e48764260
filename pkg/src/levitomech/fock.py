"""Truncated Fock-space states and operators for one or two bosonic modes.

Conventions: the rotated quadrature is ``X(theta) = exp(i theta) b^dag +
exp(-i theta) b`` so the vacuum has unit variance, ``x = X(0)`` and
``p = X(pi/2)``. The Wigner function is normalized to unit integral over
``dx dp``; the vacuum value at the origin is ``1/(2 pi)``. Two-mode vectors are
ordered ``b (x) a`` with index ``n_b * dim_a + n_a``.
"""

from __future__ import annotations

import math
import warnings
from typing import Any, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, TruncationError, TruncationWarning

Array = np.ndarray

LEAK_WARN = 1e-6


def ladder(dim: int) -> Array:
    if dim < 2:
        raise ConfigError("Fock cutoff must be at least 2")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def number(dim: int) -> Array:
    if dim < 2:
        raise ConfigError("Fock cutoff must be at least 2")
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def quadrature(theta: float, dim: int) -> Array:
    b = ladder(dim)
    return np.exp(1j * theta) * b.conj().T + np.exp(-1j * theta) * b


def fock(n: int, dim: int) -> Array:
    if not 0 <= n < dim:
        raise TruncationError(f"level {n} outside cutoff {dim}")
    v = np.zeros(dim, complex)
    v[n] = 1.0
    return v


def normalize(v: Array) -> Array:
    v = np.asarray(v, complex)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ConfigError("cannot normalize the zero vector")
    return v / nrm


def dm(v: Array) -> Array:
    v = np.asarray(v, complex)
    return np.outer(v, v.conj())


def _log_factorial(n):
    return gammaln(np.asarray(n, float) + 1)


def displacement(alpha: complex, dim: int) -> Array:
    """Exact displacement matrix elements restricted to the first ``dim`` levels.

    Unlike the exponential of a truncated generator, every element equals the
    infinite-dimensional value, so unitarity only degrades near the cutoff.
    """
    alpha = complex(alpha)
    if alpha == 0:
        return np.eye(dim, dtype=complex)
    r2 = abs(alpha) ** 2
    m = np.arange(dim)[:, None]
    n = np.arange(dim)[None, :]
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    k = hi - lo
    logpref = 0.5 * (_log_factorial(lo) - _log_factorial(hi)) - r2 / 2
    lag = _genlaguerre_table(dim, r2)
    mag = np.exp(logpref) * lag[lo, k]
    pw_up = alpha ** k.astype(float)
    pw_dn = (-alpha.conjugate()) ** k.astype(float)
    return np.where(m >= n, pw_up, pw_dn) * mag


def _genlaguerre_table(dim: int, x: float) -> Array:
    """Table ``L[n, k] = L_n^{(k)}(x)`` for ``0 <= n, k < dim``."""
    out = np.zeros((dim, dim))
    k = np.arange(dim, dtype=float)
    out[0] = 1.0
    if dim > 1:
        out[1] = 1 + k - x
    for n in range(1, dim - 1):
        out[n + 1] = ((2 * n + 1 + k - x) * out[n] - (n + k) * out[n - 1]) / (n + 1)
    return out


def displace(state: Array, alpha: complex) -> Array:
    """Displace a ket or a density matrix."""
    state = np.asarray(state, complex)
    d = displacement(alpha, state.shape[0])
    if state.ndim == 1:
        return d @ state
    return d @ state @ d.conj().T


def coherent(alpha: complex, dim: int) -> Array:
    n = np.arange(dim)
    logamp = -abs(alpha) ** 2 / 2 - 0.5 * _log_factorial(n)
    with np.errstate(divide="ignore"):
        v = np.exp(logamp) * complex(alpha) ** n.astype(float)
    leak = 1 - np.vdot(v, v).real
    _guard(leak, "coherent state")
    return normalize(v)


def thermal(nbar: float, dim: int) -> Array:
    if nbar < 0:
        raise ConfigError("mean occupation must be nonnegative")
    if nbar == 0:
        return dm(fock(0, dim))
    q = nbar / (1 + nbar)
    p = (1 - q) * q ** np.arange(dim)
    _guard(1 - p.sum(), "thermal state")
    return np.diag(p / p.sum()).astype(complex)


def _guard(leak: float, what: str, strict: bool = False) -> None:
    if leak > LEAK_WARN:
        msg = f"{what}: truncated norm leakage {leak:.2e} exceeds {LEAK_WARN:g}"
        if strict:
            raise TruncationError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=3)


def tms_amplitudes(r: float, phi: float, dim: int) -> Array:
    n = np.arange(dim)
    return (-np.exp(1j * phi) * math.tanh(r)) ** n / math.cosh(r)


def squeeze_two_mode(r: float, phi: float, dim: int, strict: bool = False) -> Array:
    """Two-mode squeezed vacuum on ``dim x dim`` levels, renormalized."""
    if r < 0:
        raise ConfigError("squeezing parameter must be nonnegative")
    amp = tms_amplitudes(r, phi, dim)
    _guard(math.tanh(r) ** (2 * dim), "two-mode squeezed state", strict)
    v = np.zeros(dim * dim, complex)
    v[np.arange(dim) * (dim + 1)] = amp
    return normalize(v)


def tms_mean_occupation(r: float, relation: str = "standard") -> float:
    """Mean occupation of either mode of a two-mode squeezed vacuum.

    ``relation="standard"`` gives sinh^2 r; ``"cosh"`` gives (cosh r - 1)/2,
    the relation used for squeezing-parameter extraction in the teleport module.
    """
    if relation == "standard":
        return math.sinh(r) ** 2
    if relation == "cosh":
        return (math.cosh(r) - 1) / 2
    raise ConfigError(f"unknown relation {relation!r}")


def two_mode_ops(dim_b: int, dim_a: int) -> tuple[Array, Array]:
    b = np.kron(ladder(dim_b), np.eye(dim_a))
    a = np.kron(np.eye(dim_b), ladder(dim_a))
    return b, a


def ptrace(rho: Array, dims: tuple[int, int], keep: int) -> Array:
    """Partial trace of a ``b (x) a`` operator; ``keep=0`` keeps b, ``keep=1`` keeps a."""
    db, da = dims
    r = np.asarray(rho).reshape(db, da, db, da)
    if keep == 0:
        return np.einsum("iaja->ij", r)
    return np.einsum("bibj->ij", r)


def expect(op: Array, state: Array) -> complex:
    state = np.asarray(state)
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.trace(op @ state))


def fidelity_pure(psi: Array, rho: Array) -> float:
    psi = np.asarray(psi, complex)
    return float(np.vdot(psi, rho @ psi).real)


def check_density(rho: Array, herm_tol: float = 1e-12, trace_tol: float = 1e-10,
                  eig_tol: float = 1e-8) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ConfigError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > trace_tol:
        raise ConfigError("density matrix trace differs from one")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -eig_tol:
        raise ConfigError("density matrix has a negative eigenvalue")


def quadrature_wavefunctions(x: Array, nmax: int) -> Array:
    """Rows ``psi_n(x)`` for n < nmax: the X(0) eigenbasis overlaps of Fock states.

    ``psi_n(x) = (2 pi)^(-1/4) He_n(x) exp(-x^2/4) / sqrt(n!)`` built with the
    normalized three-term recurrence.
    """
    x = np.asarray(x, float)
    out = np.zeros((nmax,) + x.shape)
    out[0] = (2 * np.pi) ** -0.25 * np.exp(-x**2 / 4)
    if nmax > 1:
        out[1] = x * out[0]
    for n in range(1, nmax - 1):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def quadrature_pdf(rho: Array, theta: float, x: Array) -> Array:
    """Probability density of X(theta) outcomes for a single-mode state."""
    rho = np.asarray(rho, complex)
    if rho.ndim == 1:
        rho = dm(rho)
    dim = rho.shape[0]
    psi = quadrature_wavefunctions(x, dim)
    phase = np.exp(-1j * theta * np.arange(dim))
    amp = phase[:, None] * psi
    pdf = np.einsum("mx,mn,nx->x", amp, rho, amp.conj()).real
    return np.clip(pdf, 0, None)


def wigner(rho: Array, x: Array, p: Array) -> Array:
    """Wigner function on the grid, returned with shape ``(len(p), len(x))``.

    Evaluated as the displaced-parity expectation using closed-form matrix
    elements, which is exact for a state supported inside the cutoff.
    """
    rho = np.asarray(rho, complex)
    if rho.ndim == 1:
        rho = dm(rho)
    dim = rho.shape[0]
    xg, pg = np.meshgrid(np.asarray(x, float), np.asarray(p, float))
    z = xg + 1j * pg  # twice the displacement
    r2 = np.abs(z) ** 2
    total = np.zeros(z.shape)
    sign = (-1.0) ** np.arange(dim)
    for k in range(dim):
        # L_m^{(k)}(r2) by upward recurrence in m, paired with rho[m, m + k]
        prev, cur = np.zeros_like(r2), np.ones_like(r2)
        zk = z**k if k else None
        for m in range(dim - k):
            if m:
                prev, cur = cur, ((2 * m - 1 + k - r2) * cur - (m - 1 + k) * prev) / m
            elem = rho[m, m + k]
            if elem == 0:
                continue
            if k == 0:
                total += sign[m] * elem.real * cur
            else:
                coef = sign[m] * math.exp(0.5 * (math.lgamma(m + 1) - math.lgamma(m + k + 1)))
                total += 2 * (coef * elem * zk * cur).real
    return total * np.exp(-r2 / 2) / (2 * np.pi)


def to_json(state: Array) -> dict[str, Any]:
    """Serialize a ket or operator as ``dim``, ``shape`` and [re, im] pairs."""
    state = np.asarray(state, complex)
    return {"dim": int(state.shape[0]), "shape": list(state.shape),
            "data": [[float(z.real), float(z.imag)] for z in state.ravel()]}


def from_json(doc: dict[str, Any]) -> Array:
    data = np.asarray(doc["data"], float)
    return (data[:, 0] + 1j * data[:, 1]).reshape(doc["shape"])


def grid_csv_rows(x: Sequence[float], p: Sequence[float], w: Array):
    for j, pv in enumerate(p):
        for i, xv in enumerate(x):
            yield (float(xv), float(pv), float(w[j, i]))
