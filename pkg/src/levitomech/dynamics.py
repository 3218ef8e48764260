"""Master-equation integration for one cavity mode coupled to one mechanical mode.

The generator is

    d rho/dt = -i[H, rho] + kappa D[a] rho + kappa_sc D[a] rho - Gamma [X, [X, rho]]

with ``D[a] rho = 2 a rho a^dag - {a^dag a, rho}`` and ``X = b + b^dag``. Rates
are amplitude rates: an empty-cavity photon number decays as
``exp(-2 (kappa + kappa_sc) t)``. The diffusion term heats the oscillator at
``d<b^dag b>/dt = 2 Gamma`` and provides no damping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import fock
from .errors import ConfigError, ConvergenceError, TruncationError

Array = np.ndarray
Coupling = float | Callable[[float], float]


class StepSizeError(ConvergenceError):
    """The integrated state lost positivity beyond tolerance."""


@dataclass(frozen=True)
class LindbladModel:
    dim_b: int
    dim_a: int
    hamiltonian: Literal["red", "blue", "full"]
    g: Coupling
    omega_t: float
    kappa: float
    kappa_sc: float = 0.0
    gamma_sc: float = 0.0
    detuning: float | None = None

    def __post_init__(self) -> None:
        if self.hamiltonian not in ("red", "blue", "full"):
            raise ConfigError(f"unknown Hamiltonian {self.hamiltonian!r}")
        if min(self.kappa, self.kappa_sc, self.gamma_sc) < 0:
            raise ConfigError("rates must be nonnegative")
        if self.dim_a < 2 or self.dim_b < 2:
            raise ConfigError("cutoffs must be at least 2")

    @property
    def dims(self) -> tuple[int, int]:
        return self.dim_b, self.dim_a

    @property
    def cavity_detuning(self) -> float:
        if self.detuning is not None:
            return self.detuning
        return -self.omega_t if self.hamiltonian == "blue" else self.omega_t

    def to_dict(self) -> dict:
        g = self.g if not callable(self.g) else "time-dependent"
        return {"dim_b": self.dim_b, "dim_a": self.dim_a, "hamiltonian": self.hamiltonian,
                "g": g, "omega_t": self.omega_t, "kappa": self.kappa,
                "kappa_sc": self.kappa_sc, "gamma_sc": self.gamma_sc,
                "detuning": self.cavity_detuning}


def operators(model: LindbladModel) -> dict[str, Array]:
    b, a = fock.two_mode_ops(model.dim_b, model.dim_a)
    bd, ad = b.conj().T, a.conj().T
    if model.hamiltonian == "red":
        hint = ad @ b + a @ bd
    elif model.hamiltonian == "blue":
        hint = ad @ bd + a @ b
    else:
        hint = (ad + a) @ (bd + b)
    h0 = model.cavity_detuning * ad @ a + model.omega_t * bd @ b
    return {"a": a, "b": b, "n_a": ad @ a, "n_b": bd @ b, "h0": h0, "hint": hint}


def _commutator_super(h: Array) -> sp.csr_matrix:
    # row-major vectorization: vec(A rho B) = (A kron B^T) vec(rho)
    eye = sp.identity(h.shape[0], dtype=complex, format="csr")
    hs = sp.csr_matrix(h)
    return sp.kron(hs, eye, format="csr") - sp.kron(eye, hs.T, format="csr")


def _dissipator_super(c: Array) -> sp.csr_matrix:
    eye = sp.identity(c.shape[0], dtype=complex, format="csr")
    cs = sp.csr_matrix(c)
    cdc = sp.csr_matrix(c.conj().T @ c)
    return (2 * sp.kron(cs, cs.conj(), format="csr")
            - sp.kron(cdc, eye, format="csr") - sp.kron(eye, cdc.T, format="csr"))


def liouvillian(model: LindbladModel) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Static part and coupling part of the generator (the latter multiplies g)."""
    ops = operators(model)
    x = ops["b"] + ops["b"].conj().T
    static = -1j * _commutator_super(ops["h0"])
    static = static + (model.kappa + model.kappa_sc) * _dissipator_super(ops["a"])
    if model.gamma_sc:
        cx = _commutator_super(x)
        static = static - model.gamma_sc * (cx @ cx)
    coupling = -1j * _commutator_super(ops["hint"])
    return static.tocsr(), coupling.tocsr()


@dataclass(frozen=True)
class Trajectory:
    t: Array
    states: Array
    n_a: Array
    n_b: Array
    trace: Array
    purity: Array
    error_bound: float
    n_steps: int

    CSV_HEADER = ("t", "tr", "n_a", "n_b", "purity")

    def rows(self):
        for row in zip(self.t, self.trace, self.n_a, self.n_b, self.purity):
            yield tuple(float(v) for v in row)


_STAGES = {"DOP853": 12, "RK45": 6, "RK23": 3}


def _rhs(model: LindbladModel):
    static, coupling = liouvillian(model)
    d2 = static.shape[0]
    if d2 <= 1024:
        static, coupling = static.toarray(), coupling.toarray()
    if callable(model.g):
        gfun = model.g
        return lambda t, y: static @ y + gfun(t) * (coupling @ y)
    total = static + model.g * coupling
    return lambda t, y: total @ y


def evolve(rho0: Array, model: LindbladModel, t_final: float, rtol: float = 1e-8,
           atol: float | None = None, t_eval: Array | None = None,
           method: str = "DOP853", check_positivity: bool = True,
           max_steps: int | None = None) -> Trajectory:
    """Integrate from ``rho0`` to ``t_final`` with embedded adaptive Runge-Kutta."""
    rho0 = np.asarray(rho0, complex)
    d = model.dim_b * model.dim_a
    if rho0.ndim == 1:
        rho0 = fock.dm(rho0)
    if rho0.shape != (d, d):
        raise ConfigError(f"state shape {rho0.shape} does not match model dimension {d}")
    if t_final < 0:
        raise ConfigError("final time must be nonnegative")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, 201)
    t_eval = np.asarray(t_eval, float)
    atol = rtol * 1e-3 if atol is None else atol
    fun = _rhs(model)
    if t_final == 0:
        ys = rho0.reshape(1, -1)
        nfev = 0
        t_eval = np.zeros(1)
    else:
        sol = solve_ivp(fun, (0.0, t_final), rho0.ravel(), method=method, t_eval=t_eval,
                        rtol=rtol, atol=atol)
        if sol.status != 0:
            raise ConvergenceError(f"integrator failed: {sol.message}")
        ys, nfev = sol.y.T, sol.nfev
    n_steps = max(nfev // _STAGES.get(method, 6), 1)
    if max_steps is not None and n_steps > max_steps:
        raise ConvergenceError("step budget exceeded")
    states = ys.reshape(-1, d, d)
    ops = operators(model)
    n_a = np.einsum("ij,tji->t", ops["n_a"], states).real
    n_b = np.einsum("ij,tji->t", ops["n_b"], states).real
    trace = np.einsum("tii->t", states).real
    purity = np.einsum("tij,tji->t", states, states).real
    if check_positivity:
        herm = (states + states.conj().transpose(0, 2, 1)) / 2
        worst = np.linalg.eigvalsh(herm).min()
        if worst < -1e-6:
            raise StepSizeError(f"negative eigenvalue {worst:.2e}; tighten the tolerance")
    bound = n_steps * (rtol * np.abs(ys).max() + atol)
    return Trajectory(t_eval, states, n_a, n_b, trace, purity, float(bound), int(n_steps))


def step(rho: Array, model: LindbladModel, dt: float, rtol: float = 1e-8) -> Array:
    return evolve(rho, model, dt, rtol=rtol, t_eval=np.array([0.0, dt])).states[-1]


def cooling_rate(model: LindbladModel) -> float:
    """Weak-coupling sideband cooling rate of <b^dag b> for amplitude decay rates."""
    g = model.g(0.0) if callable(model.g) else model.g
    k = model.kappa + model.kappa_sc
    w = model.omega_t
    # difference of Stokes and anti-Stokes scattering rates
    return g**2 * (2 * k / (k**2 + (model.cavity_detuning - w) ** 2)
                   - 2 * k / (k**2 + (model.cavity_detuning + w) ** 2))


def sideband_limit(kappa_linewidth: float, omega_t: float) -> float:
    """Resolved-sideband occupation limit (linewidth / 4 omega_t)^2.

    ``kappa_linewidth`` is the cavity energy decay rate, which is twice the
    amplitude rate used by :class:`LindbladModel`.
    """
    return (kappa_linewidth / (4 * omega_t)) ** 2


@dataclass(frozen=True)
class SteadyState:
    n_b: float
    n_a: float
    time: float
    rate: float
    drift: float
    rho: Array


def cooling_steady_state(model: LindbladModel, rho0: Array | None = None,
                         max_time: float | None = None, tol: float = 1e-6) -> SteadyState:
    """Evolve until ``|d<b^dag b>/dt| < tol * rate * <b^dag b>``.

    ``rate`` is the weak-coupling cooling rate. The generator is constant, so
    the evolution is advanced with its exact propagator over fixed chunks.
    Raises when the occupation keeps growing toward the cutoff or the time
    budget runs out.
    """
    if callable(model.g):
        raise ConfigError("steady state needs a constant coupling")
    rate = cooling_rate(model)
    if rate <= 0:
        raise ConvergenceError("no cooling: the sideband rates do not damp the oscillator")
    d = model.dim_b * model.dim_a
    rho = fock.dm(fock.fock(0, d)) if rho0 is None else np.asarray(rho0, complex)
    static, coupling = liouvillian(model)
    gen = (static + model.g * coupling).toarray()
    chunk = 1.0 / rate
    prop = expm(gen * chunk)
    n_b_op = operators(model)["n_b"]
    n_a_op = operators(model)["n_a"]
    top = np.kron(np.diag(np.eye(model.dim_b)[-1]), np.eye(model.dim_a))
    max_time = 200.0 / rate if max_time is None else max_time
    y, t = rho.ravel(), 0.0
    while t < max_time:
        y = prop @ y
        t += chunk
        rho = y.reshape(d, d)
        n = float(np.trace(n_b_op @ rho).real)
        drift = float(np.trace(n_b_op @ (gen @ y).reshape(d, d)).real)
        if np.trace(top @ rho).real > 1e-3:
            raise TruncationError("phonon population reaches the cutoff; no steady state")
        if abs(drift) <= tol * rate * n:
            n_a = float(np.trace(n_a_op @ rho).real)
            return SteadyState(n, n_a, t, rate, drift, rho)
    raise ConvergenceError("steady state not reached within the time budget")


def steady_state_direct(model: LindbladModel) -> Array:
    """Null vector of the generator with unit trace, by a sparse linear solve."""
    static, coupling = liouvillian(model)
    gen = (static + (model.g(0.0) if callable(model.g) else model.g) * coupling).tolil()
    d = model.dim_b * model.dim_a
    gen[0, :] = np.eye(d).ravel()
    rhs = np.zeros(d * d, complex)
    rhs[0] = 1.0
    rho = sp.linalg.spsolve(gen.tocsc(), rhs).reshape(d, d)
    return (rho + rho.conj().T) / 2
