"""Weak-coupling Markovian qubit relaxation in the energy eigenbasis.

The Bloch equations are

    dr_x/dt = -(Gamma/2)(2 n + 1) r_x - Omega r_y
    dr_y/dt =  Omega r_x - (Gamma/2)(2 n + 1) r_y
    dr_z/dt = -[Gamma (2 n + 1) + Gamma_dep] (r_z - r_z_eq)

with ``n`` the Bose occupation at the level splitting.  Times are in units
of ``1/Delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .qubit import BlochState, Frame, bloch_to_density

__all__ = [
    "LindbladParams",
    "Trajectory",
    "IntegrationError",
    "NO_RELAXATION",
    "propagate_analytic",
    "propagate_ode",
    "analytic_vectors",
    "gibbs_state",
    "gibbs_bloch_z",
    "bose_occupation",
    "rates",
]

NO_RELAXATION = (math.inf, math.inf)
ODE_TOL = 1e-11


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time!r})")
        self.time = time


def bose_occupation(omega: float, temperature: float) -> float:
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return 0.0
    if math.isinf(temperature):
        return math.inf
    return 1.0 / math.expm1(omega / temperature)


def gibbs_bloch_z(omega: float, temperature: float) -> float:
    """Longitudinal Bloch component of ``exp(-H_S/T)/Z`` with ``H_S = (omega/2) sigma_z``."""
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return -1.0
    return -math.tanh(omega / (2.0 * temperature))


def gibbs_state(omega: float, temperature: float) -> np.ndarray:
    """Thermal state of ``(omega/2) sigma_z`` as a 2x2 density matrix (energy frame)."""
    return bloch_to_density(BlochState((0.0, 0.0, gibbs_bloch_z(omega, temperature)), Frame.ENERGY))


@dataclass(frozen=True)
class LindbladParams:
    """Parameters of the Bloch equations.

    ``r_z_eq`` defaults to the detailed-balance value ``-1/(2 n_beta + 1)``,
    which coincides with the Gibbs value ``-tanh(omega / 2T)``.
    """

    omega: float = 1.0
    gamma: float = 1.0
    gamma_dep: float = 0.0
    n_beta: float = 0.0
    r_z_eq: Optional[float] = None

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")
        if self.gamma < 0 or self.gamma_dep < 0:
            raise ValueError("gamma and gamma_dep must be non-negative")
        if not (self.n_beta >= 0 and math.isfinite(self.n_beta)):
            raise ValueError(f"n_beta must be finite and non-negative, got {self.n_beta!r}")
        if self.r_z_eq is None:
            object.__setattr__(self, "r_z_eq", -1.0 / (2.0 * self.n_beta + 1.0))
        if not -1.0 <= self.r_z_eq <= 1.0:
            raise ValueError(f"r_z_eq must lie in [-1, 1], got {self.r_z_eq!r}")
        if self.gamma > 0:
            assert self.pop_rate > self.coh_rate

    @classmethod
    def thermal(cls, temperature: float, gamma: float = 1.0, omega: float = 1.0,
                gamma_dep: float = 0.0) -> "LindbladParams":
        return cls(
            omega=omega,
            gamma=gamma,
            gamma_dep=gamma_dep,
            n_beta=bose_occupation(omega, temperature),
            r_z_eq=gibbs_bloch_z(omega, temperature),
        )

    @property
    def pop_rate(self) -> float:
        """Decay rate of ``r_z - r_z_eq``."""
        return self.gamma * (2.0 * self.n_beta + 1.0) + self.gamma_dep

    @property
    def coh_rate(self) -> float:
        """Decay rate of the transverse components."""
        return 0.5 * self.gamma * (2.0 * self.n_beta + 1.0)

    @property
    def fixed_point(self) -> BlochState:
        return BlochState((0.0, 0.0, self.r_z_eq), Frame.ENERGY)

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "gamma": self.gamma,
            "gamma_dep": self.gamma_dep,
            "n_beta": self.n_beta,
            "r_z_eq": self.r_z_eq,
        }


def rates(p: LindbladParams) -> tuple[float, float]:
    """Return ``(T_pop, T_coh)``, or ``NO_RELAXATION`` when ``gamma == 0``."""
    if p.gamma == 0:
        return NO_RELAXATION
    return 1.0 / p.pop_rate, 1.0 / p.coh_rate


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    vectors: np.ndarray
    frame: Frame = Frame.ENERGY

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        vectors = np.asarray(self.vectors, dtype=float)
        if times.ndim != 1 or vectors.shape != (times.size, 3):
            raise ValueError("times and vectors must have matching lengths")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms > 1.0 + 1e-9):
            i = int(np.argmax(norms))
            raise ValueError(
                f"unphysical trajectory: |r| = {norms[i]!r} at t = {times[i]!r}"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.times.size

    def state(self, i: int) -> BlochState:
        r = self.vectors[i]
        n = np.linalg.norm(r)
        return BlochState(r / n if n > 1.0 else r, self.frame)

    @property
    def states(self) -> list[BlochState]:
        return [self.state(i) for i in range(len(self))]


def _require_energy(r0: BlochState) -> None:
    if r0.frame is not Frame.ENERGY:
        raise ValueError("Lindblad propagation needs an energy-frame state; use change_frame first")


def analytic_vectors(r0, p: LindbladParams, times) -> np.ndarray:
    """Closed-form Bloch vectors at ``times``; ``r0`` is a raw 3-vector."""
    x0, y0, z0 = np.asarray(r0, dtype=float)
    t = np.asarray(times, dtype=float)
    damp = np.exp(-p.coh_rate * t)
    c = np.cos(p.omega * t)
    s = np.sin(p.omega * t)
    out = np.empty(t.shape + (3,))
    out[..., 0] = damp * (x0 * c - y0 * s)
    out[..., 1] = damp * (x0 * s + y0 * c)
    out[..., 2] = np.exp(-p.pop_rate * t) * (z0 - p.r_z_eq) + p.r_z_eq
    return out


def propagate_analytic(r0: BlochState, p: LindbladParams, t: float) -> BlochState:
    _require_energy(r0)
    if t < 0:
        raise ValueError("t must be non-negative")
    r = analytic_vectors(r0.r, p, t)
    n = np.linalg.norm(r)
    if 1.0 < n <= 1.0 + 1e-12:
        r = r / n
    return BlochState(r, Frame.ENERGY)


def _generator(p: LindbladParams) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([
        [-p.coh_rate, -p.omega, 0.0],
        [p.omega, -p.coh_rate, 0.0],
        [0.0, 0.0, -p.pop_rate],
    ])
    b = np.array([0.0, 0.0, p.pop_rate * p.r_z_eq])
    return a, b


def propagate_ode(r0: BlochState, p: LindbladParams, t_grid, rtol: float = ODE_TOL,
                  atol: float = ODE_TOL * 1e-2) -> Trajectory:
    """Integrate the Bloch equations from ``t = 0`` with an adaptive 8th-order RK."""
    _require_energy(r0)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a non-empty 1-d array")
    if t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be non-negative and strictly increasing")
    a, b = _generator(p)

    def rhs(_t, r):
        return a @ r + b

    t_end = float(t_grid[-1])
    if t_end == 0.0:
        return Trajectory(t_grid, np.asarray(r0.r)[None, :].copy(), Frame.ENERGY)
    sol = solve_ivp(rhs, (0.0, t_end), np.asarray(r0.r), method="DOP853",
                    t_eval=t_grid, rtol=rtol, atol=atol)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"Bloch integration failed: {sol.message}", t_fail)
    return Trajectory(sol.t, sol.y.T, Frame.ENERGY)
