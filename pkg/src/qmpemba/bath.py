"""Ohmic bath: spectral density, discretisation into modes, chain mapping."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammainc, gammaincc

__all__ = [
    "SpectralDensity",
    "StarBath",
    "ChainBath",
    "discretize",
    "star_to_chain",
    "chain_matrix",
]


def _gamma_window(k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``P(k, y) - P(k, x)`` for the regularised lower incomplete gamma, computed
    on whichever tail avoids cancellation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lower = gammainc(k, y) - gammainc(k, x)
    upper = gammaincc(k, x) - gammaincc(k, y)
    return np.where(y <= k, lower, upper)


@dataclass(frozen=True)
class SpectralDensity:
    """``J(w) = (alpha/2) w exp(-w/omega_c)``."""

    alpha: float
    omega_c: float = 60.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 0.5 * self.alpha * omega * np.exp(-omega / self.omega_c)

    def weight(self, a, b):
        """``int_a^b J(w) dw``."""
        wc = self.omega_c
        return 0.5 * self.alpha * wc ** 2 * _gamma_window(2, np.asarray(a) / wc, np.asarray(b) / wc)

    def mean_frequency(self, a, b):
        """J-weighted mean frequency on ``[a, b]`` (independent of alpha)."""
        wc = self.omega_c
        m0 = _gamma_window(2, np.asarray(a) / wc, np.asarray(b) / wc)
        m1 = 2.0 * wc * _gamma_window(3, np.asarray(a) / wc, np.asarray(b) / wc)
        return m1 / m0

    @property
    def total_weight(self) -> float:
        return 0.5 * self.alpha * self.omega_c ** 2


@dataclass(frozen=True)
class StarBath:
    frequencies: np.ndarray
    couplings: np.ndarray
    omega_max: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float).copy()
        g = np.asarray(self.couplings, dtype=float).copy()
        if w.ndim != 1 or w.shape != g.shape or w.size < 1:
            raise ValueError("frequencies and couplings must be equal-length 1-d arrays")
        if np.any(w <= 0):
            raise ValueError("mode frequencies must be positive")
        w.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "couplings", g)

    @property
    def n_modes(self) -> int:
        return int(self.frequencies.size)

    def moment(self, m: int) -> float:
        return float(np.sum(self.couplings ** 2 * self.frequencies ** m))


@dataclass(frozen=True)
class ChainBath:
    """Nearest-neighbour chain: ``sum eps_n a_n^+ a_n + t_n (a_n^+ a_{n+1} + h.c.)``,
    coupled to the qubit through ``c0 (a_0 + a_0^+)``.

    ``transform[n, k]`` expresses chain mode ``n`` in star modes ``k``.
    """

    energies: np.ndarray
    hoppings: np.ndarray
    c0: float
    transform: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        t = np.asarray(self.hoppings, dtype=float)
        if e.ndim != 1 or t.shape != (max(e.size - 1, 0),):
            raise ValueError("need len(hoppings) == len(energies) - 1")
        if np.any(t <= 0):
            raise ValueError("chain hoppings must be positive")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "hoppings", t)

    @property
    def n_modes(self) -> int:
        return int(self.energies.size)

    def moment(self, m: int) -> float:
        """``c0^2 <0| T^m |0>`` for the single-particle chain matrix ``T``."""
        v = np.zeros(self.n_modes)
        v[0] = 1.0
        t = chain_matrix(self)
        for _ in range(m):
            v = t @ v
        return float(self.c0 ** 2 * v[0])


def chain_matrix(chain: ChainBath) -> np.ndarray:
    return np.diag(chain.energies) + np.diag(chain.hoppings, 1) + np.diag(chain.hoppings, -1)


def discretize(j: SpectralDensity, n_modes: int, omega_max: Optional[float] = None,
               scheme: str = "linear", log_base: float = 2.0) -> StarBath:
    """Split ``[0, omega_max]`` into ``n_modes`` bins, one mode per bin.

    Each mode sits at its bin's J-weighted mean frequency and carries
    ``g_k^2 = int_bin J``.  ``scheme="logarithmic"`` uses edges
    ``omega_max * log_base**-k`` with the lowest bin reaching down to 0.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    if omega_max is None:
        omega_max = 5.0 * j.omega_c
    if not omega_max > 0:
        raise ValueError("omega_max must be positive")
    if scheme == "linear":
        edges = np.linspace(0.0, omega_max, n_modes + 1)
    elif scheme in ("logarithmic", "log"):
        if not log_base > 1:
            raise ValueError("log_base must exceed 1")
        upper = omega_max * log_base ** -np.arange(n_modes - 1, -1, -1, dtype=float)
        edges = np.concatenate([[0.0], upper])
    else:
        raise ValueError(f"unknown discretization scheme {scheme!r}")
    a, b = edges[:-1], edges[1:]
    freqs = j.mean_frequency(a, b)
    weights = j.weight(a, b)
    return StarBath(freqs, np.sqrt(weights), float(omega_max))


def star_to_chain(star: StarBath, breakdown_tol: float = 1e-12) -> ChainBath:
    """Tridiagonalise ``diag(w_k)`` by Lanczos started from ``g/|g|``.

    Full reorthogonalisation is applied at every step.  Modes invisible to
    the start vector (zero coupling or degenerate frequency) end the chain
    early; the returned chain then spans only the coupled subspace.
    """
    w = star.frequencies
    g = star.couplings
    c0 = float(np.linalg.norm(g))
    if c0 == 0:
        raise ValueError("all couplings vanish: no chain start vector")
    n = star.n_modes
    basis = np.zeros((n, n))
    basis[0] = g / c0
    energies, hops = [], []
    scale = max(float(np.max(np.abs(w))), 1.0)
    for k in range(n):
        v = basis[k]
        u = w * v
        a = float(v @ u)
        energies.append(a)
        if k == n - 1:
            break
        u = u - a * v - (hops[-1] * basis[k - 1] if k else 0.0)
        # two passes of classical Gram-Schmidt against the whole basis
        for _ in range(2):
            u = u - basis[: k + 1].T @ (basis[: k + 1] @ u)
        b = float(np.linalg.norm(u))
        if b <= breakdown_tol * scale:
            warnings.warn(f"Lanczos breakdown after {k + 1} of {n} chain sites", RuntimeWarning)
            basis = basis[: k + 1]
            break
        hops.append(b)
        basis[k + 1] = u / b
    return ChainBath(np.array(energies), np.array(hops), c0, basis)
