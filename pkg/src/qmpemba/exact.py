"""Exact qubit + truncated-bath dynamics.

The composite basis is ``|s> (x) |n_1 ... n_N>`` with the qubit index
slowest: ``s = 0`` is ``sigma_z = +1`` (spin up), ``s = 1`` is spin down,
and each mode holds ``0..n_max`` quanta.  Everything here is in the spin
frame, where ``H_S = -(Delta/2) sigma_x``.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .bath import ChainBath, StarBath
from .lindblad import Trajectory
from .qubit import BlochState, Frame, change_frame, density_to_bloch

logger = logging.getLogger(__name__)

__all__ = [
    "FockSpace",
    "SparseHamiltonian",
    "SizingError",
    "ConvergenceError",
    "KrylovError",
    "ConservationError",
    "build_hamiltonian",
    "ground_state",
    "krylov_step",
    "evolve",
    "reduced_state",
    "reduced_bloch",
    "initial_product_state",
    "pure_branches",
    "ExactRun",
    "run_dynamics",
    "save_checkpoint",
    "load_checkpoint",
    "evolve_bloch",
]

DEFAULT_BUDGET = 200_000


class SizingError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class KrylovError(RuntimeError):
    pass


class ConservationError(RuntimeError):
    pass


def _suggest(n_modes: int, n_max: int, budget: int) -> str:
    fit_modes = 0
    while 2 * (n_max + 1) ** (fit_modes + 1) <= budget:
        fit_modes += 1
    fit_nmax = 0
    while 2 * (fit_nmax + 2) ** n_modes <= budget:
        fit_nmax += 1
    return f"try n_modes={fit_modes} at n_max={n_max}, or n_max={fit_nmax} at n_modes={n_modes}"


@dataclass(frozen=True)
class FockSpace:
    """Qubit times ``n_modes`` truncated oscillators.

    ``truncation="mode"`` caps every mode at ``n_max`` quanta (dimension
    ``2 (n_max + 1)**n_modes``).  ``truncation="total"`` caps the total
    number of bath quanta at ``n_max``; that space is invariant under any
    orthogonal rotation of the modes, so star and chain Hamiltonians built
    on it are exactly unitarily equivalent.
    """

    n_modes: int
    n_max: int
    budget: int = DEFAULT_BUDGET
    truncation: str = "mode"

    def __post_init__(self):
        if self.n_modes < 0 or self.n_max < 1:
            raise ValueError("need n_modes >= 0 and n_max >= 1")
        if self.truncation not in ("mode", "total"):
            raise ValueError(f"unknown truncation {self.truncation!r}")
        if self.truncation == "total" and self.local ** self.n_modes >= 2 ** 62:
            raise SizingError("too many modes for total-quanta indexing (configuration codes overflow int64)")
        if self.dim > self.budget:
            raise SizingError(
                f"Hilbert space dimension {self.dim} exceeds budget {self.budget}; "
                + _suggest(self.n_modes, self.n_max, self.budget)
            )

    @property
    def local(self) -> int:
        return self.n_max + 1

    @property
    def bath_dim(self) -> int:
        if self.truncation == "total":
            return math.comb(self.n_modes + self.n_max, self.n_max)
        return self.local ** self.n_modes

    @property
    def dim(self) -> int:
        return 2 * self.bath_dim

    @cached_property
    def _codes(self) -> Optional[np.ndarray]:
        # mixed-radix codes of the kept bath configurations, ascending
        if self.truncation == "mode":
            return None
        codes = np.array([0], dtype=np.int64)
        totals = np.array([0], dtype=np.int64)
        for _ in range(self.n_modes):
            n = np.arange(self.local, dtype=np.int64)
            codes = (codes[:, None] * self.local + n[None, :]).ravel()
            totals = (totals[:, None] + n[None, :]).ravel()
            keep = totals <= self.n_max
            codes, totals = codes[keep], totals[keep]
        return codes

    def bath_index(self, codes) -> np.ndarray:
        """Bath indices of mixed-radix configuration codes (all must be kept)."""
        codes = np.asarray(codes, dtype=np.int64)
        if self._codes is None:
            return codes
        idx = np.searchsorted(self._codes, codes)
        if np.any(idx >= self._codes.size) or np.any(self._codes[np.minimum(idx, self._codes.size - 1)] != codes):
            raise ValueError("configuration outside the truncated space")
        return idx

    def encode(self, s: int, occupations: Sequence[int]) -> int:
        if s not in (0, 1) or len(occupations) != self.n_modes:
            raise ValueError("bad composite label")
        code = 0
        for n in occupations:
            if not 0 <= n <= self.n_max:
                raise ValueError(f"occupation {n} outside 0..{self.n_max}")
            code = code * self.local + int(n)
        if self.truncation == "total" and sum(occupations) > self.n_max:
            raise ValueError(f"total occupation above {self.n_max}")
        return s * self.bath_dim + int(self.bath_index(code))

    def decode(self, index: int) -> tuple[int, tuple[int, ...]]:
        if not 0 <= index < self.dim:
            raise ValueError("index out of range")
        s, rest = divmod(int(index), self.bath_dim)
        if self._codes is not None:
            rest = int(self._codes[rest])
        occ = []
        for _ in range(self.n_modes):
            rest, n = divmod(rest, self.local)
            occ.append(n)
        return s, tuple(reversed(occ))

    def codes(self) -> np.ndarray:
        """Mixed-radix code of every bath index."""
        if self._codes is None:
            return np.arange(self.bath_dim, dtype=np.int64)
        return self._codes

    def occupations(self) -> np.ndarray:
        """``(n_modes, bath_dim)`` table of occupations for every bath index."""
        idx = self.codes()
        occ = np.empty((self.n_modes, self.bath_dim), dtype=np.int64)
        for k in range(self.n_modes - 1, -1, -1):
            idx, occ[k] = np.divmod(idx, self.local)
        return occ

    def can_raise(self, occ: np.ndarray, k: int) -> np.ndarray:
        """Mask of bath indices where mode ``k`` may gain a quantum."""
        mask = occ[k] < self.n_max
        if self.truncation == "total":
            mask &= occ.sum(axis=0) < self.n_max
        return mask

    def strides(self) -> np.ndarray:
        return self.local ** np.arange(self.n_modes - 1, -1, -1, dtype=np.int64)


@dataclass
class SparseHamiltonian:
    matrix: sp.csr_matrix
    space: FockSpace
    symmetric: bool = True
    geometry: str = "star"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def max_row_nnz(self) -> int:
        return int(np.max(np.diff(self.matrix.indptr))) if self.dim else 0

    def __matmul__(self, v):
        return self.matrix @ v


def _mode_coupling_entries(space: FockSpace, occ: np.ndarray, codes: np.ndarray, k: int, stride: int):
    # upper-triangle entries of (b_k + b_k^dag): |..n..> -> |..n+1..>, sqrt(n+1)
    rows = np.flatnonzero(space.can_raise(occ, k))
    return rows, space.bath_index(codes[rows] + stride), np.sqrt(occ[k][rows] + 1.0)


def build_hamiltonian(space: FockSpace, geometry: Union[StarBath, ChainBath],
                      delta: float = 1.0) -> SparseHamiltonian:
    """Assemble ``-(delta/2) sigma_x + H_B + sigma_z (x) X`` as a CSR matrix.

    For a star bath ``H_B = sum w_k n_k`` and ``X = sum g_k (b_k + b_k^dag)``;
    for a chain ``H_B`` has on-site energies and hoppings and ``X = c0 (b_0 + b_0^dag)``.
    The matrix is assembled from mirrored upper-triangle entries and is
    exactly symmetric.
    """
    if geometry.n_modes != space.n_modes:
        raise ValueError(f"bath has {geometry.n_modes} modes, space has {space.n_modes}")
    nb = space.bath_dim
    occ = space.occupations()
    codes = space.codes()
    strides = space.strides()

    if isinstance(geometry, StarBath):
        onsite = geometry.frequencies
        coupling = np.asarray(geometry.couplings, dtype=float)
        hoppings = np.zeros(0)
        kind = "star"
    elif isinstance(geometry, ChainBath):
        onsite = geometry.energies
        coupling = np.zeros(space.n_modes)
        if space.n_modes:
            coupling[0] = geometry.c0
        hoppings = geometry.hoppings
        kind = "chain"
    else:
        raise TypeError(f"unsupported bath geometry {type(geometry).__name__}")

    bath_diag = onsite @ occ if space.n_modes else np.zeros(nb)
    diag = np.concatenate([bath_diag, bath_diag])

    rows, cols, vals = [], [], []
    # tunnelling: <up, n| H |down, n> = -delta/2
    b_idx = np.arange(nb)
    rows.append(b_idx)
    cols.append(b_idx + nb)
    vals.append(np.full(nb, -0.5 * delta))
    for k in range(space.n_modes):
        if coupling[k] == 0:
            continue
        r, c, v = _mode_coupling_entries(space, occ, codes, k, int(strides[k]))
        for s, sign in ((0, 1.0), (1, -1.0)):
            rows.append(r + s * nb)
            cols.append(c + s * nb)
            vals.append(sign * coupling[k] * v)
    for k, t in enumerate(hoppings):
        # b_k^dag b_{k+1}: n_k -> n_k + 1, n_{k+1} -> n_{k+1} - 1
        # total quanta are unchanged, so only the per-mode cap matters
        sel = np.flatnonzero((occ[k] < space.n_max) & (occ[k + 1] > 0))
        amp = t * np.sqrt((occ[k][sel] + 1.0) * occ[k + 1][sel])
        r_b = sel
        # codes are ascending in the index, and the target code is larger
        c_b = space.bath_index(codes[sel] + strides[k] - strides[k + 1])
        for s in (0, 1):
            rows.append(r_b + s * nb)
            cols.append(c_b + s * nb)
            vals.append(amp)

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    d_idx = np.arange(space.dim)
    keep = diag != 0
    all_r = np.concatenate([r, c, d_idx[keep]])
    all_c = np.concatenate([c, r, d_idx[keep]])
    all_v = np.concatenate([v, v, diag[keep]])
    mat = sp.csr_matrix((all_v, (all_r, all_c)), shape=(space.dim, space.dim))
    mat.sort_indices()
    h = SparseHamiltonian(mat, space, True, kind)
    limit = 2 + 4 * space.n_modes
    if h.max_row_nnz > limit:
        raise AssertionError(f"row with {h.max_row_nnz} nonzeros exceeds {limit}")
    return h


def _as_matrix(h) -> sp.spmatrix:
    return h.matrix if isinstance(h, SparseHamiltonian) else h


def ground_state(h, tol: float = 1e-9, maxiter: Optional[int] = None,
                 v0: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """Lowest eigenpair by implicitly restarted Lanczos.

    Raises :class:`ConvergenceError` when ``|H psi - E psi| > tol``.
    """
    mat = _as_matrix(h)
    n = mat.shape[0]
    if n <= 64:
        w, v = np.linalg.eigh(mat.toarray())
        energy, psi = float(w[0]), v[:, 0]
    else:
        if v0 is None:
            v0 = np.random.default_rng(12345).uniform(0.5, 1.5, size=n)
        try:
            w, v = eigsh(mat, k=1, which="SA", tol=0.0, v0=v0, maxiter=maxiter,
                         ncv=min(n, 40))
        except Exception as exc:  # ArpackNoConvergence and friends
            raise ConvergenceError(f"Lanczos did not converge: {exc}", math.inf) from exc
        energy, psi = float(w[0]), v[:, 0]
    psi = psi / np.linalg.norm(psi)
    # fix the arbitrary global sign for reproducible output
    k = int(np.argmax(np.abs(psi)))
    if psi[k] < 0:
        psi = -psi
    residual = float(np.linalg.norm(mat @ psi - energy * psi))
    if residual > tol:
        raise ConvergenceError("ground state residual above tolerance", residual)
    return energy, psi


# --------------------------------------------------------------------------
# Krylov propagation

@dataclass
class KrylovStats:
    steps: int = 0
    rejected: int = 0
    matvecs: int = 0
    max_error: float = 0.0


def _apply(mat, v: np.ndarray) -> np.ndarray:
    """``mat @ v`` for a real sparse matrix and complex vector without recasting the matrix."""
    if np.iscomplexobj(mat.data):
        return mat @ v
    v = np.ascontiguousarray(v)
    out = mat @ v.view(np.float64).reshape(-1, 2)
    return np.ascontiguousarray(out).view(np.complex128).ravel()


def _lanczos_basis(mat, psi: np.ndarray, m: int):
    """Orthonormal Krylov basis (full reorthogonalisation) and tridiagonal of size <= m + 1."""
    n = psi.size
    m = min(m, n - 1) if n > 1 else 0
    basis = np.empty((m + 2, n), dtype=complex)
    alphas, betas = [], []
    beta0 = np.linalg.norm(psi)
    basis[0] = psi / beta0
    size = 1
    for j in range(m + 1):
        w = _apply(mat, basis[j])
        a = float(np.vdot(basis[j], w).real)
        alphas.append(a)
        if j == m:
            break
        w = w - a * basis[j]
        if j:
            w = w - betas[-1] * basis[j - 1]
        # one full Gram-Schmidt pass on top of the three-term recurrence
        v = basis[: j + 1]
        w = w - (v @ w.conj()).conj() @ v
        b = float(np.linalg.norm(w))
        if b < 1e-13 * max(1.0, abs(a)):
            break  # invariant subspace: projection is exact
        betas.append(b)
        basis[j + 1] = w / b
        size = j + 2
    return basis[:size], np.array(alphas), np.array(betas[: size - 1]), beta0, len(alphas)


def _tridiag_eig(alphas: np.ndarray, betas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
    return np.linalg.eigh(t)


def _expm_tridiag(alphas: np.ndarray, betas: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i dt T) e_1`` for the real symmetric tridiagonal ``T``."""
    w, q = _tridiag_eig(alphas, betas)
    return q @ (np.exp(-1j * dt * w) * q[0])


def krylov_step(mat, psi: np.ndarray, dt: float, krylov_dim: int = 20, tol: float = 1e-9,
                min_dt: float = 1e-12, stats: Optional[KrylovStats] = None
                ) -> tuple[np.ndarray, float]:
    """Advance ``psi`` by up to ``dt``; returns ``(psi_new, dt_taken)``.

    The local error estimate is the weight the ``m+1``-dimensional
    propagator puts on the last Krylov vector.  On a breach the step is
    halved until the estimate drops below ``tol``, then widened again by
    bisection inside the last halving so the basis is not under-used.
    """
    basis, alphas, betas, beta0, nmv = _lanczos_basis(mat, psi, krylov_dim)
    if stats is not None:
        stats.matvecs += nmv
    size = basis.shape[0]
    full = size == alphas.size and betas.size == size - 1 and size < krylov_dim + 1
    w, q = _tridiag_eig(alphas[:size], betas[: size - 1])
    q0 = q[0]

    def propagate(h):
        y = q @ (np.exp(-1j * h * w) * q0)
        return y, (0.0 if full else float(abs(y[-1])))

    y, err = propagate(dt)
    if err > tol:
        bad = dt
        while err > tol:
            if stats is not None:
                stats.rejected += 1
            bad, dt = dt, 0.5 * dt
            if dt < min_dt:
                raise KrylovError(f"Krylov step fell below {min_dt:g} (error estimate {err:.2e})")
            y, err = propagate(dt)
        for _ in range(12):
            mid = 0.5 * (dt + bad)
            y_mid, e_mid = propagate(mid)
            if e_mid <= tol:
                dt, y, err = mid, y_mid, e_mid
            else:
                bad = mid
    if stats is not None:
        stats.steps += 1
        stats.max_error = max(stats.max_error, err)
    return beta0 * (y @ basis), dt


def evolve(psi0: np.ndarray, h, t_grid, krylov_dim: int = 20, tol: float = 1e-9,
           stats: Optional[KrylovStats] = None) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, psi(t))`` on ``t_grid`` for ``psi(t) = exp(-iHt) psi0``.

    Sub-steps between grid points adapt to the Krylov error estimate.
    """
    mat = _as_matrix(h)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    psi = np.asarray(psi0, dtype=complex)
    t = float(t_grid[0]) if t_grid.size else 0.0
    dt_guess = math.inf
    for t_target in t_grid:
        while t < t_target:
            remaining = t_target - t
            dt = min(remaining, dt_guess)
            psi, taken = krylov_step(mat, psi, dt, krylov_dim, tol, stats=stats)
            # snap to the grid point when the full remainder was taken
            t = t_target if taken >= remaining else t + taken
            if taken < dt:
                dt_guess = taken
            elif dt == dt_guess:
                dt_guess = 1.5 * dt
        yield float(t_target), psi


# --------------------------------------------------------------------------
# states

def reduced_state(psi: np.ndarray, space: FockSpace) -> np.ndarray:
    """Qubit density matrix after tracing out every bath mode."""
    m = np.asarray(psi).reshape(2, space.bath_dim)
    rho = m @ m.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def reduced_bloch(psi: np.ndarray, space: FockSpace) -> np.ndarray:
    return density_to_bloch(reduced_state(psi, space), Frame.SPIN).r


def initial_product_state(r0: BlochState, space: FockSpace) -> np.ndarray:
    """``|r0> (x) |vac>`` for a pure qubit state ``r0``."""
    r0 = change_frame(r0, Frame.SPIN)
    if r0.norm < 1.0 - 1e-12:
        raise ValueError("initial_product_state needs a pure qubit state; use pure_branches for mixed states")
    x, y, z = r0.r / r0.norm
    theta = math.acos(max(-1.0, min(1.0, z)))
    azimuth = math.atan2(y, x)
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.encode(0, [0] * space.n_modes)] = math.cos(theta / 2)
    psi[space.encode(1, [0] * space.n_modes)] = complex(math.cos(azimuth), math.sin(azimuth)) * math.sin(theta / 2)
    return psi


def pure_branches(r0: BlochState) -> list[tuple[float, BlochState]]:
    """Spectral decomposition ``rho = p+ |r_hat><r_hat| + p- |-r_hat><-r_hat|``.

    Mixed initial qubit states are evolved branch by branch and the reduced
    states mixed with these weights (the partial trace is linear).
    """
    n = r0.norm
    if n >= 1.0 - 1e-12:
        return [(1.0, BlochState(r0.r / n, r0.frame))]
    u = r0.r / n if n > 0 else np.array([0.0, 0.0, 1.0])
    return [(0.5 * (1 + n), BlochState(u, r0.frame)), (0.5 * (1 - n), BlochState(-u, r0.frame))]


@dataclass
class ExactRun:
    times: np.ndarray
    bloch: np.ndarray
    norms: np.ndarray
    energies: np.ndarray
    stats: KrylovStats = field(default_factory=KrylovStats)

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.times, self.bloch, Frame.SPIN)

    @property
    def norm_error(self) -> float:
        return float(np.max(np.abs(self.norms - 1.0)))

    @property
    def energy_error(self) -> float:
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(abs(e0), 1.0))


def save_checkpoint(path, config_hash: str, index: int, t: float, psi: np.ndarray,
                    bloch: np.ndarray, norms: np.ndarray, energies: np.ndarray) -> None:
    """Write ``(config hash, grid index, t, amplitudes, rows so far)`` as ``.npz``.

    The file is written to a temporary name and renamed, so an interrupted
    write never leaves a truncated checkpoint behind.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, config_hash=np.array(config_hash), index=np.array(index), t=np.array(t),
                 psi=psi, bloch=bloch, norms=norms, energies=energies)
    os.replace(tmp, path)


def load_checkpoint(path, config_hash: Optional[str] = None) -> dict:
    with np.load(Path(path)) as data:
        out = {k: data[k] for k in data.files}
    out["config_hash"] = str(out["config_hash"])
    out["index"] = int(out["index"])
    out["t"] = float(out["t"])
    if config_hash is not None and out["config_hash"] != config_hash:
        raise ValueError(f"checkpoint {path} belongs to config {out['config_hash']}, not {config_hash}")
    return out


def run_dynamics(psi0: np.ndarray, h: SparseHamiltonian, t_grid, krylov_dim: int = 20,
                 tol: float = 1e-9, norm_tol: float = 1e-9, energy_tol: float = 1e-8,
                 checkpoint=None, config_hash: str = "", checkpoint_every: int = 10) -> ExactRun:
    """Evolve and record reduced Bloch vectors, norm and energy; enforce conservation.

    With ``checkpoint`` set, progress is saved every ``checkpoint_every`` grid
    points and a matching checkpoint found at start-up is resumed.
    """
    space = h.space
    t_grid = np.asarray(t_grid, dtype=float)
    stats = KrylovStats()
    bloch = np.empty((t_grid.size, 3))
    norms = np.empty(t_grid.size)
    energies = np.empty(t_grid.size)
    start, psi_start = 0, psi0
    if checkpoint is not None and Path(checkpoint).exists():
        ck = load_checkpoint(checkpoint, config_hash)
        start = ck["index"]
        if start >= t_grid.size or t_grid[start] != ck["t"]:
            raise ValueError(f"checkpoint {checkpoint} does not match the time grid")
        psi_start = ck["psi"]
        bloch[: start + 1] = ck["bloch"]
        norms[: start + 1] = ck["norms"]
        energies[: start + 1] = ck["energies"]
        logger.info("resuming from %s at t = %g", checkpoint, ck["t"])
    for i, (t, psi) in enumerate(evolve(psi_start, h, t_grid[start:], krylov_dim, tol, stats), start):
        if i == start and start > 0:
            continue
        norm = float(np.linalg.norm(psi))
        norms[i] = norm
        energies[i] = float(np.vdot(psi, _apply(h.matrix, psi)).real) / norm ** 2
        bloch[i] = reduced_bloch(psi, space)
        if checkpoint is not None and (i + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint, config_hash, i, t, psi, bloch[: i + 1], norms[: i + 1], energies[: i + 1])
    run = ExactRun(t_grid, bloch, norms, energies, stats)
    if run.norm_error > norm_tol:
        raise ConservationError(f"norm drift {run.norm_error:.2e} exceeds {norm_tol:g}")
    if run.energy_error > energy_tol:
        raise ConservationError(f"relative energy drift {run.energy_error:.2e} exceeds {energy_tol:g}")
    logger.debug("evolved %d steps (%d rejected, %d matvecs)", stats.steps, stats.rejected, stats.matvecs)
    return run


def evolve_bloch(r0: BlochState, h: SparseHamiltonian, t_grid, krylov_dim: int = 20,
                 tol: float = 1e-9, checkpoint=None, config_hash: str = "") -> ExactRun:
    """Reduced spin-frame Bloch trajectory for a possibly mixed initial qubit state.

    ``checkpoint`` is a path prefix; each pure branch keeps its own file.
    """
    runs = []
    for i, (weight, branch) in enumerate(pure_branches(r0)):
        psi0 = initial_product_state(branch, h.space)
        ck = None if checkpoint is None else Path(f"{checkpoint}.branch{i}.npz")
        runs.append((weight, run_dynamics(psi0, h, t_grid, krylov_dim, tol,
                                          checkpoint=ck, config_hash=config_hash)))
    if len(runs) == 1:
        return runs[0][1]
    bloch = sum(w * r.bloch for w, r in runs)
    energies = sum(w * r.energies for w, r in runs)
    # keep the worst branch norm so norm_error stays meaningful
    dev = np.array([r.norms - 1.0 for _, r in runs])
    norms = 1.0 + dev[np.argmax(np.abs(dev), axis=0), np.arange(dev.shape[1])]
    stats = KrylovStats(
        sum(r.stats.steps for _, r in runs),
        sum(r.stats.rejected for _, r in runs),
        sum(r.stats.matvecs for _, r in runs),
        max(r.stats.max_error for _, r in runs),
    )
    return ExactRun(runs[0][1].times, bloch, norms, energies, stats)
