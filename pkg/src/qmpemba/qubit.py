"""Qubit states, frames and the two distances to stationarity.

Density matrices are plain ``(2, 2)`` complex numpy arrays. Bloch states
carry a frame tag so that vectors written in the tunnelling basis
(``H_S = -(Delta/2) sigma_x``) are never mixed with vectors written in the
energy eigenbasis (``H_S = (Omega/2) sigma_z``).

All 2x2 spectral work goes through the Pauli decomposition
``H = h0 I + h . sigma`` whose eigenvalues are ``h0 +/- |h|`` and whose
spectral projectors are ``(I +/- h_hat . sigma) / 2``.  No iterative
eigensolver is involved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Frame",
    "BlochState",
    "DistanceMeasure",
    "TRACE",
    "bloch_to_density",
    "density_to_bloch",
    "validate_density",
    "change_frame",
    "trace_distance",
    "relative_entropy",
    "trace_distance_bloch",
    "relative_entropy_bloch",
    "FRAME_ROTATION",
    "PAULI",
]

NORM_TOL = 1e-12
DEFAULT_FLOOR = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)

# pi-rotation about (1, 0, -1)/sqrt(2): sigma_x -> -sigma_z, sigma_y -> -sigma_y.
# Symmetric and orthogonal, hence its own inverse.
FRAME_ROTATION = np.array(
    [[0.0, 0.0, -1.0],
     [0.0, -1.0, 0.0],
     [-1.0, 0.0, 0.0]]
)


class Frame(enum.Enum):
    SPIN = "spin"
    ENERGY = "energy"


@dataclass(frozen=True)
class BlochState:
    """Bloch vector ``r`` with the basis it is written in."""

    r: np.ndarray
    frame: Frame = Frame.ENERGY

    def __post_init__(self):
        r = np.array(self.r, dtype=float).reshape(3)
        if not np.all(np.isfinite(r)):
            raise ValueError(f"non-finite Bloch vector {r}")
        norm = float(np.linalg.norm(r))
        if norm > 1.0 + NORM_TOL:
            raise ValueError(f"unphysical Bloch vector: |r| = {norm!r} > 1")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "frame", Frame(self.frame))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.r))

    def same_frame(self, other: "BlochState") -> None:
        if self.frame is not other.frame:
            raise ValueError(
                f"frame mismatch: {self.frame.value} vs {other.frame.value}"
            )

    def __eq__(self, other):
        if not isinstance(other, BlochState):
            return NotImplemented
        return self.frame is other.frame and bool(np.array_equal(self.r, other.r))

    def __hash__(self):
        return hash((self.frame, tuple(self.r)))

    def __repr__(self):
        x, y, z = self.r
        return f"BlochState(({x:.6g}, {y:.6g}, {z:.6g}), {self.frame.value})"


def bloch_to_density(state: BlochState) -> np.ndarray:
    """Return ``(I + r . sigma) / 2`` for ``state``."""
    x, y, z = state.r
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]], dtype=complex)


def _pauli_components(h: np.ndarray) -> tuple[float, np.ndarray]:
    # h = h0 I + hv . sigma for Hermitian h
    h0 = 0.5 * (h[0, 0].real + h[1, 1].real)
    hv = np.array([h[0, 1].real, -h[0, 1].imag, 0.5 * (h[0, 0].real - h[1, 1].real)])
    return h0, hv


def validate_density(rho, tol: float = NORM_TOL) -> np.ndarray:
    """Check the 2x2 density-matrix invariants and return ``rho`` as an array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    tr = rho[0, 0].real + rho[1, 1].real
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    h0, hv = _pauli_components(rho)
    if h0 - np.linalg.norm(hv) < -tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def density_to_bloch(rho, frame: Frame = Frame.ENERGY) -> BlochState:
    """Return the Bloch vector ``r_i = Tr(rho sigma_i)``."""
    rho = validate_density(rho)
    r = np.array([
        2.0 * rho[0, 1].real,
        -2.0 * rho[0, 1].imag,
        rho[0, 0].real - rho[1, 1].real,
    ])
    norm = np.linalg.norm(r)
    if norm > 1.0:
        # PSD already checked to tolerance
        r = r / norm
    return BlochState(r, frame)


def change_frame(state: BlochState, target: Frame) -> BlochState:
    """Re-express ``state`` in ``target`` frame.

    The spin-frame ground state ``(1, 0, 0)`` maps to the energy-frame
    ground state ``(0, 0, -1)``; applying the map twice is the identity.
    """
    target = Frame(target)
    if state.frame is target:
        return state
    return BlochState(FRAME_ROTATION @ state.r, target)


# --------------------------------------------------------------------------
# distances

StateLike = Union[BlochState, np.ndarray]


def _as_density(x: StateLike) -> np.ndarray:
    if isinstance(x, BlochState):
        return bloch_to_density(x)
    return validate_density(x)


def _check_frames(a, b) -> None:
    if isinstance(a, BlochState) and isinstance(b, BlochState):
        a.same_frame(b)


def trace_distance(a: StateLike, b: StateLike) -> float:
    """``(1/2) Tr|a - b|`` for two qubit states.

    Accepts density matrices or Bloch states; Bloch states must share a frame.
    """
    _check_frames(a, b)
    diff = _as_density(a) - _as_density(b)
    h0, hv = _pauli_components(diff)
    hn = float(np.linalg.norm(hv))
    return 0.5 * (abs(h0 + hn) + abs(h0 - hn))


def relative_entropy(rho: StateLike, sigma: StateLike, floor: float = DEFAULT_FLOOR) -> float:
    """Quantum relative entropy ``Tr[rho (ln rho - ln sigma')]``.

    ``sigma'`` is ``sigma`` with eigenvalues clamped from below at ``floor``
    and renormalised.  With ``floor == 0`` the result is ``inf`` when the
    support of ``rho`` is not contained in that of ``sigma``.
    """
    _check_frames(rho, sigma)
    r = density_to_bloch(_as_density(rho)).r
    s = density_to_bloch(_as_density(sigma)).r
    return float(relative_entropy_bloch(r, s, floor))


# Vectorised Bloch-level kernels.  ``r`` may be (..., 3); ``s`` is broadcast.

def trace_distance_bloch(ra, rb) -> np.ndarray:
    ra = np.asarray(ra, dtype=float)
    rb = np.asarray(rb, dtype=float)
    return 0.5 * np.linalg.norm(ra - rb, axis=-1)


def _xlogx(p: np.ndarray, floor: float) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > floor
    out[mask] = p[mask] * np.log(p[mask])
    return out


def relative_entropy_bloch(r, s, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Relative entropy between Bloch vectors ``r`` (state) and ``s`` (reference)."""
    if floor < 0 or floor > 1e-3:
        raise ValueError(f"floor must lie in [0, 1e-3], got {floor!r}")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    nr = np.minimum(np.linalg.norm(r, axis=-1), 1.0)
    ns = float(min(np.linalg.norm(s), 1.0))

    # eigenvalues of rho, clipped at 0 then renormalised (sum is 1 already)
    p_hi = 0.5 * (1.0 + nr)
    p_lo = np.clip(0.5 * (1.0 - nr), 0.0, None)
    neg_entropy = _xlogx(p_hi, floor) + _xlogx(p_lo, floor)

    q = np.array([0.5 * (1.0 + ns), 0.5 * (1.0 - ns)])
    q = np.clip(q, 0.0, None)
    if floor > 0:
        q = np.maximum(q, floor)
        q = q / q.sum()

    s_hat = s / ns if ns > 0 else np.array([0.0, 0.0, 1.0])
    proj = r @ s_hat  # r . s_hat
    w_hi = 0.5 * (1.0 + proj)  # Tr(rho P+)
    w_lo = 0.5 * (1.0 - proj)  # Tr(rho P-)

    with np.errstate(divide="ignore"):
        logq = np.log(q)
    cross = np.zeros_like(np.asarray(proj, dtype=float))
    for w, lq in ((w_hi, logq[0]), (w_lo, logq[1])):
        w = np.asarray(w, dtype=float)
        if np.isfinite(lq):
            cross = cross + w * lq
        else:
            cross = np.where(w > NORM_TOL, -np.inf, cross)
    out = neg_entropy - cross
    # Klein's inequality; negative values are rounding only
    return np.where(np.isfinite(out), np.maximum(out, 0.0), out)


@dataclass(frozen=True)
class DistanceMeasure:
    """Trace distance or floor-regularised relative entropy.

    ``kind`` is ``"trace"`` or ``"relent"``.
    """

    kind: str = "trace"
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.kind not in ("trace", "relent"):
            raise ValueError(f"unknown distance measure {self.kind!r}")
        if self.kind == "relent" and not (0.0 < self.floor <= 1e-3):
            raise ValueError(f"relative-entropy floor must lie in (0, 1e-3], got {self.floor!r}")

    @classmethod
    def relent(cls, floor: float = DEFAULT_FLOOR) -> "DistanceMeasure":
        return cls("relent", floor)

    @property
    def label(self) -> str:
        if self.kind == "trace":
            return "trace"
        return f"relent(floor={self.floor:g})"

    def __call__(self, rho: StateLike, sigma: StateLike) -> float:
        if self.kind == "trace":
            return trace_distance(rho, sigma)
        return relative_entropy(rho, sigma, self.floor)

    def bloch(self, r, s) -> np.ndarray:
        """Vectorised evaluation on Bloch vectors sharing one frame."""
        if self.kind == "trace":
            return trace_distance_bloch(r, s)
        return relative_entropy_bloch(r, s, self.floor)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "relent":
            d["floor"] = self.floor
        return d


TRACE = DistanceMeasure("trace")


def purity(rho: StateLike) -> float:
    r = density_to_bloch(_as_density(rho)).r
    return 0.5 * (1.0 + float(r @ r))


def random_bloch(rng: np.random.Generator, frame: Frame = Frame.ENERGY, pure: bool = False) -> BlochState:
    """Uniform direction; modulus uniform in the ball volume unless ``pure``."""
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    mod = 1.0 if pure else rng.uniform() ** (1.0 / 3.0)
    return BlochState(mod * v, frame)


def spherical(r_mod: float, phi: float, theta: float = 0.0, frame: Frame = Frame.ENERGY) -> BlochState:
    """``r_mod (sin phi cos theta, sin phi sin theta, cos phi)``."""
    return BlochState(
        r_mod * np.array([math.sin(phi) * math.cos(theta), math.sin(phi) * math.sin(theta), math.cos(phi)]),
        frame,
    )
