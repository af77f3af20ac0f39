"""Distance curves, crossing detection and the hemisphere structure.

Polar angles ``phi`` here follow the energy-frame convention: measured from
the excited pole ``+z``, so ``phi in [0, pi/2]`` is the excited hemisphere.
The figure convention ``r = (-sin phi, 0, -cos phi)`` in the spin frame is
converted at the CLI boundary (see :func:`figure_state`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from .lindblad import LindbladParams, Trajectory, analytic_vectors, propagate_ode
from .qubit import (
    BlochState,
    DistanceMeasure,
    Frame,
    TRACE,
    bloch_to_density,
    change_frame,
    density_to_bloch,
    spherical,
)

__all__ = [
    "Propagator",
    "LindbladPropagator",
    "DistanceCurve",
    "CrossingReport",
    "NoCrossingError",
    "distance_curve",
    "curve_from_trajectory",
    "delta_squared",
    "crossing_function",
    "analytic_crossing_time",
    "detect_crossings",
    "hemisphere_sweep",
    "polar_angles",
    "figure_state",
    "pair_report",
]


class NoCrossingError(ValueError):
    """The closed-form crossing time does not exist for this pair."""


class Propagator(Protocol):
    frame: Frame

    def __call__(self, r0: BlochState, times) -> Trajectory: ...


@dataclass(frozen=True)
class LindbladPropagator:
    """Weak-coupling dynamics; ``method`` is ``"analytic"`` or ``"ode"``."""

    params: LindbladParams
    method: str = "analytic"
    frame: Frame = Frame.ENERGY

    def __call__(self, r0: BlochState, times) -> Trajectory:
        if r0.frame is not Frame.ENERGY:
            raise ValueError("Lindblad propagation needs an energy-frame state")
        times = np.asarray(times, dtype=float)
        if self.method == "ode":
            return propagate_ode(r0, self.params, times)
        return Trajectory(times, analytic_vectors(r0.r, self.params, times), Frame.ENERGY)

    def at(self, r0: BlochState, t: float) -> np.ndarray:
        """Bloch vector at a single time (closed form, used for refinement)."""
        return analytic_vectors(r0.r, self.params, t)


StationaryLike = Union[BlochState, np.ndarray]


def _stationary_vector(ss: StationaryLike, frame: Frame) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ss, BlochState):
        if ss.frame is not frame:
            raise ValueError(f"stationary state is in the {ss.frame.value} frame, dynamics in {frame.value}")
        vec = ss.r
    else:
        vec = density_to_bloch(ss, frame).r
    return vec, bloch_to_density(BlochState(vec, frame))


@dataclass
class DistanceCurve:
    measure: DistanceMeasure
    times: np.ndarray
    values: np.ndarray
    initial_state: BlochState
    stationary_state: np.ndarray
    evaluator: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("distances must be non-negative")
        if self.measure.floor > 0 and not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite distance with a positive floor")

    def __call__(self, t: float) -> float:
        if self.evaluator is not None:
            return float(self.evaluator(t))
        return float(PchipInterpolator(self.times, self.values)(t))


def distance_curve(r0: BlochState, ss: StationaryLike, measure: DistanceMeasure,
                   dynamics: Propagator, t_grid) -> DistanceCurve:
    """Sample ``measure(rho(t), ss)`` along ``dynamics`` started from ``r0``."""
    frame = getattr(dynamics, "frame", r0.frame)
    if r0.frame is not frame:
        raise ValueError("initial state and dynamics use different frames")
    s_vec, s_rho = _stationary_vector(ss, frame)
    traj = dynamics(r0, t_grid)
    values = measure.bloch(traj.vectors, s_vec)
    evaluator = None
    if hasattr(dynamics, "at"):
        def evaluator(t, _d=dynamics, _r=r0, _m=measure, _s=s_vec):
            return float(_m.bloch(_d.at(_r, t), _s))
    return DistanceCurve(measure, traj.times, values, r0, s_rho, evaluator)


def curve_from_trajectory(traj: Trajectory, ss: StationaryLike, measure: DistanceMeasure,
                          initial_state: Optional[BlochState] = None) -> DistanceCurve:
    """Distance curve from sampled data (no continuous evaluator)."""
    s_vec, s_rho = _stationary_vector(ss, traj.frame)
    if initial_state is None:
        initial_state = traj.state(0)
    return DistanceCurve(measure, traj.times, measure.bloch(traj.vectors, s_vec), initial_state, s_rho)


# --------------------------------------------------------------------------
# closed-form trace-distance analysis

def _energy_vec(state) -> np.ndarray:
    if isinstance(state, BlochState):
        if state.frame is not Frame.ENERGY:
            raise ValueError("closed-form analysis works in the energy frame")
        return state.r
    return np.asarray(state, dtype=float)


def delta_squared(r1, r2, p: LindbladParams, t) -> np.ndarray:
    """``D^2(rho_1(t), rho_ss) - D^2(rho_2(t), rho_ss)`` in closed form."""
    a = _energy_vec(r1)
    b = _energy_vec(r2)
    t = np.asarray(t, dtype=float)
    long = (a[2] - p.r_z_eq) ** 2 - (b[2] - p.r_z_eq) ** 2
    perp = (a[0] ** 2 + a[1] ** 2) - (b[0] ** 2 + b[1] ** 2)
    out = 0.25 * (np.exp(-2.0 * t * p.pop_rate) * long + np.exp(-2.0 * t * p.coh_rate) * perp)
    return out if out.ndim else float(out)


def crossing_function(phi1: float, phi2: float, r_mod: float, p: LindbladParams, t) -> np.ndarray:
    """The bracketed factor ``G(t)`` with ``Delta(t) = |r|^2/4 exp(-2t/T_coh) G(t)``."""
    t = np.asarray(t, dtype=float)
    amp = (math.cos(phi1) ** 2 - math.cos(phi2) ** 2
           - 2.0 * (p.r_z_eq / r_mod) * (math.cos(phi1) - math.cos(phi2)))
    out = (math.sin(phi1) ** 2 - math.sin(phi2) ** 2
           + np.exp(-2.0 * t * (p.pop_rate - p.coh_rate)) * amp)
    return out if out.ndim else float(out)


def analytic_crossing_time(phi1: float, phi2: float, r_mod: float, p: LindbladParams) -> float:
    """Time at which two equal-modulus trace-distance curves meet.

    ``phi1 < phi2`` (state 1 initially farther from a ground-side fixed
    point).  The effective rate is ``1/T_pop - 1/T_coh``: the difference of
    the two decay rates is what sets where ``G(t)`` changes sign.
    """
    if not phi1 < phi2:
        raise ValueError(f"need phi1 < phi2, got {phi1!r}, {phi2!r}")
    if not 0 < r_mod <= 1:
        raise ValueError("r_mod must lie in (0, 1]")
    if not p.gamma > 0:
        raise ValueError("gamma must be positive")
    num = (math.cos(phi1) ** 2 - math.cos(phi2) ** 2
           - 2.0 * (p.r_z_eq / r_mod) * (math.cos(phi1) - math.cos(phi2)))
    den = math.sin(phi2) ** 2 - math.sin(phi1) ** 2
    if not (num > 0 and den > 0) or num <= den:
        raise NoCrossingError(f"no guaranteed crossing (log argument {num!r}/{den!r})")
    rate = p.pop_rate - p.coh_rate
    return 0.5 * math.log(num / den) / rate


def polar_angles(state: BlochState) -> tuple[float, float]:
    """``(phi, theta)`` of an energy-frame state, phi measured from ``+z``."""
    r = _energy_vec(state)
    n = float(np.linalg.norm(r))
    if n == 0:
        return 0.0, 0.0
    phi = math.acos(max(-1.0, min(1.0, r[2] / n)))
    theta = math.atan2(r[1], r[0])
    return phi, theta


def figure_state(phi: float, r_mod: float = 1.0, theta: float = 0.0) -> BlochState:
    """Figure-convention state ``r_mod (-sin phi cos theta, -sin phi sin theta, -cos phi)``
    (spin frame), returned in the energy frame."""
    spin = BlochState(
        r_mod * np.array([-math.sin(phi) * math.cos(theta), -math.sin(phi) * math.sin(theta), -math.cos(phi)]),
        Frame.SPIN,
    )
    return change_frame(spin, Frame.ENERGY)


# --------------------------------------------------------------------------
# crossings

@dataclass
class CrossingReport:
    pair: tuple[BlochState, BlochState]
    measure: DistanceMeasure
    crossing_times: np.ndarray
    mpemba: bool
    analytic_t_star: Optional[float] = None
    initial_order: int = 0
    final_order: int = 0

    @property
    def n_crossings(self) -> int:
        return int(len(self.crossing_times))

    def to_dict(self) -> dict:
        d = {
            "state_1": {"r": [float(x) for x in self.pair[0].r], "frame": self.pair[0].frame.value},
            "state_2": {"r": [float(x) for x in self.pair[1].r], "frame": self.pair[1].frame.value},
            "measure": self.measure.to_dict(),
            "crossing_times": [float(t) for t in self.crossing_times],
            "mpemba": bool(self.mpemba),
            "initial_order": int(self.initial_order),
            "final_order": int(self.final_order),
            "analytic_t_star": self.analytic_t_star,
        }
        if self.analytic_t_star is not None and self.n_crossings:
            d["discrepancy"] = abs(float(self.crossing_times[0]) - self.analytic_t_star) / self.analytic_t_star
        return d


def _bisect(f: Callable[[float], float], lo: float, hi: float, f_lo: float, rtol: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * abs(mid) or hi - lo <= 1e-300:
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def detect_crossings(c1: DistanceCurve, c2: DistanceCurve, rtol: float = 1e-9,
                     atol: float = 0.0) -> CrossingReport:
    """Locate sign changes of ``c1 - c2`` and refine each by bisection.

    Curves carrying a continuous evaluator are refined on the true
    difference; sampled curves are refined on a monotone cubic
    interpolant.  Differences with ``|d| <= atol`` count as ties.
    """
    if c1.measure != c2.measure:
        raise ValueError("curves use different distance measures")
    if c1.times.shape != c2.times.shape or not np.array_equal(c1.times, c2.times):
        raise ValueError("curves are sampled on different time grids")
    d = c1.values - c2.values
    sign = np.where(np.abs(d) <= atol, 0, np.sign(d)).astype(int)
    idx = np.flatnonzero(sign)
    pair = (c1.initial_state, c2.initial_state)
    if idx.size == 0:
        return CrossingReport(pair, c1.measure, np.array([]), False)

    if c1.evaluator is not None and c2.evaluator is not None:
        def diff(t):
            return c1.evaluator(t) - c2.evaluator(t)
    else:
        interp = PchipInterpolator(c1.times, d)

        def diff(t):
            return float(interp(t))

    times = []
    for a, b in zip(idx[:-1], idx[1:]):
        if sign[a] == sign[b]:
            continue
        if b - a > 1:
            # exact ties in between; the crossing sits in the tied run
            times.append(0.5 * (c1.times[a + 1] + c1.times[b - 1]))
            continue
        times.append(_bisect(diff, c1.times[a], c1.times[b], d[a], rtol))
    initial, final = int(sign[idx[0]]), int(sign[idx[-1]])
    crossing_times = np.array(times)
    mpemba = crossing_times.size > 0 and final == -initial
    return CrossingReport(pair, c1.measure, crossing_times, bool(mpemba),
                          initial_order=initial, final_order=final)


def _order_by_distance(ra: BlochState, rb: BlochState, ss_vec, measure) -> tuple[BlochState, BlochState]:
    da = float(measure.bloch(ra.r, ss_vec))
    db = float(measure.bloch(rb.r, ss_vec))
    return (ra, rb) if da >= db else (rb, ra)


def pair_report(r1: BlochState, r2: BlochState, p: LindbladParams, measure: DistanceMeasure,
                t_grid, ss: Optional[StationaryLike] = None) -> CrossingReport:
    """Crossing report for one Lindblad pair, with ``t*`` for equal-modulus trace pairs."""
    prop = LindbladPropagator(p)
    if ss is None:
        ss = p.fixed_point
    c1 = distance_curve(r1, ss, measure, prop, t_grid)
    c2 = distance_curve(r2, ss, measure, prop, t_grid)
    report = detect_crossings(c1, c2)
    if measure.kind == "trace" and abs(r1.norm - r2.norm) < 1e-12 and r1.norm > 0:
        phi1, _ = polar_angles(r1)
        phi2, _ = polar_angles(r2)
        if phi1 > phi2:
            phi1, phi2 = phi2, phi1
        try:
            report.analytic_t_star = analytic_crossing_time(phi1, phi2, r1.norm, p)
        except (NoCrossingError, ValueError):
            pass
    return report


def hemisphere_sweep(n_pairs: int, r_mod: float, p: LindbladParams,
                     measure: DistanceMeasure = TRACE, seed: int = 0,
                     t_grid: Optional[Sequence[float]] = None,
                     hemisphere: str = "excited") -> list[CrossingReport]:
    """Random equal-modulus pairs in one hemisphere, each checked for a crossing.

    ``hemisphere="mixed"`` draws the second state from the ground-side
    hemisphere instead.  State 1 of each report is the initially farther one.
    """
    if not 0 < r_mod <= 1:
        raise ValueError("r_mod must lie in (0, 1]")
    if n_pairs < 0:
        raise ValueError("n_pairs must be non-negative")
    if n_pairs == 0:
        return []
    if t_grid is None:
        t_grid = np.linspace(0.0, 50.0 / p.coh_rate, 4001)
    rng = np.random.default_rng(seed)
    ss_vec = p.fixed_point.r
    reports = []
    for _ in range(n_pairs):
        phi_a, phi_b = rng.uniform(0.0, 0.5 * math.pi, size=2)
        if hemisphere == "mixed":
            phi_b = math.pi - phi_b
        theta_a, theta_b = rng.uniform(0.0, 2.0 * math.pi, size=2)
        ra = spherical(r_mod, phi_a, theta_a)
        rb = spherical(r_mod, phi_b, theta_b)
        r1, r2 = _order_by_distance(ra, rb, ss_vec, measure)
        reports.append(pair_report(r1, r2, p, measure, t_grid))
    return reports
