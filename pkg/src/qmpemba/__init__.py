"""Quantum Mpemba effect in the spin-boson model: weak-coupling Bloch
relaxation, distance-curve crossings and exact truncated-bath dynamics."""

from .qubit import (
    BlochState,
    DistanceMeasure,
    Frame,
    TRACE,
    bloch_to_density,
    change_frame,
    density_to_bloch,
    relative_entropy,
    trace_distance,
)
from .lindblad import (
    LindbladParams,
    Trajectory,
    gibbs_state,
    propagate_analytic,
    propagate_ode,
    rates,
)
from .mpemba import (
    CrossingReport,
    DistanceCurve,
    LindbladPropagator,
    analytic_crossing_time,
    delta_squared,
    detect_crossings,
    distance_curve,
    hemisphere_sweep,
)
from .bath import ChainBath, SpectralDensity, StarBath, discretize, star_to_chain
from .exact import (
    FockSpace,
    SparseHamiltonian,
    build_hamiltonian,
    evolve,
    ground_state,
    initial_product_state,
    reduced_state,
)

__version__ = "0.1.0"
