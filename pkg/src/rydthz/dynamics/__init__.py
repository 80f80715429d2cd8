"""Time-evolution engines: dense Schroedinger, Lindblad, and MCWF trajectories."""

from .integrators import IntegratorConfig, Method, Propagator, evolve_pure
from .lindblad import evolve_lindblad, lindblad_rhs
from .trajectories import (
    JumpEvent,
    TrajectoryConfig,
    TrajectoryResult,
    effective_hamiltonian_matrix,
    run_trajectories,
)

__all__ = [
    "IntegratorConfig",
    "Method",
    "Propagator",
    "evolve_pure",
    "evolve_lindblad",
    "lindblad_rhs",
    "JumpEvent",
    "TrajectoryConfig",
    "TrajectoryResult",
    "effective_hamiltonian_matrix",
    "run_trajectories",
]
