"""Rydberg tweezer-array THz photon-detector simulator.

State preparation, stochastic THz absorption, facilitated avalanche
amplification and signal measurement, with dense, quantum-trajectory and
TEBD backends.
"""

from .dynamics import (
    IntegratorConfig,
    Method,
    TrajectoryConfig,
    evolve_lindblad,
    evolve_pure,
    run_trajectories,
)
from .hilbert import (
    AtomLevels,
    DensityMatrix,
    HilbertSpace,
    OperatorHandle,
    PureState,
    basis_state,
    embed_site_operator,
    expectation,
    norm_and_normalize,
    product_state,
)
from .model import (
    HamiltonianKind,
    JumpKind,
    ModelParams,
    PhononParams,
    absorption_rate,
    build_hamiltonian,
    build_jump,
    compute_kappa,
)
from .protocol import (
    AbsorptionMode,
    AmplificationSummary,
    Backend,
    ProtocolConfig,
    ProtocolResult,
    SignalTrace,
    amplify,
    analyze,
    mixed_average_trace,
    pi_pulse,
    run_protocol,
    sense,
)
from .tebd import (
    MatrixProductState,
    TruncationPolicy,
    dense_to_mps,
    mps_from_product,
    mps_local_expectation,
    mps_to_dense,
    tebd_evolve,
)

__version__ = "0.1.0"
