"""Classical emulator and verifier for quantum lattice-Boltzmann time marching."""

__version__ = "0.1.0"

from .ops import (
    Dense,
    Diagonal,
    DirectSum,
    Embedding,
    Identity,
    OperatorNormReport,
    Permutation,
    Product,
    StructuredOperator,
    Sum,
    Tensor,
    register_transpose,
    scale,
    spectral_norm,
    unitary_completion,
    verify_unitary,
)
from .lattice import (
    GridSpec,
    LowMachCheck,
    VelocityField,
    VelocitySet,
    check_low_mach,
    d1q3,
    d2q5,
    diffusion_coefficient,
    equilibrium,
    equilibrium_field,
    load_velocity_table,
    moment_phi,
    relaxation_regime,
    shift_operator,
    streaming_permutation,
)
from .classical import (
    DistributionField,
    collide,
    init_equilibrium,
    run,
    stream,
    trajectory_phi_csv,
)
from .marching import (
    MarchingOperatorSet,
    MarchingState,
    NormBoundReport,
    default_omega,
    equilibrium_diagonal,
    march,
    march_step,
    marching_operators,
    pack,
    stacked_column_norms_exact,
    verify_norm_bound,
)
