"""Gaussian continuous-variable cluster states in the covariance-matrix picture."""

from .entanglement import (
    NullifierSpec,
    PartialTranspose,
    PptVerdict,
    SymplecticSpectrum,
    entanglement_report,
    log_negativity,
    nullifier,
    nullifier_variance,
    partial_transpose,
    ppt_test,
    symplectic_spectrum,
)
from .protocols import (
    GraphSpec,
    InvariantViolation,
    ProtocolStep,
    ProtocolTrace,
    build_41_composite,
    build_four_mode_square,
    build_general,
    build_two_mode_composite,
    edge_owners,
    nullifiers_for_graph,
)
from .qubrick import (
    ChainMode,
    ChainReport,
    ErrorScalingModel,
    Feedforward,
    Qubrick,
    QubrickChain,
    ScalingTable,
    compare_error_scaling,
    crossover_size,
    load_input,
    make_qubrick,
    run_chain,
    transfer_to_light,
)
from .state import (
    GaussianState,
    InvalidArgument,
    ModeKind,
    ModeTag,
    ValidationReport,
    permute_modes,
    select_modes,
    symplectic_form,
    tensor,
    thermal_state,
    trace_out,
    vacuum_state,
    validate_state,
)
from .symplectic import (
    HomodyneResult,
    SymplecticTransform,
    apply,
    beamsplitter_xx,
    compose,
    homodyne,
    homodyne_p,
    homodyne_x,
    is_symplectic,
    qnd_general,
    qnd_xp,
    qnd_xx,
    rotation,
    s_int1,
    s_int2,
    squeezer,
    two_mode_squeezer,
)

__version__ = "0.1.0"
