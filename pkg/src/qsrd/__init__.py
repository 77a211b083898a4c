"""qsrd: desk-scale numerics for interactive quantum state redistribution."""

from .hilbert import (
    DensityOperator,
    IsometryOp,
    KrausChannel,
    Register,
    StateVector,
    apply_channel,
    apply_isometry,
    apply_unitary,
    basis_state,
    maximally_entangled,
    maximally_mixed,
    partial_trace,
    projective_measure,
    purify,
    random_density,
    random_state,
    random_unitary,
    tensor,
)
from .metrics import fidelity, purified_distance, trace_distance

__all__ = [
    "DensityOperator",
    "IsometryOp",
    "KrausChannel",
    "Register",
    "StateVector",
    "apply_channel",
    "apply_isometry",
    "apply_unitary",
    "basis_state",
    "fidelity",
    "maximally_entangled",
    "maximally_mixed",
    "partial_trace",
    "projective_measure",
    "purified_distance",
    "purify",
    "random_density",
    "random_state",
    "random_unitary",
    "tensor",
    "trace_distance",
]
