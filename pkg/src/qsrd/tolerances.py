"""Global numerical tolerances, overridable via QSRD_TOLERANCE_SCALE.

All comparison slack in the package funnels through ``tol`` so that one
environment variable rescales everything uniformly (useful when running
on platforms with a different BLAS).
"""

import os

# Base tolerances (scale factor 1).
NORM_ATOL = 1e-10          # state normalization
HERM_ATOL = 1e-10          # Hermiticity of density operators
PSD_ATOL = 1e-10           # allowed negative eigenvalue drift
TRACE_ATOL = 1e-10         # trace-one drift
ISOMETRY_ATOL = 1e-9       # V^dag V = I residual
PROJECTOR_ATOL = 1e-9      # completeness / orthogonality of measurements
PROB_ATOL = 1e-9           # probability sums
ENTRY_ATOL = 1e-12         # entrywise matrix agreement
BRANCH_PRUNE = 1e-12       # zero-probability history pruning
SUPPORT_RTOL = 1e-12       # eigenvalue cutoff for support projection
FACT_SLACK = 1e-6          # slack allowed in fact-suite inequalities


def scale() -> float:
    """Current tolerance multiplier (default 1.0)."""
    raw = os.environ.get("QSRD_TOLERANCE_SCALE", "1")
    try:
        value = float(raw)
    except ValueError:
        return 1.0
    return value if value > 0 else 1.0


def tol(base: float) -> float:
    """A base tolerance scaled by QSRD_TOLERANCE_SCALE."""
    return base * scale()
