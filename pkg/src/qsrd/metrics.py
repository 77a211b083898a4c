"""Distance and fidelity measures on (sub)normalized states.

The fidelity here is the generalized one, ||sqrt(rho) sqrt(sigma)||_1
plus a correction term for subnormalized inputs, so the purified
distance sqrt(1 - F^2) is a metric on subnormalized states as well.
"""

from __future__ import annotations

import numpy as np

from . import tolerances
from .hilbert import DensityOperator, RegisterError, StateError, StateVector
from .tolerances import tol

State = StateVector | DensityOperator


def _check_same_registers(a: State, b: State):
    if a.registers != b.registers:
        raise RegisterError(f"register mismatch: {a.labels} vs {b.labels}")


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Hermitian square root with small negative eigenvalues clipped to 0."""
    evals, evecs = np.linalg.eigh(mat)
    if evals.min() < -tol(tolerances.PSD_ATOL):
        raise StateError(f"matrix not PSD: min eigenvalue {evals.min()}")
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def _trace_of(s: State) -> float:
    if isinstance(s, StateVector):
        return float(np.vdot(s.amplitudes, s.amplitudes).real)
    return s.trace()


def fidelity(rho: State, sigma: State) -> float:
    """Generalized fidelity; 1 iff the states agree and are normalized."""
    _check_same_registers(rho, sigma)
    tr_r = _trace_of(rho)
    tr_s = _trace_of(sigma)
    if isinstance(rho, StateVector) and isinstance(sigma, StateVector):
        root = abs(np.vdot(rho.amplitudes, sigma.amplitudes))
    elif isinstance(rho, StateVector) or isinstance(sigma, StateVector):
        psi, op = (rho, sigma) if isinstance(rho, StateVector) else (sigma, rho)
        # rank-one side: ||sqrt(rho) sqrt(sigma)||_1 = sqrt(<psi|sigma|psi>)
        root = float(np.sqrt(max(np.vdot(psi.amplitudes, op.matrix @ psi.amplitudes).real, 0.0)))
    else:
        prod = sqrtm_psd(rho.matrix) @ sqrtm_psd(sigma.matrix)
        root = float(np.linalg.svd(prod, compute_uv=False).sum())
    correction = np.sqrt(max(1.0 - tr_r, 0.0) * max(1.0 - tr_s, 0.0))
    return float(min(root + correction, 1.0))


def purified_distance(rho: State, sigma: State) -> float:
    """P(rho, sigma) = sqrt(1 - F(rho, sigma)^2)."""
    f = fidelity(rho, sigma)
    return float(np.sqrt(max(1.0 - f * f, 0.0)))


def trace_distance(rho: State, sigma: State) -> float:
    """(1/2)||rho - sigma||_1."""
    _check_same_registers(rho, sigma)
    a = rho.to_density().matrix if isinstance(rho, StateVector) else rho.matrix
    b = sigma.to_density().matrix if isinstance(sigma, StateVector) else sigma.matrix
    evals = np.linalg.eigvalsh(a - b)
    return float(0.5 * np.abs(evals).sum())


def rescaled_distance_bound(eps: float, alpha: float) -> float:
    """Bound on P(rho, sigma) given P(alpha rho, alpha sigma) <= eps."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return float(eps * np.sqrt(2.0 / alpha))


def in_epsilon_ball(rho: State, candidate: State, eps: float) -> bool:
    """Membership predicate for the purified-distance ball around rho."""
    return purified_distance(rho, candidate) <= eps + tol(tolerances.FACT_SLACK)
