"""Entropic quantities: exact small-dimension evaluation plus certified
feasibility programs for max-information and conditional min/max entropy.

All logarithms are base 2.  Quantities that require an optimization are
returned as an EntropyReport carrying the feasible witness and its
minimum-eigenvalue slack, so every reported value is certified by an
explicit matrix rather than by solver internals.  Smoothed quantities are
never globally optimized; only computable bound chains are exposed, and
those reports are labeled method="bound-chain".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tolerances
from .hilbert import DensityOperator, StateError, partial_trace, purify_minimal
from .tolerances import tol

LOG2E = math.log2(math.e)

MAX_FEASIBILITY_DIM = 36  # joint dimension guard for the optimizer


def _support_decomposition(mat: np.ndarray):
    evals, evecs = np.linalg.eigh(mat)
    cut = max(evals.max(), 1.0) * tol(tolerances.SUPPORT_RTOL)
    keep = evals > cut
    return evals[keep], evecs[:, keep]


def entropy(rho: DensityOperator) -> float:
    """von Neumann entropy in bits; requires a normalized state."""
    if abs(rho.trace() - 1.0) > tol(tolerances.PROB_ATOL):
        raise StateError(f"entropy requires a normalized state, trace {rho.trace()}")
    evals = np.linalg.eigvalsh(rho.matrix)
    evals = evals[evals > tol(tolerances.SUPPORT_RTOL)]
    return float(-(evals * np.log2(evals)).sum())


def shannon_entropy(probs: Sequence[float]) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > tol(tolerances.SUPPORT_RTOL)]
    return float(-(p * np.log2(p)).sum())


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """D(rho || sigma) in bits; +inf on support violation."""
    if rho.registers != sigma.registers:
        raise StateError("relative entropy needs matching registers")
    svals, svecs = _support_decomposition(sigma.matrix)
    proj_out = np.eye(sigma.matrix.shape[0]) - svecs @ svecs.conj().T
    leak = float(np.trace(proj_out @ rho.matrix).real)
    if leak > tol(tolerances.PROB_ATOL):
        return math.inf
    rvals = np.linalg.eigvalsh(rho.matrix)
    rvals = rvals[rvals > tol(tolerances.SUPPORT_RTOL)]
    tr_rho_log_rho = float((rvals * np.log2(rvals)).sum())
    weights = np.einsum("ij,ji->i", svecs.conj().T, rho.matrix @ svecs).real
    tr_rho_log_sigma = float((weights * np.log2(svals)).sum())
    return tr_rho_log_rho - tr_rho_log_sigma


def dmax(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Max-relative entropy in bits; +inf on support violation."""
    if rho.registers != sigma.registers:
        raise StateError("dmax needs matching registers")
    svals, svecs = _support_decomposition(sigma.matrix)
    proj_out = np.eye(sigma.matrix.shape[0]) - svecs @ svecs.conj().T
    leak = float(np.trace(proj_out @ rho.matrix).real)
    if leak > tol(tolerances.PROB_ATOL):
        return math.inf
    inv_sqrt = svecs * (1.0 / np.sqrt(svals))
    core = inv_sqrt.conj().T @ rho.matrix @ inv_sqrt  # restricted to supp(sigma)
    lam = float(np.linalg.eigvalsh(core).max())
    return math.log2(max(lam, tol(tolerances.SUPPORT_RTOL)))


def mutual_info(rho: DensityOperator, a: Sequence[str], b: Sequence[str]) -> float:
    """I(A:B) = S(A) + S(B) - S(AB) on the marginal over a+b."""
    a, b = list(a), list(b)
    joint = partial_trace(rho, a + b) if set(rho.labels) != set(a + b) else rho
    return (
        entropy(partial_trace(joint, a))
        + entropy(partial_trace(joint, b))
        - entropy(joint)
    )


def cond_mutual_info(rho: DensityOperator, a: Sequence[str], b: Sequence[str],
                     c: Sequence[str]) -> float:
    """I(A:B|C) = I(A:BC) - I(A:C)."""
    a, b, c = list(a), list(b), list(c)
    return mutual_info(rho, a, b + c) - mutual_info(rho, a, c)


# ---------------------------------------------------------------------------
# feasibility programs: min Tr X  s.t.  I_A (x) X >= Q
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    witness: np.ndarray = field(repr=False)
    slack: float = 0.0            # min eigenvalue of I (x) X - Q
    dual_lower: float = math.nan  # certified lower bound on Tr X
    gap: float = math.nan


@dataclass
class EntropyReport:
    value: float
    method: str  # exact-eigen | feasibility-opt | bound-chain
    certificate: Certificate | None = None
    converged: bool = True
    clamped: bool = False

    def __post_init__(self):
        if self.method == "feasibility-opt" and self.certificate is not None:
            if self.certificate.slack < -tol(1e-8):
                raise StateError(
                    f"feasibility witness has slack {self.certificate.slack}"
                )


def _hermitian_basis(d: int) -> list[np.ndarray]:
    basis = []
    for i in range(d):
        e = np.zeros((d, d), dtype=np.complex128)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2)
            basis.append(e)
            e = np.zeros((d, d), dtype=np.complex128)
            e[i, j] = -1j / np.sqrt(2)
            e[j, i] = 1j / np.sqrt(2)
            basis.append(e)
    return basis


def _min_trace_feasible(q: np.ndarray, dim_a: int, dim_b: int,
                        gap_target: float = 1e-11):
    """Solve min Tr X over Hermitian X with I_A (x) X >= Q.

    Log-barrier Newton path.  Returns (optimal trace, X, Certificate,
    converged flag).  The dual lower bound comes from the barrier's
    implicit dual point, repaired to exact dual feasibility.
    """
    n = dim_a * dim_b
    if q.shape != (n, n):
        raise ValueError(f"constraint matrix shape {q.shape}, expected {(n, n)}")
    if n > MAX_FEASIBILITY_DIM:
        raise ValueError(f"joint dimension {n} exceeds {MAX_FEASIBILITY_DIM}")
    basis = _hermitian_basis(dim_b)
    eye_a = np.eye(dim_a)
    lifted = [np.kron(eye_a, e) for e in basis]
    lam_max = float(np.linalg.eigvalsh(q).max())
    x = (lam_max + 1.0) * np.eye(dim_b, dtype=np.complex128)

    def slack_matrix(xm):
        return np.kron(eye_a, xm) - q

    converged = True
    t = 1.0
    y_dual = None
    while True:
        # center at parameter t
        for _ in range(60):
            s = slack_matrix(x)
            evals, evecs = np.linalg.eigh(s)
            if evals.min() <= 0:
                raise StateError("barrier iterate left the feasible cone")
            s_inv = (evecs / evals) @ evecs.conj().T
            grad = np.array(
                [t * np.trace(e).real - np.trace(s_inv @ le).real
                 for e, le in zip(basis, lifted)]
            )
            half = [s_inv @ le for le in lifted]
            hess = np.empty((len(basis), len(basis)))
            for i in range(len(basis)):
                for j in range(i, len(basis)):
                    hess[i, j] = hess[j, i] = np.trace(half[i] @ half[j]).real
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
            decrement = float(-grad @ step)
            dx = sum(c * e for c, e in zip(step, basis))
            alpha = 1.0
            phi0 = t * np.trace(x).real - np.log(evals).sum()
            for _ in range(60):
                cand = x + alpha * dx
                ev_c = np.linalg.eigvalsh(slack_matrix(cand))
                if ev_c.min() > 0:
                    phi = t * np.trace(cand).real - np.log(ev_c).sum()
                    if phi <= phi0 - 0.25 * alpha * decrement + 1e-14:
                        break
                alpha *= 0.5
            else:
                alpha = 0.0
            if alpha == 0.0:
                break
            x = x + alpha * dx
            if decrement / 2.0 < 1e-13:
                break
        else:
            converged = False
        s = slack_matrix(x)
        evals, evecs = np.linalg.eigh(s)
        s_inv = (evecs / evals) @ evecs.conj().T
        y_dual = s_inv / t
        if n / t < gap_target:
            break
        t *= 20.0

    x = 0.5 * (x + x.conj().T)
    slack = float(np.linalg.eigvalsh(slack_matrix(x)).min())
    if slack < -tol(1e-10):  # feasibility repair: lift by the deficit
        x = x + (abs(slack) + tol(1e-12)) * np.eye(dim_b)
        slack = float(np.linalg.eigvalsh(slack_matrix(x)).min())
    primal = float(np.trace(x).real)
    # dual repair: y >= 0 with Tr_A[y] <= I certifies Tr[q y] <= optimum
    y = 0.5 * (y_dual + y_dual.conj().T)
    y_evals, y_evecs = np.linalg.eigh(y)
    if y_evals.min() < 0:  # clip rounding drift to keep the certificate valid
        y = (y_evecs * np.clip(y_evals, 0.0, None)) @ y_evecs.conj().T
    ta = y.reshape(dim_a, dim_b, dim_a, dim_b)
    marg = np.einsum("ibid->bd", ta)
    top = float(np.linalg.eigvalsh(marg).max())
    dual = float(np.trace(q @ y).real / top) if top > 0 else 0.0
    cert = Certificate(witness=x, slack=slack, dual_lower=dual, gap=primal - dual)
    return primal, x, cert, converged


def _ordered_matrix(rho: DensityOperator, a: Sequence[str], b: Sequence[str]):
    """Marginal on a+b with the matrix laid out in (A-block, B-block) order."""
    joint = partial_trace(rho, list(a) + list(b)) if set(rho.labels) != set(list(a) + list(b)) else rho
    ordered = sorted(a) + sorted(b)
    return joint.matrix_in_order(ordered), joint


def imax(rho: DensityOperator, a: Sequence[str], b: Sequence[str]) -> EntropyReport:
    """Max-information I_max(A:B) via min{Tr X : rho_A (x) X >= rho_AB}."""
    a, b = list(a), list(b)
    mat, joint = _ordered_matrix(rho, a, b)
    dim_a = int(np.prod([joint.register(l).dim for l in a]))
    dim_b = int(np.prod([joint.register(l).dim for l in b]))
    rho_a = partial_trace(joint, a).matrix_in_order(sorted(a))
    avals, avecs = _support_decomposition(rho_a)
    proj = avecs @ avecs.conj().T
    leak_op = np.kron(np.eye(dim_a) - proj, np.eye(dim_b))
    leak = float(np.trace(leak_op @ mat).real)
    if leak > tol(tolerances.PROB_ATOL):
        return EntropyReport(math.inf, "feasibility-opt", None, converged=False)
    inv_sqrt = avecs * (1.0 / np.sqrt(avals))   # dim_a x rank
    lift = np.kron(inv_sqrt, np.eye(dim_b))
    q = lift.conj().T @ mat @ lift              # (rank*dim_b) square
    rank = avals.size
    primal, x, cert, converged = _min_trace_feasible(q, rank, dim_b)
    return EntropyReport(math.log2(primal), "feasibility-opt", cert, converged)


def hmin(rho: DensityOperator, a: Sequence[str], b: Sequence[str]) -> EntropyReport:
    """Conditional min-entropy via min{Tr X : I_A (x) X >= rho_AB}."""
    a, b = list(a), list(b)
    mat, joint = _ordered_matrix(rho, a, b)
    dim_a = int(np.prod([joint.register(l).dim for l in a]))
    dim_b = int(np.prod([joint.register(l).dim for l in b]))
    primal, x, cert, converged = _min_trace_feasible(mat, dim_a, dim_b)
    return EntropyReport(-math.log2(primal), "feasibility-opt", cert, converged)


def _fresh_label(used, base="P"):
    k = 0
    while f"{base}{k}" in used:
        k += 1
    return f"{base}{k}"


def hmax(rho: DensityOperator, a: Sequence[str], b: Sequence[str]) -> EntropyReport:
    """Conditional max-entropy: -H_min(A|P) against a purifying register.

    Uses a rank-minimal purification internally; the value does not
    depend on the purification chosen.
    """
    a, b = list(a), list(b)
    joint = partial_trace(rho, a + b) if set(rho.labels) != set(a + b) else rho
    pur_label = _fresh_label(set(joint.labels))
    psi = purify_minimal(joint, pur_label)
    rho_ap = psi.marginal(a + [pur_label])
    report = hmin(rho_ap, a, [pur_label])
    return EntropyReport(-report.value, report.method, report.certificate, report.converged)


# ---------------------------------------------------------------------------
# closed-form bounds and certified bound chains
# ---------------------------------------------------------------------------

def fannes_bound(eps: float, dim: int) -> float:
    """Entropy-difference bound eps*log2(dim) + 1 for P(rho1,rho2) = eps."""
    if eps < 0 or eps > 1.0 / (2.0 * math.e) + tol(tolerances.FACT_SLACK):
        raise ValueError(f"eps {eps} outside [0, 1/(2e)]")
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    return eps * math.log2(dim) + 1.0


def imax_delta_lower_bound(omega_rbc: DensityOperator | None, delta: float, d: int,
                           r: Sequence[str] = ("RA", "RP"),
                           bc: Sequence[str] = ("B", "C"),
                           mutual_information: float | None = None) -> EntropyReport:
    """Certified lower bound I(R:BC) - 3*delta*log2(d) - 3 on the smoothed
    max-information of the maximally-correlated instance state.

    Either pass the state (mutual information computed exactly) or, in
    arithmetic-only mode, pass ``mutual_information`` directly (2*log2(d)
    for the instance family); no smoothing optimization is performed.
    """
    if delta < 0 or delta >= 1:
        raise ValueError("delta must lie in [0, 1)")
    if mutual_information is None:
        if omega_rbc is None:
            raise ValueError("need either a state or an explicit mutual information")
        mutual_information = mutual_info(omega_rbc, list(r), list(bc))
    value = mutual_information - 3.0 * delta * math.log2(d) - 3.0
    clamped = value < 0
    return EntropyReport(max(value, 0.0), "bound-chain", None, clamped=clamped)


def imax_delta_lower_via_hmax(rho: DensityOperator, a: Sequence[str], b: Sequence[str],
                              delta: float) -> EntropyReport:
    """Lower bound -H_max(A|B) + log2(1 - delta^2) on the smoothed
    max-information, via the conditional max-entropy feasibility program.

    Returns -inf (degenerate marker) as delta -> 1.
    """
    if delta < 0 or delta > 1:
        raise ValueError("delta must lie in [0, 1]")
    if 1.0 - delta * delta <= 0:
        return EntropyReport(-math.inf, "bound-chain", None, clamped=True)
    hmax_report = hmax(rho, a, b)
    value = -hmax_report.value + math.log2(1.0 - delta * delta)
    return EntropyReport(value, "bound-chain", hmax_report.certificate)
