"""Multi-register complex Hilbert-space kernel.

States live on ordered lists of labeled registers.  Register order is
canonicalized lexicographically by label at construction, so any two
objects over the same labels are directly comparable entrywise.  All
values are immutable after construction and all operations are pure;
random generation takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import tolerances
from .tolerances import tol


class RegisterError(ValueError):
    """Unknown, duplicated, or dimensionally inconsistent registers."""


class StateError(ValueError):
    """State-level invariant violation (norm, positivity, trace)."""


@dataclass(frozen=True, order=True)
class Register:
    label: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise RegisterError(f"register {self.label!r} has dim {self.dim} < 1")
        if not self.label:
            raise RegisterError("register label must be non-empty")


def _as_registers(registers: Iterable[Register | tuple]) -> tuple[Register, ...]:
    regs = tuple(r if isinstance(r, Register) else Register(*r) for r in registers)
    labels = [r.label for r in regs]
    if len(set(labels)) != len(labels):
        raise RegisterError(f"duplicate register labels in {labels}")
    return regs


def _canonical_perm(regs: Sequence[Register]) -> list[int]:
    return sorted(range(len(regs)), key=lambda i: regs[i].label)


def _dims(regs: Sequence[Register]) -> tuple[int, ...]:
    return tuple(r.dim for r in regs)


def total_dim(regs: Sequence[Register]) -> int:
    return int(np.prod(_dims(regs), dtype=np.int64)) if regs else 1


class StateVector:
    """Pure (possibly subnormalized) state over labeled registers."""

    __slots__ = ("registers", "amplitudes", "subnormalized")

    def __init__(self, registers: Iterable[Register | tuple], amplitudes: np.ndarray):
        regs = _as_registers(registers)
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != total_dim(regs):
            raise RegisterError(
                f"{amps.size} amplitudes for total dimension {total_dim(regs)}"
            )
        perm = _canonical_perm(regs)
        if perm != list(range(len(regs))):
            amps = amps.reshape(_dims(regs)).transpose(perm).reshape(-1)
            regs = tuple(regs[i] for i in perm)
        nsq = float(np.vdot(amps, amps).real)
        if nsq > 1.0 + tol(tolerances.NORM_ATOL):
            raise StateError(f"squared norm {nsq} exceeds 1")
        object.__setattr__(self, "registers", regs)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "subnormalized", nsq < 1.0 - tol(tolerances.NORM_ATOL))

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    # -- structural helpers -------------------------------------------------

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return _dims(self.registers)

    def register(self, label: str) -> Register:
        for r in self.registers:
            if r.label == label:
                return r
        raise RegisterError(f"no register {label!r} in {self.labels}")

    def axes_of(self, labels: Sequence[str]) -> list[int]:
        pos = {r.label: i for i, r in enumerate(self.registers)}
        missing = [l for l in labels if l not in pos]
        if missing:
            raise RegisterError(f"registers {missing} not present in {self.labels}")
        return [pos[l] for l in labels]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        if self.registers != other.registers:
            raise RegisterError(f"register mismatch: {self.labels} vs {other.labels}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.registers, self.amplitudes * factor)

    def add(self, other: "StateVector") -> "StateVector":
        if self.registers != other.registers:
            raise RegisterError(f"register mismatch: {self.labels} vs {other.labels}")
        return StateVector(self.registers, self.amplitudes + other.amplitudes)

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n < tol(tolerances.BRANCH_PRUNE):
            raise StateError("cannot normalize a (numerically) zero vector")
        return StateVector(self.registers, self.amplitudes / n)

    def relabeled(self, mapping: dict[str, str]) -> "StateVector":
        regs = [Register(mapping.get(r.label, r.label), r.dim) for r in self.registers]
        return StateVector(regs, self.amplitudes)

    def to_density(self) -> "DensityOperator":
        return DensityOperator(self.registers, np.outer(self.amplitudes, self.amplitudes.conj()))

    def marginal(self, keep: Sequence[str]) -> "DensityOperator":
        """Reduced density operator on ``keep`` (direct contraction)."""
        keep = list(keep)
        keep_axes = self.axes_of(keep)
        n = len(self.registers)
        rest_axes = [i for i in range(n) if i not in keep_axes]
        perm = keep_axes + rest_axes
        dk = int(np.prod([self.dims[i] for i in keep_axes], dtype=np.int64)) if keep_axes else 1
        mat = self.amplitudes.reshape(self.dims).transpose(perm).reshape(dk, -1)
        rho = mat @ mat.conj().T
        keep_regs = [self.registers[i] for i in keep_axes]
        return DensityOperator(keep_regs, rho)


class DensityOperator:
    """Positive semidefinite (sub)normalized operator over labeled registers."""

    __slots__ = ("registers", "matrix")

    def __init__(self, registers: Iterable[Register | tuple], matrix: np.ndarray):
        regs = _as_registers(registers)
        mat = np.asarray(matrix, dtype=np.complex128)
        d = total_dim(regs)
        if mat.shape != (d, d):
            raise RegisterError(f"matrix shape {mat.shape} for total dimension {d}")
        perm = _canonical_perm(regs)
        if perm != list(range(len(regs))):
            n = len(regs)
            dims = _dims(regs)
            mat = (
                mat.reshape(dims + dims)
                .transpose(perm + [p + n for p in perm])
                .reshape(d, d)
            )
            regs = tuple(regs[i] for i in perm)
        if np.abs(mat - mat.conj().T).max() > tol(tolerances.HERM_ATOL):
            raise StateError("matrix is not Hermitian within tolerance")
        mat = 0.5 * (mat + mat.conj().T)
        evals = np.linalg.eigvalsh(mat)
        if evals.min() < -tol(tolerances.PSD_ATOL):
            raise StateError(f"minimum eigenvalue {evals.min()} below tolerance")
        tr = float(mat.trace().real)
        if tr <= 0 or tr > 1.0 + tol(tolerances.TRACE_ATOL):
            raise StateError(f"trace {tr} outside (0, 1]")
        object.__setattr__(self, "registers", regs)
        object.__setattr__(self, "matrix", mat)

    def __setattr__(self, name, value):
        raise AttributeError("DensityOperator is immutable")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return _dims(self.registers)

    def trace(self) -> float:
        return float(self.matrix.trace().real)

    def register(self, label: str) -> Register:
        for r in self.registers:
            if r.label == label:
                return r
        raise RegisterError(f"no register {label!r} in {self.labels}")

    def axes_of(self, labels: Sequence[str]) -> list[int]:
        pos = {r.label: i for i, r in enumerate(self.registers)}
        missing = [l for l in labels if l not in pos]
        if missing:
            raise RegisterError(f"registers {missing} not present in {self.labels}")
        return [pos[l] for l in labels]

    def relabeled(self, mapping: dict[str, str]) -> "DensityOperator":
        regs = [Register(mapping.get(r.label, r.label), r.dim) for r in self.registers]
        return DensityOperator(regs, self.matrix)

    def matrix_in_order(self, labels: Sequence[str]) -> np.ndarray:
        """Matrix with row/column multi-index following ``labels`` order."""
        if sorted(labels) != sorted(self.labels):
            raise RegisterError(f"{labels} is not a permutation of {self.labels}")
        perm = self.axes_of(labels)
        n = len(self.registers)
        d = self.matrix.shape[0]
        return (
            self.matrix.reshape(self.dims + self.dims)
            .transpose(perm + [p + n for p in perm])
            .reshape(d, d)
        )


@dataclass(frozen=True)
class IsometryOp:
    """Linear isometry between register lists.

    ``matrix`` has shape (prod out dims, prod in dims) with row/column
    multi-indices following ``out_registers`` / ``in_registers`` order.
    """

    in_registers: tuple[Register, ...]
    out_registers: tuple[Register, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        in_regs = _as_registers(self.in_registers)
        out_regs = _as_registers(self.out_registers)
        mat = np.asarray(self.matrix, dtype=np.complex128)
        expected = (total_dim(out_regs), total_dim(in_regs))
        if mat.shape != expected:
            raise RegisterError(f"isometry shape {mat.shape}, expected {expected}")
        gram = mat.conj().T @ mat
        if np.abs(gram - np.eye(mat.shape[1])).max() > tol(tolerances.ISOMETRY_ATOL):
            raise StateError("V^dag V deviates from identity beyond tolerance")
        object.__setattr__(self, "in_registers", in_regs)
        object.__setattr__(self, "out_registers", out_regs)
        object.__setattr__(self, "matrix", mat)

    @property
    def in_labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.in_registers)

    @property
    def out_labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.out_registers)


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive map given by Kraus operators on a register subset.

    Trace preserving (CPTP) when ``trace_preserving``; otherwise trace
    non-increasing is enforced.
    """

    in_registers: tuple[Register, ...]
    out_registers: tuple[Register, ...]
    kraus_ops: tuple[np.ndarray, ...] = field(repr=False)
    trace_preserving: bool = True

    def __post_init__(self):
        in_regs = _as_registers(self.in_registers)
        out_regs = _as_registers(self.out_registers)
        ops = tuple(np.asarray(k, dtype=np.complex128) for k in self.kraus_ops)
        shape = (total_dim(out_regs), total_dim(in_regs))
        for k in ops:
            if k.shape != shape:
                raise RegisterError(f"Kraus operator shape {k.shape}, expected {shape}")
        acc = sum(k.conj().T @ k for k in ops)
        eye = np.eye(shape[1])
        if self.trace_preserving:
            if np.abs(acc - eye).max() > tol(tolerances.ISOMETRY_ATOL):
                raise StateError("Kraus operators do not sum to identity (CPTP)")
        else:
            evals = np.linalg.eigvalsh(acc - eye)
            if evals.max() > tol(tolerances.ISOMETRY_ATOL):
                raise StateError("Kraus operators exceed identity (not trace non-increasing)")
        object.__setattr__(self, "in_registers", in_regs)
        object.__setattr__(self, "out_registers", out_regs)
        object.__setattr__(self, "kraus_ops", ops)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def basis_state(registers: Iterable[Register | tuple], indices: Sequence[int]) -> StateVector:
    """Computational basis state |i1 i2 ...> in the given register order."""
    regs = _as_registers(registers)
    idx = list(indices)
    if len(idx) != len(regs):
        raise RegisterError("one basis index per register required")
    flat = 0
    for r, i in zip(regs, idx):
        if not 0 <= i < r.dim:
            raise RegisterError(f"basis index {i} out of range for {r}")
        flat = flat * r.dim + i
    amps = np.zeros(total_dim(regs), dtype=np.complex128)
    amps[flat] = 1.0
    return StateVector(regs, amps)


def maximally_entangled(reg_a: Register, reg_b: Register) -> StateVector:
    if reg_a.dim != reg_b.dim:
        raise RegisterError("maximally entangled pair needs equal dims")
    d = reg_a.dim
    amps = np.eye(d, dtype=np.complex128).reshape(-1) / np.sqrt(d)
    return StateVector((reg_a, reg_b), amps)


def maximally_mixed(registers: Iterable[Register | tuple]) -> DensityOperator:
    regs = _as_registers(registers)
    d = total_dim(regs)
    return DensityOperator(regs, np.eye(d, dtype=np.complex128) / d)


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def tensor(a, b):
    """Kronecker product of two StateVectors or two DensityOperators."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        shared = set(a.labels) & set(b.labels)
        if shared:
            raise RegisterError(f"label collision in tensor: {sorted(shared)}")
        return StateVector(a.registers + b.registers, np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        shared = set(a.labels) & set(b.labels)
        if shared:
            raise RegisterError(f"label collision in tensor: {sorted(shared)}")
        return DensityOperator(a.registers + b.registers, np.kron(a.matrix, b.matrix))
    raise TypeError("tensor requires two StateVectors or two DensityOperators")


def partial_trace(rho: DensityOperator | StateVector, keep: Sequence[str]) -> DensityOperator:
    """Marginal of ``rho`` on the ``keep`` registers."""
    if isinstance(rho, StateVector):
        return rho.marginal(keep)
    keep = list(keep)
    keep_axes = rho.axes_of(keep)
    n = len(rho.registers)
    rest = [i for i in range(n) if i not in keep_axes]
    if not rest:
        return DensityOperator([rho.registers[i] for i in keep_axes],
                               rho.matrix_in_order([rho.registers[i].label for i in keep_axes]))
    dims = rho.dims
    arr = rho.matrix.reshape(dims + dims)
    # contract traced axis pairs one at a time, tracking axis shifts
    removed = 0
    for ax in sorted(rest):
        a = ax - removed
        b = ax - removed + (n - removed)
        arr = np.trace(arr, axis1=a, axis2=b)
        removed += 1
    dk = int(np.prod([dims[i] for i in keep_axes], dtype=np.int64)) if keep_axes else 1
    kept_sorted = [i for i in range(n) if i in keep_axes]
    mat = arr.reshape(dk, dk)
    regs = [rho.registers[i] for i in kept_sorted]
    out = DensityOperator(regs, mat)
    return out


def purify(rho: DensityOperator, ancilla_label: str) -> StateVector:
    """Purification with ancilla dimension equal to the input dimension.

    Eigenvectors enter in descending-eigenvalue order, so a pure input
    purifies to (input) x |0>_ancilla.
    """
    if abs(rho.trace() - 1.0) > tol(tolerances.TRACE_ATOL):
        raise StateError("purify requires a normalized state")
    if ancilla_label in rho.labels:
        raise RegisterError(f"ancilla label {ancilla_label!r} already in use")
    d = rho.matrix.shape[0]
    evals, evecs = np.linalg.eigh(rho.matrix)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # |psi> = sum_i sqrt(l_i) |v_i> |i>, laid out with ancilla as last axis
    amps = (evecs * np.sqrt(evals)).reshape(-1)
    regs = rho.registers + (Register(ancilla_label, d),)
    return StateVector(regs, amps)


def purify_minimal(rho: DensityOperator, ancilla_label: str) -> StateVector:
    """Purification with ancilla dimension equal to rank(rho)."""
    if ancilla_label in rho.labels:
        raise RegisterError(f"ancilla label {ancilla_label!r} already in use")
    evals, evecs = np.linalg.eigh(rho.matrix)
    cut = max(tol(tolerances.SUPPORT_RTOL) * max(evals.max(), 1.0), 0.0)
    order = np.argsort(evals)[::-1]
    keep = [i for i in order if evals[i] > cut] or [int(order[0])]
    vals = np.clip(evals[keep], 0.0, None)
    amps = (evecs[:, keep] * np.sqrt(vals)).reshape(-1)
    regs = rho.registers + (Register(ancilla_label, len(keep)),)
    return StateVector(regs, amps)


def _apply_matrix(state: StateVector, mat: np.ndarray, in_labels: Sequence[str],
                  out_registers: Sequence[Register]) -> StateVector:
    """Apply a (dout x din) matrix to the ``in_labels`` axes of ``state``."""
    in_axes = state.axes_of(in_labels)
    n = len(state.registers)
    rest_axes = [i for i in range(n) if i not in in_axes]
    rest_regs = [state.registers[i] for i in rest_axes]
    shared = {r.label for r in rest_regs} & {r.label for r in out_registers}
    if shared:
        raise RegisterError(f"output registers collide with untouched ones: {sorted(shared)}")
    din = int(np.prod([state.dims[i] for i in in_axes], dtype=np.int64)) if in_axes else 1
    arr = state.amplitudes.reshape(state.dims).transpose(in_axes + rest_axes).reshape(din, -1)
    out = mat @ arr
    regs = tuple(out_registers) + tuple(rest_regs)
    return StateVector(regs, out.reshape(-1))


def apply_isometry(iso: IsometryOp, state: StateVector) -> StateVector:
    """Apply an isometry; norm is preserved and registers are replaced."""
    return _apply_matrix(state, iso.matrix, list(iso.in_labels), iso.out_registers)


def apply_adjoint(iso: IsometryOp, state: StateVector) -> StateVector:
    """Apply the adjoint of an isometry (a contraction; may subnormalize)."""
    return _apply_matrix(state, iso.matrix.conj().T, list(iso.out_labels), iso.in_registers)


def apply_unitary(state: StateVector, mat: np.ndarray, labels: Sequence[str]) -> StateVector:
    """Apply a square unitary on the composite of ``labels`` (in that order)."""
    regs = [state.register(l) for l in labels]
    d = total_dim(regs)
    mat = np.asarray(mat, dtype=np.complex128)
    if mat.shape != (d, d):
        raise RegisterError(f"operator shape {mat.shape} for dimension {d}")
    return _apply_matrix(state, mat, labels, regs)


def _conjugate_matrix(rho: DensityOperator, mat: np.ndarray, in_labels: Sequence[str],
                      out_registers: Sequence[Register]):
    """Raw M rho M^dag on the ``in_labels`` axes; returns (registers, matrix)."""
    in_axes = rho.axes_of(in_labels)
    n = len(rho.registers)
    rest_axes = [i for i in range(n) if i not in in_axes]
    rest_regs = [rho.registers[i] for i in rest_axes]
    din = int(np.prod([rho.dims[i] for i in in_axes], dtype=np.int64)) if in_axes else 1
    drest = int(np.prod([rho.dims[i] for i in rest_axes], dtype=np.int64)) if rest_axes else 1
    perm = in_axes + rest_axes
    arr = (
        rho.matrix.reshape(rho.dims + rho.dims)
        .transpose(perm + [p + n for p in perm])
        .reshape(din, drest, din, drest)
    )
    arr = np.einsum("ab,bmcn->amcn", mat, arr)
    arr = np.einsum("amcn,dc->amdn", arr, mat.conj())
    dout = mat.shape[0]
    regs = tuple(out_registers) + tuple(rest_regs)
    return regs, arr.reshape(dout * drest, dout * drest)


def conjugate_density(rho: DensityOperator, mat: np.ndarray, in_labels: Sequence[str],
                      out_registers: Sequence[Register]) -> DensityOperator:
    """rho -> M rho M^dag with M acting on the ``in_labels`` axes."""
    regs, out = _conjugate_matrix(rho, mat, in_labels, out_registers)
    return DensityOperator(regs, out)


def apply_channel(channel: KrausChannel, rho: DensityOperator) -> DensityOperator:
    """Apply a Kraus channel to the matching registers of ``rho``."""
    in_labels = [r.label for r in channel.in_registers]
    acc = None
    for k in channel.kraus_ops:
        regs, term = _conjugate_matrix(rho, k, in_labels, channel.out_registers)
        acc = term if acc is None else acc + term
    return DensityOperator(regs, acc)


def projective_measure(state: StateVector, projectors: Sequence[np.ndarray],
                       labels: Sequence[str]) -> list[tuple[float, StateVector | None]]:
    """Measure the composite of ``labels`` with the given projector list.

    Returns one (probability, post-state) pair per projector, in order.
    Zero-probability outcomes carry None as post-state.
    """
    regs = [state.register(l) for l in labels]
    d = total_dim(regs)
    mats = [np.asarray(p, dtype=np.complex128) for p in projectors]
    for p in mats:
        if p.shape != (d, d):
            raise RegisterError(f"projector shape {p.shape} for dimension {d}")
    total = sum(mats)
    if np.abs(total - np.eye(d)).max() > tol(tolerances.PROJECTOR_ATOL):
        raise StateError("projectors do not sum to identity")
    for i, p in enumerate(mats):
        if np.abs(p @ p - p).max() > tol(tolerances.PROJECTOR_ATOL):
            raise StateError(f"projector {i} is not idempotent")
        for q in mats[i + 1:]:
            if np.abs(p @ q).max() > tol(tolerances.PROJECTOR_ATOL):
                raise StateError("projectors are not mutually orthogonal")
    outcomes: list[tuple[float, StateVector | None]] = []
    for p in mats:
        branch = _apply_matrix(state, p, labels, regs)
        prob = float(np.vdot(branch.amplitudes, branch.amplitudes).real)
        if prob < tol(tolerances.BRANCH_PRUNE):
            outcomes.append((0.0, None))
        else:
            outcomes.append((prob, branch.normalized()))
    return outcomes


# ---------------------------------------------------------------------------
# seeded random generation
# ---------------------------------------------------------------------------

def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_state(registers: Iterable[Register | tuple], rng: np.random.Generator) -> StateVector:
    """Haar-random pure state on the given registers."""
    regs = _as_registers(registers)
    d = total_dim(regs)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector(regs, z / np.linalg.norm(z))


def random_density(registers: Iterable[Register | tuple], rng: np.random.Generator,
                   rank: int | None = None) -> DensityOperator:
    """Random mixed state: partial trace of a Haar-random purification."""
    regs = _as_registers(registers)
    d = total_dim(regs)
    r = rank or d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    mat = g @ g.conj().T
    return DensityOperator(regs, mat / mat.trace())


def random_isometry(din: int, dout: int, rng: np.random.Generator) -> np.ndarray:
    if dout < din:
        raise RegisterError("isometry needs dout >= din")
    return random_unitary(dout, rng)[:, :din]


def random_projective(dim: int, n_outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random complete projective measurement with n_outcomes blocks."""
    if n_outcomes > dim:
        raise RegisterError("more outcomes than dimensions")
    u = random_unitary(dim, rng)
    sizes = [dim // n_outcomes] * n_outcomes
    for i in range(dim % n_outcomes):
        sizes[i] += 1
    projs, start = [], 0
    for s in sizes:
        cols = u[:, start:start + s]
        projs.append(cols @ cols.conj().T)
        start += s
    return projs


def random_cptp(dim: int, rng: np.random.Generator, env_dim: int = 2):
    """Random CPTP map on a dim-level system via Stinespring dilation.

    Returns the list of Kraus operators (dim x dim each).
    """
    v = random_isometry(dim, dim * env_dim, rng)
    # rows indexed by (out, env); slice out Kraus blocks per env index
    v = v.reshape(dim, env_dim, dim)
    return [v[:, e, :] for e in range(env_dim)]
