"""Interactive classical-message protocols with shared entanglement.

An r-round protocol (r odd) alternates projective measurements: odd
rounds act on Alice's registers A, C, EA; even rounds on Bob's B, EB.
After round r Bob applies a unitary (B, EB) -> (B, C0, TB) and Alice a
unitary on (A, C, EA).  Message values are the 1-based positions of the
measurement projectors; the value 0 is reserved as an abort flag by the
compiled protocols downstream.

Cost convention: a transcript (i_1, ..., i_r) costs log2(i_1 * ... * i_r)
bits.  This is an index-based accounting, not a prefix-code length; in
particular the message "1" is free.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tolerances
from .hilbert import (
    DensityOperator,
    Register,
    RegisterError,
    StateError,
    StateVector,
    apply_unitary,
    basis_state,
    maximally_entangled,
    projective_measure,
    random_projective,
    random_unitary,
    tensor,
    _apply_matrix,
)
from .metrics import purified_distance
from .tolerances import tol

ALICE_LABELS = ("A", "C", "EA")
BOB_LABELS = ("B", "EB")


@dataclass(frozen=True)
class ProtocolSpec:
    """History-indexed projective measurements plus final local unitaries."""

    rounds: int
    a_dim: int
    b_dim: int
    c_dim: int
    entanglement: StateVector = field(repr=False)
    measurements: dict[tuple[int, ...], list[np.ndarray]] = field(repr=False)
    final_unitaries: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = field(repr=False)
    c0_dim: int = 0
    tb_dim: int = 1

    def __post_init__(self):
        if self.rounds < 1 or self.rounds % 2 == 0:
            raise ValueError(f"rounds must be odd and >= 1, got {self.rounds}")
        if set(self.entanglement.labels) != {"EA", "EB"}:
            raise RegisterError("entanglement must live on registers EA, EB")
        if self.c0_dim == 0:
            object.__setattr__(self, "c0_dim", self.c_dim)
        if self.c0_dim != self.c_dim:
            raise RegisterError("C0 must match the dimension of C")
        if self.eb_dim != self.c0_dim * self.tb_dim:
            raise RegisterError(
                f"EB dim {self.eb_dim} must equal C0*TB = {self.c0_dim * self.tb_dim}"
            )
        alice_d = self.a_dim * self.c_dim * self.ea_dim
        bob_d = self.b_dim * self.eb_dim
        for hist, projs in self.measurements.items():
            k = len(hist) + 1
            if k > self.rounds:
                raise ValueError(f"history {hist} longer than protocol")
            d = alice_d if k % 2 == 1 else bob_d
            total = sum(np.asarray(p, dtype=np.complex128) for p in projs)
            if total.shape != (d, d):
                raise RegisterError(f"projectors for history {hist} act on wrong space")
            if np.abs(total - np.eye(d)).max() > tol(tolerances.PROJECTOR_ATOL):
                raise StateError(f"projectors for history {hist} do not sum to identity")
        for hist, (ua, ub) in self.final_unitaries.items():
            if len(hist) != self.rounds:
                raise ValueError(f"final unitary keyed by partial history {hist}")
            ua = np.asarray(ua)
            ub = np.asarray(ub)
            if ua.shape != (alice_d, alice_d):
                raise RegisterError(f"final Alice unitary for {hist} has shape {ua.shape}")
            if ub.shape != (bob_d, bob_d):
                raise RegisterError(f"final Bob unitary for {hist} has shape {ub.shape}")
            for u, side in ((ua, "Alice"), (ub, "Bob")):
                if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > tol(tolerances.ISOMETRY_ATOL):
                    raise StateError(f"final {side} unitary for {hist} is not unitary")

    @property
    def ea_dim(self) -> int:
        return self.entanglement.register("EA").dim

    @property
    def eb_dim(self) -> int:
        return self.entanglement.register("EB").dim

    def acting_labels(self, round_index: int) -> tuple[str, ...]:
        return ALICE_LABELS if round_index % 2 == 1 else BOB_LABELS


@dataclass(frozen=True)
class TranscriptEntry:
    probability: float
    post_state: StateVector | None = field(repr=False, default=None)


@dataclass(frozen=True)
class TranscriptDistribution:
    """Probability mass over message tuples with per-tuple post states."""

    entries: dict[tuple[int, ...], TranscriptEntry]

    def __post_init__(self):
        total = 0.0
        for tup, entry in self.entries.items():
            if not tup or any((not isinstance(i, int)) or i < 1 for i in tup):
                raise ValueError(f"message tuples need positive integer entries, got {tup}")
            total += entry.probability
        if abs(total - 1.0) > tol(tolerances.PROB_ATOL):
            raise StateError(f"transcript probabilities sum to {total}")

    def probabilities(self) -> dict[tuple[int, ...], float]:
        return {t: e.probability for t, e in self.entries.items()}

    def rounds(self) -> int:
        return len(next(iter(self.entries)))


@dataclass
class ProtocolRun:
    """Everything produced by executing a protocol on one input."""

    spec: ProtocolSpec
    input_state: StateVector
    initial_state: StateVector          # input (x) entanglement
    node_probs: dict[tuple[int, ...], float]
    node_states: dict[tuple[int, ...], StateVector]  # pre-measurement states per prefix
    transcript: TranscriptDistribution
    output_average: DensityOperator     # averaged over messages, on R..BC0A

    @property
    def expected_cost(self) -> float:
        return expected_cost(self.transcript)


def run_protocol(spec: ProtocolSpec, input_state: StateVector) -> ProtocolRun:
    """Execute the protocol tree, pruning zero-probability branches."""
    for label, dim in (("A", spec.a_dim), ("B", spec.b_dim), ("C", spec.c_dim)):
        if input_state.register(label).dim != dim:
            raise RegisterError(f"input register {label} has wrong dimension")
    reserved = set(input_state.labels) & {"EA", "EB", "C0", "TB"}
    if reserved or any(l.startswith("M") for l in input_state.labels):
        raise RegisterError(
            "input may not use the reserved labels EA, EB, C0, TB or M-prefixed names"
        )
    state0 = tensor(input_state, spec.entanglement)
    node_probs: dict[tuple[int, ...], float] = {(): 1.0}
    node_states: dict[tuple[int, ...], StateVector] = {(): state0}
    frontier = [((), 1.0, state0)]
    for k in range(1, spec.rounds + 1):
        labels = list(spec.acting_labels(k))
        next_frontier = []
        for hist, prob, state in frontier:
            if hist not in spec.measurements:
                raise StateError(f"projector set missing for history {hist}")
            outcomes = projective_measure(state, spec.measurements[hist], labels)
            for pos, (cond_p, post) in enumerate(outcomes):
                if post is None or cond_p <= tol(tolerances.BRANCH_PRUNE):
                    continue
                child = hist + (pos + 1,)
                p_abs = prob * cond_p
                node_probs[child] = p_abs
                node_states[child] = post
                next_frontier.append((child, p_abs, post))
        frontier = next_frontier
    entries = {}
    acc = None
    out_regs = None
    keep = None
    for hist, prob, state in frontier:
        if hist not in spec.final_unitaries:
            raise StateError(f"final unitaries missing for history {hist}")
        ua, ub = spec.final_unitaries[hist]
        rotated = apply_unitary(state, ua, list(ALICE_LABELS))
        out = [Register("B", spec.b_dim), Register("C0", spec.c0_dim), Register("TB", spec.tb_dim)]
        tau = _apply_matrix(rotated, np.asarray(ub, dtype=np.complex128), list(BOB_LABELS), out)
        entries[hist] = TranscriptEntry(prob, tau)
        if keep is None:
            keep = [l for l in tau.labels if l not in ("C", "EA", "TB")]
        marg = tau.marginal(keep)
        acc = marg.matrix * prob if acc is None else acc + marg.matrix * prob
        out_regs = marg.registers
    if acc is None:
        raise StateError("protocol produced no surviving branches")
    output = DensityOperator(out_regs, acc)
    return ProtocolRun(
        spec=spec, input_state=input_state, initial_state=state0,
        node_probs=node_probs, node_states=node_states,
        transcript=TranscriptDistribution(entries), output_average=output,
    )


# ---------------------------------------------------------------------------
# cost functionals
# ---------------------------------------------------------------------------

def communication_weight(dist: Mapping[int, float]) -> float:
    """Sum of p_i * log2(i) over a distribution on positive integers."""
    total = 0.0
    weight = 0.0
    for idx, p in dist.items():
        if not isinstance(idx, int) or idx < 1:
            raise ValueError(f"message indices must be positive integers, got {idx}")
        if p < -tol(tolerances.PROB_ATOL):
            raise ValueError("negative probability")
        total += p
        weight += p * math.log2(idx)
    if abs(total - 1.0) > tol(tolerances.PROB_ATOL):
        raise StateError(f"distribution sums to {total}")
    return weight


def tuple_log_cost(tup: Sequence[int]) -> float:
    if any(i < 1 for i in tup):
        raise ValueError(f"message tuple with nonpositive index: {tup}")
    return float(sum(math.log2(i) for i in tup))


def expected_cost(transcript: TranscriptDistribution | Mapping[tuple[int, ...], float]) -> float:
    """Expected cost: sum over tuples of p * log2(i_1 * ... * i_r)."""
    probs = transcript.probabilities() if isinstance(transcript, TranscriptDistribution) else transcript
    return float(sum(p * tuple_log_cost(t) for t, p in probs.items()))


def expected_cost_by_rounds(run: ProtocolRun) -> float:
    """Round-by-round accumulation of the expected cost from the history tree."""
    return float(
        sum(p * math.log2(hist[-1]) for hist, p in run.node_probs.items() if hist)
    )


def protocol_error(run: ProtocolRun, target: StateVector | DensityOperator) -> float:
    """Purified distance between the averaged output and the target."""
    tgt = target
    if isinstance(target, StateVector) and set(target.labels) != set(run.output_average.labels):
        raise RegisterError(
            f"target on {target.labels}, output on {run.output_average.labels}"
        )
    return purified_distance(run.output_average, tgt)


def huffman_baseline(probs: Sequence[float]) -> float:
    """Expected Huffman codeword length for the given distribution."""
    p = [float(x) for x in probs if x > 0]
    if abs(sum(p) - 1.0) > tol(tolerances.PROB_ATOL):
        raise ValueError(f"probabilities sum to {sum(p)}")
    if len(p) == 1:
        return 0.0
    heap = [(w, i) for i, w in enumerate(p)]
    heapq.heapify(heap)
    counter = len(p)
    length = 0.0
    while len(heap) > 1:
        w1, _ = heapq.heappop(heap)
        w2, _ = heapq.heappop(heap)
        # each merge puts one more bit above every leaf in the merged subtree
        length += w1 + w2
        heapq.heappush(heap, (w1 + w2, counter))
        counter += 1
    return length


# ---------------------------------------------------------------------------
# reference protocols
# ---------------------------------------------------------------------------

def _shift_clock(d: int):
    x = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        x[(j + 1) % d, j] = 1.0
    omega = np.exp(2j * np.pi / d)
    z = np.diag(omega ** np.arange(d))
    return x, z


def generalized_bell_basis(d: int) -> list[np.ndarray]:
    """d^2 orthonormal vectors (Z^z X^x (x) I)|Phi+> on a d x d space."""
    x, z = _shift_clock(d)
    phi = np.eye(d, dtype=np.complex128).reshape(-1) / np.sqrt(d)
    basis = []
    for zz in range(d):
        for xx in range(d):
            op = np.kron(np.linalg.matrix_power(z, zz) @ np.linalg.matrix_power(x, xx), np.eye(d))
            basis.append(op @ phi)
    return basis


def _herm_exp(h: np.ndarray, scale: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(1j * scale * evals)) @ evecs.conj().T


def teleportation_spec(d: int, outcome_indices: Sequence[int] | None = None) -> ProtocolSpec:
    """One-round teleportation of register C using a maximally entangled pair.

    ``outcome_indices`` optionally relabels the d^2 outcomes to arbitrary
    distinct positive message values (unused slots get zero projectors),
    which makes transcripts with heavy indices.
    """
    ea = Register("EA", d)
    eb = Register("EB", d)
    theta = maximally_entangled(ea, eb)
    bell = generalized_bell_basis(d)
    n_out = d * d
    if outcome_indices is None:
        outcome_indices = list(range(1, n_out + 1))
    if len(set(outcome_indices)) != n_out or min(outcome_indices) < 1:
        raise ValueError("outcome_indices must be distinct positive integers")
    max_idx = max(outcome_indices)
    # projector list position i-1 carries message value i
    projs = [np.zeros((n_out, n_out), dtype=np.complex128) for _ in range(max_idx)]
    corrections = {}
    phi_mat = np.eye(d, dtype=np.complex128) / np.sqrt(d)  # |Phi+> as matrix
    for pos, vec in enumerate(bell):
        idx = outcome_indices[pos]
        projs[idx - 1] = np.outer(vec, vec.conj())
        # channel C -> EB induced by this outcome: contract the projected
        # (C, EA) legs against the shared pair, then rescale to unitarity
        bmat = vec.reshape(d, d)  # (C, EA) amplitudes of the measured vector
        w = np.einsum("ca,ak->kc", bmat.conj(), phi_mat) * d
        if np.abs(w.conj().T @ w - np.eye(d)).max() > tol(tolerances.ISOMETRY_ATOL):
            raise StateError("teleportation bookkeeping produced a non-unitary channel")
        corrections[idx] = w.conj().T  # undo on EB, land in C0
    ua = np.eye(d * d, dtype=np.complex128)  # on (A=1, C, EA)
    finals = {(idx,): (ua, corr) for idx, corr in corrections.items()}
    return ProtocolSpec(
        rounds=1, a_dim=1, b_dim=1, c_dim=d, entanglement=theta,
        measurements={(): projs}, final_unitaries=finals,
        c0_dim=d, tb_dim=1,
    )


def with_final_noise(spec: ProtocolSpec, scale: float, seed: int = 7) -> ProtocolSpec:
    """Compose a seeded unitary rotation on C0 onto every final Bob unitary."""
    if scale == 0:
        return spec
    rng = np.random.default_rng(seed)
    d = spec.c0_dim
    finals = {}
    for hist, (ua, ub) in sorted(spec.final_unitaries.items()):
        h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = (h + h.conj().T) / 2
        h /= max(np.abs(np.linalg.eigvalsh(h)).max(), 1e-12)
        noise = np.kron(np.eye(spec.b_dim), np.kron(_herm_exp(h, scale), np.eye(spec.tb_dim)))
        finals[hist] = (ua, noise @ np.asarray(ub, dtype=np.complex128))
    return ProtocolSpec(
        rounds=spec.rounds, a_dim=spec.a_dim, b_dim=spec.b_dim, c_dim=spec.c_dim,
        entanglement=spec.entanglement, measurements=spec.measurements,
        final_unitaries=finals, c0_dim=spec.c0_dim, tb_dim=spec.tb_dim,
    )


def calibrate_final_noise(spec: ProtocolSpec, input_state: StateVector,
                          target: StateVector, target_eps: float, seed: int = 7,
                          atol: float = 1e-4) -> tuple[ProtocolSpec, float]:
    """Bisect the noise scale until the measured error matches target_eps.

    Returns (noised spec, measured error).  target is the ideal output
    with C relabeled to C0.
    """
    if target_eps <= 0:
        return spec, protocol_error(run_protocol(spec, input_state), target)

    def measured(scale):
        return protocol_error(run_protocol(with_final_noise(spec, scale, seed), input_state), target)

    lo, hi = 0.0, 0.05
    while measured(hi) < target_eps:
        hi *= 2
        if hi > 64:
            raise ValueError(f"cannot reach error {target_eps} by final-unitary noise")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if measured(mid) < target_eps:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    eps = measured(hi)
    if abs(eps - target_eps) > atol:
        raise ValueError(f"calibration landed at {eps}, wanted {target_eps}")
    return with_final_noise(spec, hi, seed), eps


def synthetic_spec(seed: int, rounds: int = 3, d: int = 2, ea_dim: int = 2,
                   outcomes_alice: int = 2, outcomes_bob: int = 2) -> ProtocolSpec:
    """Seeded random r-round protocol on the bipartite (R, C) family.

    Measurements and final unitaries are Haar-seeded per history; the
    protocol is valid but targets nothing in particular.  Used to
    exercise history-dependent machinery.
    """
    if rounds % 2 == 0:
        raise ValueError("rounds must be odd")
    if ea_dim % d:
        raise ValueError("EB must factor as C0 x TB, so ea_dim must be divisible by d")
    rng = np.random.default_rng(seed)
    ea = Register("EA", ea_dim)
    eb = Register("EB", ea_dim)
    theta_v = rng.standard_normal(ea_dim * ea_dim) + 1j * rng.standard_normal(ea_dim * ea_dim)
    theta = StateVector((ea, eb), theta_v / np.linalg.norm(theta_v))
    alice_d = 1 * d * ea_dim
    bob_d = 1 * ea_dim
    measurements: dict[tuple[int, ...], list[np.ndarray]] = {}
    finals: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}

    def fill(hist: tuple[int, ...]):
        k = len(hist) + 1
        if k > rounds:
            ua = random_unitary(alice_d, rng)
            ub = random_unitary(bob_d, rng)
            finals[hist] = (ua, ub)
            return
        if k % 2 == 1:
            projs = random_projective(alice_d, outcomes_alice, rng)
        else:
            projs = random_projective(bob_d, outcomes_bob, rng)
        measurements[hist] = projs
        for pos in range(len(projs)):
            fill(hist + (pos + 1,))

    fill(())
    return ProtocolSpec(
        rounds=rounds, a_dim=1, b_dim=1, c_dim=d, entanglement=theta,
        measurements=measurements, final_unitaries=finals,
        c0_dim=d, tb_dim=ea_dim // d,
    )


def transfer_input(state_rc: StateVector) -> StateVector:
    """Attach trivial A and B registers to a bipartite (R, C) state."""
    trivial = tensor(basis_state([Register("A", 1)], [0]), basis_state([Register("B", 1)], [0]))
    return tensor(state_rc, trivial)


def transfer_target(state_rc: StateVector) -> StateVector:
    """Ideal output of a transfer protocol: C relabeled to C0, plus A, B."""
    return transfer_input(state_rc).relabeled({"C": "C0"})


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _matrix_to_json(mat: np.ndarray):
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(mat, dtype=np.complex128)]


def _matrix_from_json(data) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data], dtype=np.complex128)


def _hist_key(hist: tuple[int, ...]) -> str:
    return ",".join(str(i) for i in hist)


def _hist_from_key(key: str) -> tuple[int, ...]:
    return tuple(int(t) for t in key.split(",")) if key else ()


def spec_to_json_dict(spec: ProtocolSpec) -> dict:
    ea = spec.entanglement
    return {
        "schema": 1,
        "rounds": spec.rounds,
        "a_dim": spec.a_dim,
        "b_dim": spec.b_dim,
        "c_dim": spec.c_dim,
        "ea_dim": spec.ea_dim,
        "eb_dim": spec.eb_dim,
        "c0_dim": spec.c0_dim,
        "tb_dim": spec.tb_dim,
        "entanglement": [[float(v.real), float(v.imag)] for v in ea.amplitudes],
        "measurements": {
            _hist_key(h): [_matrix_to_json(p) for p in projs]
            for h, projs in sorted(spec.measurements.items())
        },
        "final_unitaries": {
            _hist_key(h): {"alice": _matrix_to_json(ua), "bob": _matrix_to_json(ub)}
            for h, (ua, ub) in sorted(spec.final_unitaries.items())
        },
    }


def spec_from_json_dict(data: dict) -> ProtocolSpec:
    if data.get("schema") != 1:
        raise ValueError(f"unsupported protocol schema: {data.get('schema')!r}")
    required = {"rounds", "a_dim", "b_dim", "c_dim", "ea_dim", "eb_dim",
                "entanglement", "measurements", "final_unitaries"}
    missing = required - data.keys()
    if missing:
        raise ValueError(f"protocol file missing fields {sorted(missing)}")
    ea = Register("EA", int(data["ea_dim"]))
    eb = Register("EB", int(data["eb_dim"]))
    amps = np.array([complex(re, im) for re, im in data["entanglement"]])
    theta = StateVector((ea, eb), amps)
    measurements = {
        _hist_from_key(k): [_matrix_from_json(p) for p in projs]
        for k, projs in data["measurements"].items()
    }
    finals = {
        _hist_from_key(k): (_matrix_from_json(v["alice"]), _matrix_from_json(v["bob"]))
        for k, v in data["final_unitaries"].items()
    }
    return ProtocolSpec(
        rounds=int(data["rounds"]), a_dim=int(data["a_dim"]), b_dim=int(data["b_dim"]),
        c_dim=int(data["c_dim"]), entanglement=theta, measurements=measurements,
        final_unitaries=finals, c0_dim=int(data.get("c0_dim", data["c_dim"])),
        tb_dim=int(data.get("tb_dim", 1)),
    )


def save_spec(spec: ProtocolSpec, path: str | Path):
    Path(path).write_text(json.dumps(spec_to_json_dict(spec), indent=2, sort_keys=True) + "\n")


def load_spec(path: str | Path) -> ProtocolSpec:
    return spec_from_json_dict(json.loads(Path(path).read_text()))


def transcript_to_csv(transcript: TranscriptDistribution, path: str | Path):
    """Export (tuple, probability, log-cost) rows."""
    lines = ["tuple,probability,log_cost"]
    for tup in sorted(transcript.entries):
        p = transcript.entries[tup].probability
        lines.append(f"\"{':'.join(map(str, tup))}\",{p!r},{tuple_log_cost(tup)!r}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
