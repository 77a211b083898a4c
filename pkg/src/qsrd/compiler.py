"""Proof-pipeline transformations on executed protocols.

Stages, in order:

1. coherent representation -- replace each measurement round by a
   synthesized isometry writing the outcome into a message register in
   superposition, then verify the stacked product reproduces the tagged
   transcript superposition exactly;
2. prune -- drop low-fidelity transcript tuples, renormalize, and extract
   per-tuple completion states so the survivors factor as target x kappa;
3. rescale -- substitute the maximally-correlated companion state for the
   target inside the surviving superposition and measure the distance to
   the companion input, pulled back through the isometry adjoints;
4. truncate -- drop heavy message tuples, derive the flag-extended
   executable protocol (message value 0 = abort), and measure its
   worst-case cost, end-to-end error, and abort mass.

Residual distances are always measured on explicit vectors; the closed
bound for each stage is reported next to the measurement, never assumed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tolerances
from .hilbert import (
    DensityOperator,
    IsometryOp,
    Register,
    RegisterError,
    StateVector,
    apply_adjoint,
    apply_isometry,
    apply_unitary,
    basis_state,
    tensor,
)
from .metrics import purified_distance
from .protocol import (
    ALICE_LABELS,
    BOB_LABELS,
    ProtocolRun,
    ProtocolSpec,
    expected_cost,
    run_protocol,
    transfer_input,
    transfer_target,
    tuple_log_cost,
)
from .states import HardInstance
from .tolerances import tol


class CompilerError(RuntimeError):
    """Synthesis or pipeline failure, annotated with the offending history."""


# ---------------------------------------------------------------------------
# Uhlmann synthesis
# ---------------------------------------------------------------------------

def uhlmann_isometry(rho_pure: StateVector, sigma_pure: StateVector,
                     shared: Sequence[str]) -> IsometryOp:
    """Isometry V on sigma's non-shared registers maximizing the overlap
    with rho; the achieved fidelity equals the fidelity of the shared
    marginals.  The phase is fixed so the optimal overlap is real >= 0.
    """
    shared = sorted(shared)
    b_side = sorted(set(rho_pure.labels) - set(shared))
    c_side = sorted(set(sigma_pure.labels) - set(shared))
    if sorted(set(rho_pure.labels) & set(sigma_pure.labels) & set(shared)) != shared:
        raise RegisterError("shared registers missing from one of the states")
    b_regs = [rho_pure.register(l) for l in b_side]
    c_regs = [sigma_pure.register(l) for l in c_side]
    db = int(np.prod([r.dim for r in b_regs], dtype=np.int64)) if b_regs else 1
    dc = int(np.prod([r.dim for r in c_regs], dtype=np.int64)) if c_regs else 1
    if dc > db:
        raise RegisterError(f"source side dimension {dc} exceeds target side {db}")

    def side_matrix(state, side):
        axes = state.axes_of(shared) + state.axes_of(side)
        ds = int(np.prod([state.dims[i] for i in state.axes_of(shared)], dtype=np.int64)) if shared else 1
        return state.amplitudes.reshape(state.dims).transpose(axes).reshape(ds, -1)

    t = side_matrix(rho_pure, b_side)
    s = side_matrix(sigma_pure, c_side)
    k = t.conj().T @ s  # (db x dc); max |sum V o K| over isometries = nuclear norm
    u, _, vh = np.linalg.svd(k, full_matrices=False)
    v = (u @ vh).conj()
    return IsometryOp(tuple(c_regs), tuple(b_regs), v)


def uhlmann_completion(tau: StateVector, target: StateVector) -> StateVector:
    """Best pure completion kappa with tau ~ target x kappa.

    kappa lives on tau's registers outside the target; the achieved
    product fidelity equals F(target, tau marginal).
    """
    comp = sorted(set(tau.labels) - set(target.labels))
    if not comp:
        raise RegisterError("tau has no registers beyond the target")
    comp_regs = [tau.register(l) for l in comp]
    seed = basis_state(comp_regs, [0] * len(comp_regs))
    v = uhlmann_isometry(tau, tensor(target, seed), shared=list(target.labels))
    return apply_isometry(v, seed)


# ---------------------------------------------------------------------------
# stacked isometries and the coherent representation
# ---------------------------------------------------------------------------

def _unflatten(flat: int, dims: Sequence[int]) -> tuple[int, ...]:
    vals = []
    for d in reversed(dims):
        vals.append(flat % d)
        flat //= d
    return tuple(reversed(vals))


def stacked_isometry(party_in: Sequence[Register], party_out: Sequence[Register],
                     controls: Sequence[Register],
                     blocks: Mapping[tuple[int, ...], np.ndarray],
                     pad: np.ndarray) -> IsometryOp:
    """Block-diagonal isometry sum_v |v><v| (x) B_v over control values.

    Control values without a block entry get ``pad``.  Matrix layout is
    row-major [party..., controls...] on both sides.
    """
    c_dims = [c.dim for c in controls]
    n_c = int(np.prod(c_dims, dtype=np.int64)) if controls else 1
    dpi = int(np.prod([r.dim for r in party_in], dtype=np.int64))
    dpo = int(np.prod([r.dim for r in party_out], dtype=np.int64))
    mat = np.zeros((dpo * n_c, dpi * n_c), dtype=np.complex128)
    view = mat.reshape(dpo, n_c, dpi, n_c)
    for flat in range(n_c):
        vals = _unflatten(flat, c_dims) if controls else ()
        view[:, flat, :, flat] = blocks.get(vals, pad)
    return IsometryOp(tuple(party_in) + tuple(controls), tuple(party_out) + tuple(controls), mat)


def _pad_block(party_dim: int, m_dim: int) -> np.ndarray:
    """Isometry P -> P (x) M placing the message register in the abort slot."""
    pad = np.zeros((party_dim * m_dim, party_dim), dtype=np.complex128)
    for p in range(party_dim):
        pad[p * m_dim, p] = 1.0
    return pad


@dataclass
class CoherentRepresentation:
    """Stacked round isometries with message registers, plus the check data."""

    rounds: int
    message_dims: list[int]
    message_regs: list[Register]
    round_blocks: list[dict[tuple[int, ...], np.ndarray]] = field(repr=False)
    round_isometries: list[IsometryOp] = field(repr=False)
    alice_final_blocks: dict[tuple[int, ...], np.ndarray] = field(repr=False)
    bob_final_blocks: dict[tuple[int, ...], np.ndarray] = field(repr=False)
    alice_final: IsometryOp = field(repr=False)
    bob_final: IsometryOp = field(repr=False)
    tagged_transcript: StateVector = field(repr=False)
    residual: float = 0.0
    spec: ProtocolSpec | None = field(repr=False, default=None)

    def pushforward(self, state: StateVector) -> StateVector:
        for iso in self.round_isometries:
            state = apply_isometry(iso, state)
        state = apply_isometry(self.bob_final, state)
        state = apply_isometry(self.alice_final, state)
        return state

    def pullback(self, state: StateVector) -> StateVector:
        state = apply_adjoint(self.alice_final, state)
        state = apply_adjoint(self.bob_final, state)
        for iso in reversed(self.round_isometries):
            state = apply_adjoint(iso, state)
        return state


def tagged_superposition(weights: Mapping[tuple[int, ...], float],
                         states: Mapping[tuple[int, ...], StateVector],
                         message_regs: Sequence[Register]) -> StateVector:
    """sum_t sqrt(w_t) |state_t> |t_r>...|t_1> over message registers."""
    acc = None
    for tup in sorted(weights):
        w = weights[tup]
        if w <= 0:
            continue
        term = tensor(states[tup], basis_state(message_regs, list(tup))).scaled(math.sqrt(w))
        acc = term if acc is None else acc.add(term)
    if acc is None:
        raise CompilerError("empty superposition: no tuples carry weight")
    return acc


def coherent_representation(run: ProtocolRun) -> CoherentRepresentation:
    """Synthesize the per-round isometries and verify the stacked identity.

    Each per-history block comes from an Uhlmann synthesis between the
    pre-round state and the square-root-weighted superposition of its
    post-round branches; the mixture property of measurements makes the
    optimal fidelity 1, so the blocks reproduce the branches exactly.
    """
    spec = run.spec
    r = spec.rounds
    tuples = list(run.transcript.entries)
    message_dims = [max(t[k] for t in tuples) + 1 for k in range(r)]
    message_regs = [Register(f"M{k + 1}", message_dims[k]) for k in range(r)]

    round_blocks: list[dict[tuple[int, ...], np.ndarray]] = []
    round_isos: list[IsometryOp] = []
    for k in range(1, r + 1):
        party = sorted(spec.acting_labels(k))
        blocks: dict[tuple[int, ...], np.ndarray] = {}
        hists = sorted({t[: k - 1] for t in tuples})
        for hist in hists:
            source = run.node_states[hist]
            children = {}
            weights = {}
            for child_hist in run.node_states:
                if len(child_hist) == k and child_hist[: k - 1] == hist:
                    i_k = child_hist[-1]
                    children[(i_k,)] = run.node_states[child_hist]
                    weights[(i_k,)] = run.node_probs[child_hist] / run.node_probs[hist]
            target = tagged_superposition(weights, children, [message_regs[k - 1]])
            spectators = sorted(set(source.labels) - set(party))
            iso = uhlmann_isometry(target, source, shared=spectators)
            achieved = apply_isometry(iso, source)
            gap = float(np.linalg.norm(achieved.amplitudes - target.amplitudes))
            if gap > tol(1e-6):
                raise CompilerError(f"synthesis failure at history {hist}: residual {gap}")
            blocks[hist] = iso.matrix
        party_regs = [run.initial_state.register(l) for l in party]
        dp = int(np.prod([p.dim for p in party_regs], dtype=np.int64))
        pad = _pad_block(dp, message_dims[k - 1])
        iso_k = stacked_isometry(
            party_regs, party_regs + [message_regs[k - 1]], message_regs[: k - 1],
            blocks, pad,
        )
        round_blocks.append(blocks)
        round_isos.append(iso_k)

    alice_regs = [run.initial_state.register(l) for l in sorted(ALICE_LABELS)]
    bob_regs = [run.initial_state.register(l) for l in sorted(BOB_LABELS)]
    bob_out = [Register("B", spec.b_dim), Register("C0", spec.c0_dim), Register("TB", spec.tb_dim)]
    alice_blocks = {h: np.asarray(ua, dtype=np.complex128)
                    for h, (ua, _) in spec.final_unitaries.items()}
    bob_blocks = {h: np.asarray(ub, dtype=np.complex128)
                  for h, (_, ub) in spec.final_unitaries.items()}
    da = int(np.prod([p.dim for p in alice_regs], dtype=np.int64))
    db = int(np.prod([p.dim for p in bob_regs], dtype=np.int64))
    alice_final = stacked_isometry(alice_regs, alice_regs, message_regs, alice_blocks, np.eye(da))
    bob_final = stacked_isometry(bob_regs, bob_out, message_regs, bob_blocks, np.eye(db))

    tagged = tagged_superposition(
        run.transcript.probabilities(),
        {t: e.post_state for t, e in run.transcript.entries.items()},
        message_regs,
    )
    cohrep = CoherentRepresentation(
        rounds=r, message_dims=message_dims, message_regs=message_regs,
        round_blocks=round_blocks, round_isometries=round_isos,
        alice_final_blocks=alice_blocks, bob_final_blocks=bob_blocks,
        alice_final=alice_final, bob_final=bob_final,
        tagged_transcript=tagged, spec=spec,
    )
    pushed = cohrep.pushforward(run.initial_state)
    residual = float(np.linalg.norm(pushed.amplitudes - tagged.amplitudes))
    cohrep.residual = residual
    if residual > tol(1e-8):
        raise CompilerError(f"stacked reconstruction residual {residual} exceeds tolerance")
    return cohrep


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

@dataclass
class PruneResult:
    eps: float
    fid_sq: dict[tuple[int, ...], float]
    good: set[tuple[int, ...]]
    bad: set[tuple[int, ...]]
    p_prime: dict[tuple[int, ...], float]
    kappas: dict[tuple[int, ...], StateVector] = field(repr=False)
    weight_prime: float = 0.0
    weight_bound: float = 0.0
    good_mass: float = 0.0
    residual: float = 0.0
    residual_bound: float = 0.0
    tagged_full: StateVector = field(repr=False, default=None)
    tagged_good: StateVector = field(repr=False, default=None)


def split_by_fidelity(entries: Mapping[tuple[int, ...], tuple[float, float]], eps: float):
    """Arithmetic core of the prune: classify tuples by squared fidelity.

    ``entries`` maps tuple -> (probability, squared fidelity with target).
    Returns (good set, bad set, renormalized distribution, good mass).
    """
    guard = tol(tolerances.BRANCH_PRUNE)
    good, bad = set(), set()
    for tup, (p, fsq) in entries.items():
        (bad if fsq <= 1.0 - eps - guard else good).add(tup)
    good_mass = sum(entries[t][0] for t in good)
    if good_mass <= 0:
        raise CompilerError("no tuples survive the fidelity cut; error too large")
    p_prime = {t: entries[t][0] / good_mass for t in good}
    return good, bad, p_prime, good_mass


def prune_bad_tuples(run: ProtocolRun, cohrep: CoherentRepresentation,
                     target: StateVector, eps: float) -> PruneResult:
    """Restrict the tagged transcript to high-fidelity tuples.

    The measured residual compares the full tagged superposition with the
    renormalized survivors in product form target x kappa; the closed
    bound for it is 2*sqrt(eps).
    """
    transcript = run.transcript
    fid_sq = {}
    for tup, entry in transcript.entries.items():
        marg = entry.post_state.marginal(list(target.labels))
        fid_sq[tup] = float(
            np.vdot(target.amplitudes, marg.matrix @ target.amplitudes).real
        )
    entries = {t: (transcript.entries[t].probability, fid_sq[t]) for t in fid_sq}
    good, bad, p_prime, good_mass = split_by_fidelity(entries, eps)
    kappas = {t: uhlmann_completion(transcript.entries[t].post_state, target) for t in good}
    weight_prime = expected_cost(p_prime)
    cost = expected_cost(transcript)
    products = {t: tensor(target, kappas[t]) for t in good}
    tagged_good = tagged_superposition(p_prime, products, cohrep.message_regs)
    overlap = abs(np.vdot(cohrep.tagged_transcript.amplitudes, tagged_good.amplitudes))
    residual = math.sqrt(max(1.0 - overlap * overlap, 0.0))
    return PruneResult(
        eps=eps, fid_sq=fid_sq, good=good, bad=bad, p_prime=p_prime, kappas=kappas,
        weight_prime=weight_prime,
        weight_bound=cost / (1.0 - eps) if eps < 1 else math.inf,
        good_mass=good_mass, residual=residual,
        residual_bound=2.0 * math.sqrt(max(eps, 0.0)),
        tagged_full=cohrep.tagged_transcript, tagged_good=tagged_good,
    )


# ---------------------------------------------------------------------------
# companion-state rescaling
# ---------------------------------------------------------------------------

@dataclass
class RescaleResult:
    residual: float
    bound: float
    alpha: float  # e_d * d, the subnormalization of the flattening map
    products: dict[tuple[int, ...], StateVector] = field(repr=False, default=None)
    tagged_omega: StateVector = field(repr=False, default=None)
    pulled_back: StateVector = field(repr=False, default=None)


def rescale_to_omega(prune: PruneResult, cohrep: CoherentRepresentation,
                     omega_input: StateVector, omega_target: StateVector,
                     theta: StateVector, alpha: float) -> RescaleResult:
    """Swap the companion state into the surviving superposition.

    The survivor weights are untouched; the measured residual is the
    purified distance between companion-input x entanglement and the
    adjoint pullback of the substituted superposition, with closed bound
    sqrt(8 eps / alpha).
    """
    products = {t: tensor(omega_target, prune.kappas[t]) for t in prune.good}
    tagged_omega = tagged_superposition(prune.p_prime, products, cohrep.message_regs)
    pulled = cohrep.pullback(tagged_omega)
    reference = tensor(omega_input, theta)
    residual = purified_distance(reference, pulled)
    bound = math.sqrt(8.0 * prune.eps / alpha) if alpha > 0 else math.inf
    return RescaleResult(residual=residual, bound=bound, alpha=alpha, products=products,
                         tagged_omega=tagged_omega, pulled_back=pulled)


# ---------------------------------------------------------------------------
# truncation and the compiled (flag-extended) protocol
# ---------------------------------------------------------------------------

@dataclass
class TruncationSplit:
    threshold_bits: float       # tuples with log-cost strictly above are dropped
    surviving: set[tuple[int, ...]]
    heavy: set[tuple[int, ...]]
    heavy_mass: float
    q: dict[tuple[int, ...], float]
    worst_case_cost: float      # max over survivors of log2 prod (i_k + 1)
    cost_bound: float           # 2C / ((1 - eps) mu)


def truncation_split(p_prime: Mapping[tuple[int, ...], float], cost: float,
                     eps: float, mu: float) -> TruncationSplit:
    """Drop tuples with index product above 2^(C/((1-eps) mu)) and renormalize."""
    if not 0.0 < mu < 1.0:
        raise ValueError(
            "truncation requires 0 < mu < 1 (expected-to-worst-case compilation)"
        )
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    threshold = cost / ((1.0 - eps) * mu)
    heavy = {t for t in p_prime if tuple_log_cost(t) > threshold + tol(tolerances.BRANCH_PRUNE)}
    surviving = set(p_prime) - heavy
    heavy_mass = sum(p_prime[t] for t in heavy)
    if not surviving:
        raise CompilerError("no tuples below the truncation threshold; mu too small")
    light_mass = 1.0 - heavy_mass
    q = {t: p_prime[t] / light_mass for t in surviving}
    worst = max(sum(math.log2(i + 1) for i in t) for t in surviving)
    return TruncationSplit(
        threshold_bits=threshold, surviving=surviving, heavy=heavy,
        heavy_mass=heavy_mass, q=q, worst_case_cost=worst,
        cost_bound=2.0 * cost / ((1.0 - eps) * mu),
    )


@dataclass
class CompiledProtocol:
    """Flag-extended executable protocol (message value 0 = abort)."""

    cohrep: CoherentRepresentation = field(repr=False)
    split: TruncationSplit
    prefix_sets: list[set[tuple[int, ...]]]  # T_k, k = 1..r
    error_bound: float
    pi_input: StateVector = field(repr=False, default=None)  # reconstructed input

    @property
    def worst_case_cost(self) -> float:
        return self.split.worst_case_cost

    def flag_unitary(self, k: int) -> np.ndarray:
        """Permutation W_k on [view controls, M_k, M'_k] copying survivors.

        For a view history (v_1..v_{k-1}, i) in the surviving prefix set,
        the copy slot swaps 0 <-> i; every other basis vector is fixed.
        """
        m_dims = self.cohrep.message_dims
        view_dims = [m_dims[j - 1] for j in range(1, k)]
        dims = view_dims + [m_dims[k - 1], m_dims[k - 1]]
        n = int(np.prod(dims, dtype=np.int64))
        w = np.zeros((n, n))
        for flat in range(n):
            vals = _unflatten(flat, dims)
            *view, i, x = vals
            hist = tuple(view) + (i,)
            if all(v >= 1 for v in hist) and hist in self.prefix_sets[k - 1]:
                if x == 0:
                    swapped = vals[:-1] + (i,)
                elif x == i:
                    swapped = vals[:-1] + (0,)
                else:
                    swapped = vals
            else:
                swapped = vals
            tgt = 0
            for v, d in zip(swapped, dims):
                tgt = tgt * d + v
            w[tgt, flat] = 1.0
        return w

    def execute(self, input_state: StateVector) -> tuple[DensityOperator, float]:
        """Run the flag-extended protocol; returns (output, abort probability).

        A party receiving the flag value 0 performs no further operation;
        its registers are carried along (Bob's EB is reshaped into C0, TB
        at the end so the output space is uniform across branches).
        """
        spec = self.cohrep.spec
        m_regs = self.cohrep.message_regs
        m_dims = self.cohrep.message_dims
        r = self.cohrep.rounds
        copy_regs = [Register(f"M{k}p", m_dims[k - 1]) for k in range(1, r + 1)]
        state = input_state if abs(input_state.norm() - 1.0) < tol(tolerances.NORM_ATOL) \
            else input_state.normalized()
        for k in range(1, r + 1):
            party = sorted(spec.acting_labels(k))
            party_regs = [state.register(l) for l in party]
            dp = int(np.prod([p.dim for p in party_regs], dtype=np.int64))
            view_regs = [m_regs[j - 1] if _own_register(j, k) else copy_regs[j - 1]
                         for j in range(1, k)]
            pad = _pad_block(dp, m_dims[k - 1])
            iso = stacked_isometry(party_regs, party_regs + [m_regs[k - 1]], view_regs,
                                   self.cohrep.round_blocks[k - 1], pad)
            state = apply_isometry(iso, state)
            state = tensor(state, basis_state([copy_regs[k - 1]], [0]))
            w = self.flag_unitary(k)
            w_labels = [v.label for v in view_regs] + [m_regs[k - 1].label, copy_regs[k - 1].label]
            state = apply_unitary(state, w, w_labels)
        # final local unitaries, each controlled on the acting party's view
        bob_view = [copy_regs[j - 1] if _own_register(j, 1) else m_regs[j - 1]
                    for j in range(1, r + 1)]
        alice_view = [m_regs[j - 1] if _own_register(j, 1) else copy_regs[j - 1]
                      for j in range(1, r + 1)]
        bob_regs = [state.register(l) for l in sorted(BOB_LABELS)]
        bob_out = [Register("B", spec.b_dim), Register("C0", spec.c0_dim),
                   Register("TB", spec.tb_dim)]
        db = int(np.prod([p.dim for p in bob_regs], dtype=np.int64))
        bob_iso = stacked_isometry(bob_regs, bob_out, bob_view,
                                   self.cohrep.bob_final_blocks, np.eye(db))
        state = apply_isometry(bob_iso, state)
        alice_regs = [state.register(l) for l in sorted(ALICE_LABELS)]
        da = int(np.prod([p.dim for p in alice_regs], dtype=np.int64))
        alice_iso = stacked_isometry(alice_regs, alice_regs, alice_view,
                                     self.cohrep.alice_final_blocks, np.eye(da))
        state = apply_isometry(alice_iso, state)
        # abort probability: any copy register left in the flag slot
        flags = state.axes_of([c.label for c in copy_regs])
        survive = np.abs(state.amplitudes.reshape(state.dims)) ** 2
        for ax in sorted(flags, reverse=True):
            sl = [slice(None)] * survive.ndim
            sl[ax] = slice(1, None)
            survive = survive[tuple(sl)].sum(axis=ax)
        abort_prob = max(1.0 - float(np.sum(survive)), 0.0)
        message_labels = {reg.label for reg in m_regs} | {reg.label for reg in copy_regs}
        keep = [l for l in state.labels if l not in ("C", "EA", "TB") and l not in message_labels]
        return state.marginal(keep), abort_prob


def _own_register(j: int, k: int) -> bool:
    """Does round-k's acting party hold the original round-j message register?"""
    return (j % 2) == (k % 2)


def truncate_heavy_tuples(prune: PruneResult, rescale: RescaleResult,
                          cohrep: CoherentRepresentation, mu: float, cost: float,
                          eps: float) -> CompiledProtocol:
    """Drop heavy tuples and assemble the flag-extended protocol.

    Also reconstructs the ideal input pi (the adjoint pullback of the
    renormalized surviving superposition), on which the compiled protocol
    should never abort.
    """
    split = truncation_split(prune.p_prime, cost, eps, mu)
    r = cohrep.rounds
    prefix_sets: list[set[tuple[int, ...]]] = [set() for _ in range(r)]
    for t in split.surviving:
        for k in range(1, r + 1):
            prefix_sets[k - 1].add(t[:k])
    tagged_q = tagged_superposition(split.q, rescale.products, cohrep.message_regs)
    pi = cohrep.pullback(tagged_q)
    return CompiledProtocol(
        cohrep=cohrep, split=split, prefix_sets=prefix_sets,
        error_bound=rescale.bound + math.sqrt(mu), pi_input=pi,
    )


# ---------------------------------------------------------------------------
# end-to-end pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    family: str
    mu: float
    measured_eps: float
    cost: float
    run: ProtocolRun = field(repr=False, default=None)
    cohrep: CoherentRepresentation = field(repr=False, default=None)
    prune: PruneResult = field(repr=False, default=None)
    rescale: RescaleResult = field(repr=False, default=None)
    compiled: CompiledProtocol = field(repr=False, default=None)
    compiled_error: float = 0.0
    abort_on_pi: float = 0.0
    abort_on_omega: float = 0.0
    pi_norm: float = 1.0
    report: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(stage["pass"] for stage in self.report["stages"])


def instance_states(inst: HardInstance, family: str):
    """(input, target, companion input, companion target) for a family."""
    if family == "transfer":
        return (
            transfer_input(inst.psi_tilde),
            transfer_target(inst.psi_tilde),
            transfer_input(inst.omega_prime),
            transfer_target(inst.omega_prime),
        )
    if family == "redistribution":
        return (
            inst.psi,
            inst.psi.relabeled({"C": "C0"}),
            inst.omega,
            inst.omega.relabeled({"C": "C0"}),
        )
    raise ValueError(f"unknown family {family!r}")


def run_pipeline(spec: ProtocolSpec, inst: HardInstance, mu: float,
                 family: str = "transfer") -> PipelineResult:
    """Execute every stage on one protocol/instance pair and report
    measured-vs-bound for each, with a pass flag per stage."""
    input_state, target, omega_input, omega_target = instance_states(inst, family)
    run = run_protocol(spec, input_state)
    eps = purified_distance(run.output_average, target)
    cost = expected_cost(run.transcript)
    cohrep = coherent_representation(run)
    prune = prune_bad_tuples(run, cohrep, target, eps)
    alpha = inst.rescale_alpha()
    rescale = rescale_to_omega(prune, cohrep, omega_input, omega_target,
                               spec.entanglement, alpha)
    compiled = truncate_heavy_tuples(prune, rescale, cohrep, mu, cost, eps)
    output, abort_omega = compiled.execute(tensor(omega_input, spec.entanglement))
    compiled_error = purified_distance(output, omega_target)
    pi_norm = compiled.pi_input.norm()
    _, abort_pi = compiled.execute(compiled.pi_input)
    slack = tol(tolerances.FACT_SLACK)
    stages = [
        {
            "stage": "prune",
            "measured": prune.residual,
            "bound": prune.residual_bound,
            "pass": prune.residual <= prune.residual_bound + slack,
        },
        {
            "stage": "prune-weight",
            "measured": prune.weight_prime,
            "bound": prune.weight_bound,
            "pass": prune.weight_prime <= prune.weight_bound + tol(tolerances.PROB_ATOL),
        },
        {
            "stage": "prune-good-mass",
            "measured": prune.good_mass,
            "bound": 1.0 - eps,  # lower bound
            "pass": prune.good_mass >= 1.0 - eps - tol(tolerances.PROB_ATOL),
        },
        {
            "stage": "rescale",
            "measured": rescale.residual,
            "bound": rescale.bound,
            "pass": rescale.residual <= rescale.bound + slack,
        },
        {
            "stage": "truncate-heavy-mass",
            "measured": compiled.split.heavy_mass,
            "bound": mu,
            "pass": compiled.split.heavy_mass < mu + tol(tolerances.PROB_ATOL),
        },
        {
            "stage": "compiled-error",
            "measured": compiled_error,
            "bound": compiled.error_bound,
            "pass": compiled_error <= compiled.error_bound + slack,
        },
        {
            "stage": "compiled-cost",
            "measured": compiled.worst_case_cost,
            "bound": compiled.split.cost_bound,
            "pass": compiled.worst_case_cost <= compiled.split.cost_bound + tol(tolerances.PROB_ATOL),
        },
    ]
    report = {
        "schema": 1,
        "family": family,
        "instance": inst.descriptor(),
        "mu": mu,
        "measured_eps": eps,
        "expected_cost": cost,
        "coherent_residual": cohrep.residual,
        "tuples": len(run.transcript.entries),
        "good_tuples": len(prune.good),
        "bad_tuples": len(prune.bad),
        "surviving_tuples": len(compiled.split.surviving),
        "heavy_tuples": len(compiled.split.heavy),
        "threshold_bits": compiled.split.threshold_bits,
        "worst_case_cost": compiled.worst_case_cost,
        "abort_probability_on_omega": abort_omega,
        "abort_probability_on_reconstructed_input": abort_pi,
        "reconstructed_input_norm": pi_norm,
        "stages": stages,
    }
    return PipelineResult(
        family=family, mu=mu, measured_eps=eps, cost=cost, run=run, cohrep=cohrep,
        prune=prune, rescale=rescale, compiled=compiled,
        compiled_error=compiled_error, abort_on_pi=abort_pi,
        abort_on_omega=abort_omega, pi_norm=pi_norm, report=report,
    )


def save_report(result: PipelineResult, path: str | Path):
    Path(path).write_text(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
