"""Constructors for the hard-instance state family.

The family is parameterized by (d, d_a, beta) and a basis seed: a
concentrated eigenvalue profile with smallest mass 1/(d*beta), a shared
4-party state psi on registers RA, RP, B, C, A, its maximally-correlated
companion omega, and the bipartite transfer pair (psi_tilde, omega_prime)
on R, C.  Instances are reproduced bit-exactly from {d, d_a, beta, seed}.

Register conventions: RA and A have dimension d_a; RP, B, C (and R for
the bipartite pair) have dimension d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tolerances
from .hilbert import (
    DensityOperator,
    Register,
    StateError,
    StateVector,
    random_unitary,
)
from .tolerances import tol

MAX_STATE_DIM = 4096  # dense desk-scale guard on d_a^2 * d^3


def low_entropy_distribution(d: int, beta: float) -> np.ndarray:
    """Eigenvalue profile with e_2 = ... = e_d = 1/(d*beta) and the rest on e_1.

    For beta up to about log2(d)/2 the Shannon entropy stays below
    2*log2(d)/beta; the tests pin that bound at the shipped parameter sets.
    """
    if beta < 1:
        raise ValueError(f"beta must be >= 1, got {beta}")
    if d <= 1:
        raise ValueError(f"d must exceed 1, got {d}")
    tail = 1.0 / (d * beta)
    e = np.full(d, tail, dtype=float)
    e[0] = 1.0 - (d - 1) * tail
    if e[0] < tail - 1e-15:
        raise ValueError("profile not sorted; beta too small for this d")
    return e


@dataclass(frozen=True)
class HardInstance:
    d: int
    d_a: int
    beta: float
    seed: int
    shared_bases: bool
    eigenvalues: np.ndarray = field(repr=False)
    psi: StateVector = field(repr=False)          # on RA, RP, B, C, A
    omega: StateVector = field(repr=False)        # on RA, RP, B, C, A
    psi_tilde: StateVector = field(repr=False)    # on R, C
    omega_prime: StateVector = field(repr=False)  # on R, C

    @property
    def e_min(self) -> float:
        return float(self.eigenvalues[-1])

    def rescale_alpha(self) -> float:
        """The subnormalization factor e_d * d = 1/beta of the flattening map."""
        return self.e_min * self.d

    def descriptor(self) -> dict:
        return {
            "schema": 1,
            "d": self.d,
            "d_a": self.d_a,
            "beta": self.beta,
            "seed": self.seed,
            "shared_bases": self.shared_bases,
        }


def _component_vectors(d: int, d_a: int, rng: np.random.Generator, shared_bases: bool):
    """Per-block bases v_j(a), w_j(a) (columns of Haar unitaries)."""
    if shared_bases:
        v = random_unitary(d, rng)
        w = random_unitary(d, rng)
        return [v] * d_a, [w] * d_a
    vs = [random_unitary(d, rng) for _ in range(d_a)]
    ws = [random_unitary(d, rng) for _ in range(d_a)]
    return vs, ws


def build_instance(d: int, d_a: int, beta: float, seed: int,
                   shared_bases: bool = True) -> HardInstance:
    """Construct the (d, d_a, beta) instance from a named seed.

    With shared_bases (default) the B/C bases are block-independent, which
    keeps I(R:BC) of the companion state exactly 2*log2(d); per-block Haar
    bases (shared_bases=False) exercise the fully general construction.
    """
    if d_a < 1:
        raise ValueError("d_a must be >= 1")
    total = d_a * d_a * d * d * d
    if total > MAX_STATE_DIM:
        raise StateError(f"total dimension {total} exceeds the dense guard {MAX_STATE_DIM}")
    e = low_entropy_distribution(d, beta)
    rng = np.random.default_rng(seed)
    vs, ws = _component_vectors(d, d_a, rng, shared_bases)
    w_tilde = random_unitary(d, rng)

    reg_ra = Register("RA", d_a)
    reg_rp = Register("RP", d)
    reg_b = Register("B", d)
    reg_c = Register("C", d)
    reg_a = Register("A", d_a)

    sqrt_e = np.sqrt(e)
    psi_amps = np.zeros((d_a, d, d, d, d_a), dtype=np.complex128)
    omega_amps = np.zeros_like(psi_amps)
    for a in range(d_a):
        # sum_j c_j |u_j>_RP |v_j(a)>_B |w_j(a)>_C  with u_j computational
        block_psi = np.einsum("j,bj,cj->jbc", sqrt_e, vs[a], ws[a])
        block_omega = np.einsum("j,bj,cj->jbc", np.full(d, 1 / np.sqrt(d)), vs[a], ws[a])
        psi_amps[a, :, :, :, a] = block_psi / np.sqrt(d_a)
        omega_amps[a, :, :, :, a] = block_omega / np.sqrt(d_a)
    order = (reg_ra, reg_rp, reg_b, reg_c, reg_a)
    psi = StateVector(order, psi_amps.reshape(-1))
    omega = StateVector(order, omega_amps.reshape(-1))

    reg_r = Register("R", d)
    tilde_amps = np.einsum("j,cj->jc", sqrt_e, w_tilde).reshape(-1)
    prime_amps = np.einsum("j,cj->jc", np.full(d, 1 / np.sqrt(d)), w_tilde).reshape(-1)
    psi_tilde = StateVector((reg_r, reg_c), tilde_amps)
    omega_prime = StateVector((reg_r, reg_c), prime_amps)

    inst = HardInstance(
        d=d, d_a=d_a, beta=float(beta), seed=seed, shared_bases=shared_bases,
        eigenvalues=e, psi=psi, omega=omega,
        psi_tilde=psi_tilde, omega_prime=omega_prime,
    )
    _check_flatten_relation(inst)
    return inst


def inverse_sqrt_psd(mat: np.ndarray) -> np.ndarray:
    """Inverse square root on the support of a PSD matrix."""
    evals, evecs = np.linalg.eigh(mat)
    cut = max(evals.max(), 1.0) * tol(tolerances.SUPPORT_RTOL)
    inv = np.where(evals > cut, 1.0 / np.sqrt(np.clip(evals, cut, None)), 0.0)
    return (evecs * inv) @ evecs.conj().T


def flatten_state(state: StateVector, r_labels, scale: float) -> StateVector:
    """Apply rho_R^{-1/2} / scale to ``state`` on its R registers.

    With scale sqrt(d_a*d) this maps psi to omega; with sqrt(d) it maps
    psi_tilde to omega_prime.
    """
    from .hilbert import _apply_matrix  # raw (non-isometric) kernel plumbing

    r_labels = sorted(r_labels)
    rho_r = state.marginal(r_labels)
    op = inverse_sqrt_psd(rho_r.matrix_in_order(r_labels)) / scale
    regs = [state.register(l) for l in r_labels]
    return _apply_matrix(state, op, r_labels, regs)


def _check_flatten_relation(inst: HardInstance):
    got = flatten_state(inst.psi, ["RA", "RP"], np.sqrt(inst.d_a * inst.d))
    resid = np.abs(got.amplitudes - inst.omega.amplitudes).max()
    if resid > tol(tolerances.NORM_ATOL):
        raise StateError(f"companion-state relation violated: residual {resid}")
    got2 = flatten_state(inst.psi_tilde, ["R"], np.sqrt(inst.d))
    resid2 = np.abs(got2.amplitudes - inst.omega_prime.amplitudes).max()
    if resid2 > tol(tolerances.NORM_ATOL):
        raise StateError(f"bipartite companion relation violated: residual {resid2}")


def flattening_kraus(inst: HardInstance, bipartite: bool = False) -> np.ndarray:
    """Single Kraus operator sqrt(e_d/d_a) * psi_R^{-1/2} on the R registers.

    Trace non-increasing since psi_R^{-1} <= (d_a/e_d) * I.  For the
    bipartite pair the prefactor is sqrt(e_d) on register R.
    """
    if bipartite:
        rho_r = inst.psi_tilde.marginal(["R"])
        return np.sqrt(inst.e_min) * inverse_sqrt_psd(rho_r.matrix)
    rho_r = inst.psi.marginal(["RA", "RP"])
    return np.sqrt(inst.e_min / inst.d_a) * inverse_sqrt_psd(rho_r.matrix_in_order(["RA", "RP"]))


def save_instance(inst: HardInstance, path: str | Path):
    Path(path).write_text(json.dumps(inst.descriptor(), indent=2, sort_keys=True) + "\n")


def load_instance(path: str | Path) -> HardInstance:
    data = json.loads(Path(path).read_text())
    if data.get("schema") != 1:
        raise ValueError(f"unsupported instance schema: {data.get('schema')!r}")
    for key in ("d", "d_a", "beta", "seed"):
        if key not in data:
            raise ValueError(f"instance file missing field {key!r}")
    return build_instance(
        d=int(data["d"]), d_a=int(data["d_a"]), beta=float(data["beta"]),
        seed=int(data["seed"]), shared_bases=bool(data.get("shared_bases", True)),
    )


def omega_rbc(inst: HardInstance) -> DensityOperator:
    """Marginal of the companion state on RA, RP, B, C."""
    return inst.omega.marginal(["RA", "RP", "B", "C"])
