"""Worst-case lower-bound evaluators and the contradiction arithmetic.

Two closed-form lower bounds on worst-case quantum communication cost
for the companion states (redistribution and transfer), plus the
parameter bookkeeping that turns an assumed cheap-on-average protocol
into a contradiction with those bounds.  This module evaluates the
arithmetic chains only; the underlying one-shot bounds are consumed as
stated, not rederived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import tolerances
from .tolerances import tol

SQRT2 = math.sqrt(2.0)

# per-mode constants: the invariant beta * mu * eps^p, the mu/beta
# closed forms, the minimized error coefficient, the compiled-cost
# numerator, and the thresholds the compiled protocol must beat
MODES = {
    "redistribution": {
        "product": 128.0,
        "mu_coeff": 32.0,
        "beta_coeff": 4.0,
        "error_coeff": 8.0 * SQRT2,
        "cost_numerator": 16.0,
        "error_threshold": 1.0 / 6.0,
        "lower_coefficient": 1.0 / 6.0,
        "eps_max_base": 1.0 / 70.0,
        "eps_max_exponent": 4.0,
    },
    "transfer": {
        "product": 16.0,
        "mu_coeff": 8.0 * SQRT2,
        "beta_coeff": SQRT2,
        "error_coeff": math.sqrt(32.0 * SQRT2),
        "cost_numerator": 8.0,
        "error_threshold": 0.5,
        "lower_coefficient": 0.5,
        "eps_max_base": 0.5,
        "eps_max_exponent": 15.0,
    },
}


@dataclass(frozen=True)
class RedistLowerBound:
    bits: float
    vacuous: bool            # clamped at zero
    meets_one_sixth: bool    # bound >= (1/6) log2(d)


def redist_worst_case_lower_bound(d: float, delta: float) -> RedistLowerBound:
    """((1-3*delta)/2) log2(d) - 1.5, clamped at zero.

    The flag records whether the value reaches (1/6) log2(d), which the
    closed form guarantees for delta < 1/6 once d > 2^18.
    """
    if delta < 0 or delta >= 1:
        raise ValueError("delta must lie in [0, 1)")
    if d <= 1:
        raise ValueError("d must exceed 1")
    log_d = math.log2(d)
    raw = 0.5 * (1.0 - 3.0 * delta) * log_d - 1.5
    bits = max(raw, 0.0)
    return RedistLowerBound(
        bits=bits,
        vacuous=raw < 0,
        meets_one_sixth=bits >= log_d / 6.0 - tol(tolerances.PROB_ATOL),
    )


def transfer_worst_case_lower_bound(d: float, delta: float) -> float:
    """(1/2) log2(d) + (1/2) log2(1 - delta^2) for delta < 1/2."""
    if not 0 <= delta < 0.5:
        raise ValueError("delta must lie in [0, 1/2)")
    if d <= 1:
        raise ValueError("d must exceed 1")
    return 0.5 * math.log2(d) + 0.5 * math.log2(1.0 - delta * delta)


@dataclass(frozen=True)
class TheoremParams:
    """Parameter bookkeeping for one (mode, p, eps) contradiction check.

    status is "ok", "infeasible" (the constraints beta >= 1, mu < 1,
    8*beta*eps < 1 cannot co-hold, e.g. any p >= 1), or
    "range-violation" (eps outside the admissible interval).  The
    contradiction flag is only set when status is "ok".
    """

    mode: str
    p: float
    eps: float
    beta: float = math.nan
    mu: float = math.nan
    product: float = math.nan            # beta * mu * eps^p
    error_bound: float = math.nan
    error_threshold: float = math.nan
    cost_coefficient: float = math.nan   # compiled worst-case cost per log2(d)
    lower_coefficient: float = math.nan  # lower bound per log2(d)
    eight_beta_eps: float = math.nan
    feasible: bool = False
    in_range: bool = False
    status: str = "ok"
    contradiction: bool | None = None

    def cost_bound_bits(self, log2_d: float) -> float:
        return self.cost_coefficient * log2_d

    def lower_bound_bits(self, log2_d: float) -> float:
        return self.lower_coefficient * log2_d


def admissible_eps_max(mode: str, p: float) -> float:
    cfg = MODES[mode]
    return cfg["eps_max_base"] ** (cfg["eps_max_exponent"] / (1.0 - p))


def theorem_contradiction_check(mode: str, p: float, eps: float) -> TheoremParams:
    """Evaluate the contradiction arithmetic at one parameter point.

    Computes mu and beta from the invariant beta*mu*eps^p, the minimized
    compiled error bound, and the compiled cost coefficient; the
    contradiction flag is set iff the error bound meets the admissibility
    threshold and the cost coefficient does not exceed the lower-bound
    coefficient (within scaled tolerance).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {sorted(MODES)}, got {mode!r}")
    cfg = MODES[mode]
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if p >= 1:
        # beta >= 1 with 8*beta*eps < 1 and mu < 1 cannot co-hold
        return TheoremParams(mode=mode, p=p, eps=eps, status="infeasible")
    in_range = eps <= admissible_eps_max(mode, p) + 1e-300
    if not in_range:
        return TheoremParams(mode=mode, p=p, eps=eps, status="range-violation",
                             in_range=False)
    half = 0.5 * (1.0 - p)
    mu = cfg["mu_coeff"] * eps ** half
    beta = cfg["beta_coeff"] / eps ** (0.5 * (1.0 + p)) if eps > 0 else math.inf
    eight_beta_eps = cfg["mu_coeff"] * eps ** half  # 8*beta*eps in closed form
    product = cfg["product"] if eps == 0 else beta * mu * eps ** p
    error_bound = cfg["error_coeff"] * eps ** (half / 2.0)
    cost_coefficient = cfg["cost_numerator"] / cfg["product"]
    feasible = beta >= 1.0 and mu < 1.0 and eight_beta_eps < 1.0
    slack = tol(tolerances.PROB_ATOL)
    contradiction = bool(
        feasible
        and error_bound <= cfg["error_threshold"] + slack
        and cost_coefficient <= cfg["lower_coefficient"] + slack
    )
    return TheoremParams(
        mode=mode, p=p, eps=eps, beta=beta, mu=mu, product=product,
        error_bound=error_bound, error_threshold=cfg["error_threshold"],
        cost_coefficient=cost_coefficient,
        lower_coefficient=cfg["lower_coefficient"],
        eight_beta_eps=eight_beta_eps, feasible=feasible, in_range=True,
        status="ok", contradiction=contradiction,
    )


def compiled_error_terms(mode: str, p: float, eps: float, mu: float) -> float:
    """sqrt(mu) + (8*beta*eps/mu)^(1/2) parameterized by mu at fixed product."""
    cfg = MODES[mode]
    c = cfg["mu_coeff"] * eps ** (0.5 * (1.0 - p))
    return math.sqrt(mu) + c / math.sqrt(mu)


def mu_grid_optimal(mode: str, p: float, eps: float, grid: int = 4096) -> tuple[float, float]:
    """Locate the minimizer of the compiled error over mu in (0, 1) by a
    coarse grid followed by golden-section refinement."""
    if eps <= 0:
        raise ValueError("grid check needs eps > 0")
    lo_edge, hi_edge = 1e-9, 1.0 - 1e-9
    best_mu, best_f = None, math.inf
    for i in range(1, grid):
        mu = lo_edge + (hi_edge - lo_edge) * i / grid
        f = compiled_error_terms(mode, p, eps, mu)
        if f < best_f:
            best_mu, best_f = mu, f
    span = (hi_edge - lo_edge) / grid
    lo = max(lo_edge, best_mu - 2 * span)
    hi = min(hi_edge, best_mu + 2 * span)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = compiled_error_terms(mode, p, eps, c)
    fd = compiled_error_terms(mode, p, eps, d)
    for _ in range(200):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = compiled_error_terms(mode, p, eps, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = compiled_error_terms(mode, p, eps, d)
        if b - a < 1e-12:
            break
    mu = 0.5 * (a + b)
    return mu, compiled_error_terms(mode, p, eps, mu)
