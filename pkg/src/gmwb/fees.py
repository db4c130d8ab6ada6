"""Fair-fee secant search with progressive resolution refinement, deltas.

The guarantee fee solves V(alpha_g) = premium.  V is monotone decreasing
in the fee, so a plain secant iteration converges superlinearly; to save
time the early iterations run on coarse resolutions and only the last few
on the target resolution (the slope estimate carries across rungs).  Monte
Carlo pricers must reuse their seed across evaluations (common random
numbers) so the root is well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from .results import PricingResult

__all__ = ["SecantConfig", "FeeResult", "FeeSearchError", "fair_fee",
           "bump_delta"]


@dataclass
class SecantConfig:
    """Initial fee pair (decimal rates), value tolerance and iteration caps."""

    alpha0: float = 0.0
    alpha1: float = 0.02
    tol: float = 0.005
    max_iter: int = 12
    coarse_iters: int = 2


@dataclass
class FeeResult:
    alpha_g: float
    value: float
    evaluations: int
    converged: bool
    std_error_bp: Optional[float] = None
    last: Optional[PricingResult] = None

    @property
    def alpha_bp(self) -> float:
        return self.alpha_g * 1e4


class FeeSearchError(RuntimeError):
    """Secant failed to converge; carries the last iterate."""

    def __init__(self, message: str, result: FeeResult):
        super().__init__(message)
        self.result = result


def fair_fee(value_at: Callable[[float, int], PricingResult], premium: float,
             n_rungs: int = 1, config: SecantConfig = SecantConfig()
             ) -> FeeResult:
    """Solve V(alpha_g) = premium by refined secant iterations.

    ``value_at(alpha, rung)`` prices at the given fee on resolution rung
    (0 = coarsest, n_rungs-1 = target).  Early rungs take
    ``config.coarse_iters`` secant steps; the final rung iterates until
    |V - premium| <= tol or ``max_iter`` total evaluations.
    """
    evals = 0

    def g(alpha: float, rung: int):
        nonlocal evals, last
        last = value_at(alpha, rung)
        evals += 1
        return last.value - premium

    last: Optional[PricingResult] = None
    a_prev, a_cur = config.alpha0, config.alpha1
    g_prev = g(a_prev, 0)
    g_cur = g(a_cur, 0)
    if g_cur == g_prev:
        raise FeeSearchError(
            "flat value function; cannot start the secant iteration",
            FeeResult(a_cur, g_cur + premium, evals, False, last=last))
    slope = (g_cur - g_prev) / (a_cur - a_prev)

    for rung in range(n_rungs):
        if rung > 0:
            g_cur = g(a_cur, rung)
        limit = config.coarse_iters if rung < n_rungs - 1 else config.max_iter
        it = 0
        tol = config.tol if rung == n_rungs - 1 else 4.0 * config.tol
        while abs(g_cur) > tol and it < limit and evals < config.max_iter + 2:
            a_new = a_cur - g_cur / slope
            g_new = g(a_new, rung)
            if a_new != a_cur and g_new != g_cur:
                slope = (g_new - g_cur) / (a_new - a_cur)
            a_cur, g_cur = a_new, g_new
            it += 1

    se_bp = None
    if last is not None and last.std_error is not None and slope != 0:
        se_bp = abs(last.std_error / slope) * 1e4
    result = FeeResult(alpha_g=a_cur, value=g_cur + premium, evaluations=evals,
                       converged=abs(g_cur) <= config.tol,
                       std_error_bp=se_bp, last=last)
    if not result.converged:
        raise FeeSearchError(
            f"secant did not reach |V - P| <= {config.tol} "
            f"after {evals} evaluations", result)
    return result


def bump_delta(price_at_scale: Callable[[float], float], s0: float,
               shock: float) -> float:
    """Central-difference delta from prices at scaled initial accounts.

    ``price_at_scale(c)`` values the contract with the initial account
    (and fund) moved to c * s0; the guarantee base is unchanged.  Use
    shock = 1e-3 for static valuations and 1e-2 for dynamic ones, with
    common random numbers across the two prices for MC pricers.
    """
    v_up = price_at_scale(1.0 + shock)
    v_dn = price_at_scale(1.0 - shock)
    return (v_up - v_dn) / (2.0 * shock * s0)
