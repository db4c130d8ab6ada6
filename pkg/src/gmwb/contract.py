"""GMWB contract mechanics: fee accrual, event-time transitions, payoffs.

Two product variants are supported.  The "CF" contract tracks an account
value A and a benefit base B, both starting at the premium; withdrawals
W in [0, B] deplete B one-for-one, amounts above the guaranteed G incur a
proportional penalty kappa, and the final payoff after the last withdrawal
is max(A, (1-kappa) B).  The "YD" contract fixes a guaranteed withdrawal G
at the start of the payout phase (with an optional deferred period and
roll-up floor) and only allows withdrawing G or surrendering everything.

All functions are pure; event times are referenced by integer index so
"just before / just after" states are explicit values, never time offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .models import FeeStructure

__all__ = [
    "CFContractSpec",
    "YDContractSpec",
    "accrue",
    "cashflow_cf",
    "apply_withdrawal_cf",
    "final_value_cf",
    "apply_withdrawal_yd",
    "surrender_payoff_yd",
    "reset_at_t1_yd",
    "similarity_scale",
]


@dataclass(frozen=True)
class CFContractSpec:
    """Constant-withdrawal GMWB with penalty on excess withdrawals.

    Event times are t_i = i / wf for i = 1..n_events with
    n_events = t2 * wf, and the per-event guaranteed amount is
    G = premium / n_events (so G * n_events = premium exactly).
    """

    premium: float
    t2: float
    wf: int
    kappa: float
    fees: FeeStructure = field(default_factory=FeeStructure)

    def __post_init__(self):
        if self.premium <= 0:
            raise ValueError("premium must be positive")
        if self.t2 <= 0 or self.wf < 1:
            raise ValueError("need t2 > 0 and wf >= 1")
        n = self.t2 * self.wf
        if abs(n - round(n)) > 1e-12:
            raise ValueError("t2 * wf must be an integer number of events")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")

    @property
    def t1(self) -> float:
        return 0.0

    @property
    def n_events(self) -> int:
        return int(round(self.t2 * self.wf))

    @property
    def g(self) -> float:
        return self.premium / self.n_events

    def event_times(self) -> np.ndarray:
        return np.arange(1, self.n_events + 1) / self.wf

    def with_fees(self, fees: FeeStructure) -> "CFContractSpec":
        return CFContractSpec(self.premium, self.t2, self.wf, self.kappa, fees)


@dataclass(frozen=True)
class YDContractSpec:
    """Fixed-withdrawal GMWB with optimal surrender and optional deferral.

    During the deferred period [0, t1) no withdrawals occur; at t1 the
    account is reset to max(C(t1), A) with C(t1) = premium * (1+rollup)^t1
    and the guaranteed withdrawal becomes G = A(t1+) / (m (t2 - t1)).
    Event times are t_i = t1 + i * (t2 - t1) / n_events.
    """

    premium: float
    t1: float
    t2: float
    m: int
    kappa: float
    rollup: float = 0.0
    fees: FeeStructure = field(default_factory=FeeStructure)

    def __post_init__(self):
        if self.premium <= 0:
            raise ValueError("premium must be positive")
        if self.t1 < 0 or self.t2 <= self.t1:
            raise ValueError("need 0 <= t1 < t2")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        n = (self.t2 - self.t1) * self.m
        if abs(n - round(n)) > 1e-12:
            raise ValueError("(t2 - t1) * m must be an integer number of events")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")

    @property
    def n_events(self) -> int:
        return int(round((self.t2 - self.t1) * self.m))

    @property
    def c_t1(self) -> float:
        return self.premium * (1.0 + self.rollup) ** self.t1

    @property
    def g_hat(self) -> float:
        """Representative guaranteed withdrawal after similarity reduction."""
        return self.premium / (self.m * (self.t2 - self.t1))

    def event_times(self) -> np.ndarray:
        dt = (self.t2 - self.t1) / self.n_events
        return self.t1 + np.arange(1, self.n_events + 1) * dt

    def with_fees(self, fees: FeeStructure) -> "YDContractSpec":
        return YDContractSpec(self.premium, self.t1, self.t2, self.m,
                              self.kappa, self.rollup, fees)


# ---------------------------------------------------------------------------
# state evolution between and at event times
# ---------------------------------------------------------------------------

def accrue(account, fund_ratio, fees: FeeStructure, dt: float):
    """Account update between events: A * (S_t+dt / S_t) * exp(-alpha dt)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return account * fund_ratio * math.exp(-fees.total * dt)


def cashflow_cf(w, g: float, kappa: float):
    """Cash received for withdrawal w; the excess over g is penalised."""
    w = np.asarray(w, dtype=float)
    out = np.where(w <= g, w, w - kappa * (w - g))
    return float(out) if out.ndim == 0 else out


def apply_withdrawal_cf(account, base, w):
    """CF state transition (A, B) -> (max(A - W, 0), B - W); requires W <= B."""
    if np.any(np.asarray(w) > np.asarray(base) + 1e-12):
        raise ValueError("withdrawal exceeds the benefit base")
    if np.any(np.asarray(w) < 0):
        raise ValueError("withdrawal must be nonnegative")
    return np.maximum(np.asarray(account, dtype=float) - w, 0.0), base - w


def final_value_cf(account, base, g: float, kappa: float):
    """Value at the last event time before the final withdrawal.

    Equals the maximum over admissible withdrawals of cash flow plus the
    final payoff: max(A, (1-kappa) B + kappa min(G, B)).
    """
    a = np.asarray(account, dtype=float)
    b = np.asarray(base, dtype=float)
    out = np.maximum(a, (1.0 - kappa) * b + kappa * np.minimum(g, b))
    return float(out) if out.ndim == 0 else out


def apply_withdrawal_yd(account, g: float):
    """YD payout-phase transition A -> max(0, A - G); G is paid regardless."""
    return np.maximum(0.0, np.asarray(account, dtype=float) - g)


def surrender_payoff_yd(account, g: float, kappa: float):
    """Cash on full surrender: G plus the penalised excess over G."""
    a = np.asarray(account, dtype=float)
    out = g + (1.0 - kappa) * np.maximum(0.0, a - g)
    return float(out) if out.ndim == 0 else out


def reset_at_t1_yd(spec: YDContractSpec, account_before) -> Tuple[np.ndarray, np.ndarray]:
    """Reset at the start of the payout phase.

    Returns (A(t1+), G) with A(t1+) = max(C(t1), A(t1-)) and
    G = A(t1+) / (m (t2 - t1)).
    """
    a_plus = np.maximum(spec.c_t1, np.asarray(account_before, dtype=float))
    g = a_plus / (spec.m * (spec.t2 - spec.t1))
    return a_plus, g


def similarity_scale(value_scaled, eta: float, contract=None):
    """Recover V(A, G, t) from V(eta A, eta G, t): divide by eta.

    Only meaningful for YD contracts, whose value is homogeneous of degree
    one in (A, G); the CF contract would also rescale its guaranteed
    amount, which does not reduce the problem dimension.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if contract is not None and isinstance(contract, CFContractSpec):
        raise ValueError("similarity scaling does not apply to CF contracts")
    return np.asarray(value_scaled, dtype=float) / eta
