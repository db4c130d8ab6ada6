"""Model parameter sets, yield curves and the Hull-White shift functions.

Two risk-neutral models drive the underlying fund:

* Heston stochastic volatility::

      dS = r S dt + sqrt(v) S dZ_S
      dv = k (theta - v) dt + omega sqrt(v) dZ_v,   d<Z_S, Z_v> = rho dt

* Black-Scholes Hull-White (BSHW) stochastic short rate, written in the
  additive decomposition r_t = omega * X_t + beta(t) with X an
  Ornstein-Uhlenbeck factor (dX = -k X dt + dZ_r, X_0 = 0) and

      beta(t) = f(0, t) + omega^2 / (2 k^2) * (1 - exp(-k t))^2

  where f(0, .) is the instantaneous forward curve.  On a flat curve the
  drift target of r is theta_t = r0 + omega^2 / (2 k^2) * (1 - exp(-2 k t)).

All times are year fractions.  Parameter objects are immutable and can be
shared freely across concurrent pricers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

__all__ = [
    "YieldCurve",
    "FeeStructure",
    "HestonParams",
    "HullWhiteParams",
]


@dataclass(frozen=True)
class YieldCurve:
    """Instantaneous-forward description of the initial term structure.

    ``kind`` is either ``"flat"`` (constant forward ``r0``) or
    ``"tabulated"`` (piecewise-linear forwards between the given
    ``(maturity, forward)`` nodes, constant extrapolation past the last
    node).  Maturities must be strictly increasing and start at 0.
    """

    kind: str
    r0: float = 0.0
    points: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    @classmethod
    def flat(cls, r0: float) -> "YieldCurve":
        if not math.isfinite(r0):
            raise ValueError("flat curve rate must be finite")
        return cls(kind="flat", r0=float(r0))

    @classmethod
    def tabulated(cls, points: Sequence[Tuple[float, float]]) -> "YieldCurve":
        pts = tuple((float(t), float(f)) for t, f in points)
        if len(pts) < 2:
            raise ValueError("tabulated curve needs at least two nodes")
        mats = [t for t, _ in pts]
        if mats[0] != 0.0:
            raise ValueError("tabulated curve must start at maturity 0")
        if any(b <= a for a, b in zip(mats, mats[1:])):
            raise ValueError("tabulated maturities must be strictly increasing")
        return cls(kind="tabulated", points=pts)

    @property
    def is_flat(self) -> bool:
        return self.kind == "flat"

    def forward(self, t):
        """Instantaneous forward f(0, t); accepts scalars or arrays."""
        if self.is_flat:
            return self.r0 if np.ndim(t) == 0 else np.full(np.shape(t), self.r0)
        out = np.interp(t, [p[0] for p in self.points],
                        [p[1] for p in self.points])
        return float(out) if np.ndim(t) == 0 else out

    def forward_integral(self, t1: float, t2: float) -> float:
        """Exact integral of the piecewise-linear forward over [t1, t2]."""
        if t2 < t1:
            raise ValueError("t2 must be >= t1")
        if self.is_flat:
            return self.r0 * (t2 - t1)
        ts = np.array([p[0] for p in self.points])
        knots = ts[(ts > t1) & (ts < t2)]
        grid = np.concatenate(([t1], knots, [t2]))
        vals = np.array([self.forward(t) for t in grid])
        return float(np.trapezoid(vals, grid))

    def zcb_price(self, t: float) -> float:
        """Zero-coupon bond price P(0, t) = exp(-integral of forwards)."""
        if t < 0:
            raise ValueError("maturity must be nonnegative")
        return math.exp(-self.forward_integral(0.0, t))


@dataclass(frozen=True)
class FeeStructure:
    """Continuously deducted annual fees.

    ``alpha_m`` is the management fee (an outgoing flow, never received by
    the guarantee writer); ``alpha_g`` funds the guarantee and is the root
    solver's unknown, so negative trial values are allowed.
    """

    alpha_m: float = 0.0
    alpha_g: float = 0.0

    def __post_init__(self):
        if self.alpha_m < 0 or not math.isfinite(self.alpha_m):
            raise ValueError("alpha_m must be a nonnegative finite rate")
        if not math.isfinite(self.alpha_g):
            raise ValueError("alpha_g must be finite")

    @property
    def total(self) -> float:
        return self.alpha_m + self.alpha_g

    def with_alpha_g(self, alpha_g: float) -> "FeeStructure":
        return FeeStructure(alpha_m=self.alpha_m, alpha_g=alpha_g)


@dataclass(frozen=True)
class HestonParams:
    """Heston model parameters (rates per year, variance per year)."""

    s0: float
    v0: float
    theta: float
    k: float
    omega: float
    rho: float
    r: float

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if self.v0 < 0 or self.theta < 0:
            raise ValueError("v0 and theta must be nonnegative")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if not math.isfinite(self.r):
            raise ValueError("r must be finite")


@dataclass(frozen=True)
class HullWhiteParams:
    """BSHW model parameters.

    ``sigma`` is the fund volatility, ``k``/``omega`` the rate factor's
    mean-reversion speed and absolute volatility, ``rho`` the fund-rate
    correlation and ``curve`` the initial term structure.  ``omega = 0``
    degenerates the model to Black-Scholes on the curve's rates.
    """

    s0: float
    sigma: float
    k: float
    omega: float
    rho: float
    curve: YieldCurve

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    @property
    def r0(self) -> float:
        return self.curve.forward(0.0)

    def beta(self, t) -> float:
        """Deterministic shift beta(t) of the short rate decomposition."""
        shift = (self.omega / self.k) ** 2 / 2.0
        return self.curve.forward(t) + shift * (1.0 - np.exp(-self.k * np.asarray(t))) ** 2

    def beta_integral(self, t1: float, t2: float) -> float:
        """Exact integral of beta over [t1, t2] (closed form in the shift)."""
        k = self.k
        shift = (self.omega / k) ** 2 / 2.0
        # integral of (1 - e^{-k t})^2 = t + 2 e^{-k t}/k - e^{-2 k t}/(2 k)
        def g(t):
            return t + 2.0 * math.exp(-k * t) / k - math.exp(-2.0 * k * t) / (2.0 * k)

        return self.curve.forward_integral(t1, t2) + shift * (g(t2) - g(t1))

    def theta_t(self, t) -> float:
        """Drift target theta_t of the short rate; flat curves only."""
        if not self.curve.is_flat:
            raise ValueError("theta_t is only defined for flat curves")
        shift = (self.omega / self.k) ** 2 / 2.0
        return self.curve.r0 + shift * (1.0 - np.exp(-2.0 * self.k * np.asarray(t)))
