"""Projection of GMWB contracts onto simulated scenarios.

``price_static`` replays the fixed withdrawal strategy path by path.  The
optimal-withdrawal pricers implement least-squares Monte Carlo with
forward re-simulation: states are seeded on fixed grids at every event
time, diffused forward under the already-fitted later-time continuation
polynomials, and the realised discounted cash flows are regressed on the
seeded states.  Decisions always use the regression estimate while values
use realised cash flows (the usual low-bias convention).

Two regression layouts are provided for the CF contract:

* Full Regression: two polynomials in (A, B, u) per event time, one for
  each of the regions A >= B and A < B.
* Regression by Lines: three polynomials in (A, u) per benefit-base level
  B in {0, G, ..., P}, one per account sector [0, B/2], [B/2, 3B/2],
  [3B/2, 3P]; withdrawals are searched over multiples of G so the base
  stays on the level grid.

``u`` is the variance in the Heston model and the short rate in BSHW.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .contract import (CFContractSpec, YDContractSpec, cashflow_cf,
                       final_value_cf)
from .results import PricingResult

__all__ = [
    "RegionPoly",
    "fit_region_polynomial",
    "price_static",
    "price_optimal_withdrawal_full",
    "price_optimal_withdrawal_by_lines",
    "price_optimal_surrender_yd",
    "chebyshev_nodes",
]


# ---------------------------------------------------------------------------
# polynomial regression with shift/scale conditioning
# ---------------------------------------------------------------------------

def _monomial_powers(n_vars: int, degree: int) -> List[Tuple[int, ...]]:
    return [p for p in itertools.product(range(degree + 1), repeat=n_vars)
            if sum(p) <= degree]


@dataclass
class RegionPoly:
    """Least-squares polynomial on affinely rescaled inputs."""

    powers: List[Tuple[int, ...]]
    coefs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, *xs) -> np.ndarray:
        z = self._scale(xs)
        out = np.zeros_like(z[0])
        for p, c in zip(self.powers, self.coefs):
            term = np.full_like(z[0], c)
            for v, e in zip(z, p):
                if e:
                    term = term * v ** e
            out += term
        return out

    def _scale(self, xs) -> List[np.ndarray]:
        z = []
        for i, x in enumerate(xs):
            span = self.hi[i] - self.lo[i]
            if span <= 0:
                z.append(np.zeros_like(np.asarray(x, dtype=float)))
            else:
                z.append((2.0 * (np.asarray(x, dtype=float) - self.lo[i]) - span)
                         / span)
        return z


def fit_region_polynomial(xs: Sequence[np.ndarray], y: np.ndarray,
                          degree: int) -> RegionPoly:
    """Fit a total-degree polynomial of the inputs to y.

    Inputs are affinely mapped to [-1, 1] per coordinate using the sample
    range.  Coordinates without sample spread (a constant short rate, a
    single seeded base level) carry no information and are excluded from
    the monomial set; residual rank deficiency reduces the total degree
    with a warning.  Degree 0 always succeeds.
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    lo = np.array([x.min() for x in xs])
    hi = np.array([x.max() for x in xs])
    scale_ref = np.maximum(np.abs(lo), np.abs(hi)) + 1e-300
    live = (hi - lo) > 1e-12 * scale_ref
    n = xs[0].shape[0]
    for d in range(degree, -1, -1):
        powers = [p for p in _monomial_powers(len(xs), d)
                  if all(e == 0 or live[i] for i, e in enumerate(p))]
        if len(powers) > n:
            continue
        poly = RegionPoly(powers=powers, coefs=np.zeros(len(powers)), lo=lo, hi=hi)
        z = poly._scale(xs)
        design = np.empty((n, len(powers)))
        for col, p in enumerate(powers):
            term = np.ones(n)
            for v, e in zip(z, p):
                if e:
                    term = term * v ** e
            design[:, col] = term
        coefs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank == len(powers):
            if d < degree:
                warnings.warn(
                    f"rank-deficient regression design; degree reduced to {d}")
            poly.coefs = coefs
            return poly
    raise RuntimeError("regression failed even at degree 0")


def chebyshev_nodes(a: float, b: float, n: int) -> np.ndarray:
    """n Chebyshev-Lobatto nodes on [a, b], endpoints included."""
    if n == 1:
        return np.array([0.5 * (a + b)])
    k = np.arange(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos(np.pi * k / (n - 1))[::-1]


# ---------------------------------------------------------------------------
# shared event-grid plumbing
# ---------------------------------------------------------------------------

def _event_frames(scen, contract):
    """Per-event growth ratios, one-period discounts and factor values.

    Returns (ratios, discs, u, pre) where column i refers to event i+1 and
    ``pre`` carries the deferred-period data (discount to t1, fund at t1)
    or None for immediate contracts.
    """
    times = scen.times
    etimes = contract.event_times()
    cols = np.searchsorted(times, etimes)
    if np.any(np.abs(times[cols] - etimes) > 1e-9):
        raise ValueError("scenario grid is missing contract event times")
    alpha = contract.fees.total
    t1 = contract.t1
    c0 = int(np.searchsorted(times, t1)) if t1 > 0 else 0
    if t1 > 0 and abs(times[c0] - t1) > 1e-9:
        raise ValueError("scenario grid is missing the payout start time")
    full_cols = np.concatenate(([c0], cols))
    ratios = np.empty((scen.n_paths, len(etimes)))
    discs = np.empty_like(ratios)
    for i in range(len(etimes)):
        ca, cb = full_cols[i], full_cols[i + 1]
        dt = times[cb] - times[ca]
        ratios[:, i] = scen.s[:, cb] / scen.s[:, ca] * math.exp(-alpha * dt)
        discs[:, i] = np.exp(-scen.disc[:, ca:cb].sum(axis=1))
    u = scen.u[:, cols]
    pre = None
    if t1 > 0:
        d0 = np.exp(-scen.disc[:, :c0].sum(axis=1))
        s_t1 = scen.s[:, c0] / scen.s[:, 0]
        pre = (d0, s_t1)
    return ratios, discs, u, pre


def _static_path_value(contract, ratios, discs, a0_scale=1.0) -> np.ndarray:
    """Discounted cash flows of the fixed-G strategy, valued at t1."""
    if isinstance(contract, CFContractSpec):
        g = contract.g
    else:
        g = contract.g_hat
    premium = contract.premium
    n = ratios.shape[1]
    a = np.full(ratios.shape[0], premium * a0_scale)
    val = np.zeros(ratios.shape[0])
    df = np.ones(ratios.shape[0])
    for i in range(n):
        a = a * ratios[:, i]
        df = df * discs[:, i]
        if i < n - 1:
            val += df * g
            a = np.maximum(a - g, 0.0)
        else:
            val += df * (g + np.maximum(a - g, 0.0))
    return val


def _deferred_scale(contract, pre, base_value, a0_scale=1.0) -> np.ndarray:
    """Apply the similarity reduction at t1 and discount to time 0."""
    if pre is None:
        return base_value
    d0, s_ratio = pre
    alpha = contract.fees.total
    a_minus = contract.premium * a0_scale * s_ratio * math.exp(-alpha * contract.t1)
    scale = np.maximum(contract.c_t1, a_minus) / contract.premium
    return d0 * scale * base_value


def price_static(scen_or_iter, contract, a0_scale: float = 1.0) -> PricingResult:
    """Fixed-withdrawal value: mean discounted cash flow over scenarios.

    Accepts a single ScenarioSet or an iterable of them (streamed chunks).
    """
    if hasattr(scen_or_iter, "s"):
        chunks = [scen_or_iter]
    else:
        chunks = scen_or_iter
    total = 0
    acc = 0.0
    acc2 = 0.0
    seed = None
    for scen in chunks:
        seed = scen.seed if seed is None else seed
        ratios, discs, _, pre = _event_frames(scen, contract)
        val = _static_path_value(contract, ratios, discs,
                                 1.0 if pre is not None else a0_scale)
        val = _deferred_scale(contract, pre, val, a0_scale)
        total += val.shape[0]
        acc += float(val.sum())
        acc2 += float((val * val).sum())
    mean = acc / total
    var = max(0.0, acc2 / total - mean * mean)
    return PricingResult(value=mean, std_error=math.sqrt(var / total),
                         method="mc", mode="static", n_paths=total, seed=seed)


# ---------------------------------------------------------------------------
# optimal withdrawal (CF): Full Regression
# ---------------------------------------------------------------------------

def _best_withdrawal_full(a, b, u, q_up, q_dw, g, kappa):
    """Vectorised argmax over withdrawals (multiples of G plus full B)."""
    n_max = int(math.floor(b.max() / g + 1e-9))
    cand_w = [k * g for k in range(n_max + 1)]
    best_val = np.full(a.shape, -np.inf)
    best_w = np.zeros_like(a)
    for w in cand_w:
        feas = b >= w - 1e-9 * g
        if not feas.any():
            continue
        ap = np.maximum(a - w, 0.0)
        bp = np.maximum(b - w, 0.0)
        cont = np.where(ap >= bp, q_up(ap, bp, u), q_dw(ap, bp, u))
        val = cashflow_cf(w, g, kappa) + cont
        take = feas & (val > best_val)
        best_val = np.where(take, val, best_val)
        best_w = np.where(take, w, best_w)
    # full depletion for bases that are not multiples of g
    frac = (b / g) % 1.0
    odd = (frac > 1e-9) & (frac < 1.0 - 1e-9)
    if odd.any():
        w = b
        ap = np.maximum(a - w, 0.0)
        cont = q_up(ap, np.zeros_like(ap), u)
        val = cashflow_cf(w, g, kappa) + cont
        take = odd & (val > best_val)
        best_val = np.where(take, val, best_val)
        best_w = np.where(take, w, best_w)
    return best_w


def _resim_cf(contract, ratios, discs, u, polys, i0, a0, b0,
              chooser) -> np.ndarray:
    """Realised value at event i0 of post-event state (a0, b0).

    Withdrawals at events j > i0 follow ``chooser`` with the polynomials
    fitted for those times; the last event uses the closed form.
    """
    g, kappa = contract.g, contract.kappa
    n_ev = contract.n_events
    a = a0.copy()
    b = b0.copy()
    val = np.zeros_like(a)
    df = np.ones_like(a)
    for j in range(i0 + 1, n_ev + 1):
        a = a * ratios[:, j - 1]
        df = df * discs[:, j - 1]
        if j == n_ev:
            val += df * final_value_cf(a, b, g, kappa)
        else:
            w = chooser(j, a, b, u[:, j - 1])
            cash = cashflow_cf(w, g, kappa)
            a = np.maximum(a - w, 0.0)
            b = np.maximum(b - w, 0.0)
            val += df * cash
    return val


def price_optimal_withdrawal_full(scen, contract: CFContractSpec, degree: int,
                                  grid_shape: Tuple[int, int] = (40, 25),
                                  a0_scale: float = 1.0) -> PricingResult:
    """Dynamic CF value by Full Regression (two 3-variate polynomials)."""
    ratios, discs, u, _ = _event_frames(scen, contract)
    premium, g = contract.premium, contract.g
    n_ev = contract.n_events
    ka, hb = grid_shape
    a_nodes = np.linspace(0.0, 3.0 * premium, ka)
    b_nodes = chebyshev_nodes(0.0, premium, hb)
    pairs = np.array([(a, b) for a in a_nodes for b in b_nodes])
    idx = np.arange(scen.n_paths) % pairs.shape[0]
    seed_a = pairs[idx, 0]
    seed_b = pairs[idx, 1]

    polys: Dict[int, Tuple[RegionPoly, RegionPoly]] = {}

    def chooser(j, a, b, uu):
        q_up, q_dw = polys[j]
        return _best_withdrawal_full(a, b, uu, q_up, q_dw, g, contract.kappa)

    for i in range(n_ev - 1, 0, -1):
        vals = _resim_cf(contract, ratios, discs, u, polys, i,
                         seed_a, seed_b, chooser)
        up = seed_a >= seed_b
        fit_up = fit_region_polynomial(
            [seed_a[up], seed_b[up], u[up, i - 1]], vals[up], degree)
        dw = ~up | (seed_a == seed_b)
        fit_dw = fit_region_polynomial(
            [seed_a[dw], seed_b[dw], u[dw, i - 1]], vals[dw], degree)
        polys[i] = (fit_up, fit_dw)

    start = np.full(scen.n_paths, premium * a0_scale)
    vals = _resim_cf(contract, ratios, discs, u, polys, 0, start,
                     np.full(scen.n_paths, premium), chooser)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return PricingResult(value=mean, std_error=se, method="mc",
                         mode="dynamic-full", n_paths=scen.n_paths,
                         degree=degree, seed=scen.seed)


# ---------------------------------------------------------------------------
# optimal withdrawal (CF): Regression by Lines
# ---------------------------------------------------------------------------

def _sector_bounds(level: int, g: float, premium: float):
    b = level * g
    return ((0.0, 0.5 * b), (0.5 * b, 1.5 * b), (1.5 * b, 3.0 * premium))


def _sector_of(a: np.ndarray, b: float) -> np.ndarray:
    out = np.full(a.shape, 2, dtype=np.int8)
    out[a <= 1.5 * b] = 1
    out[a <= 0.5 * b] = 0
    return out


def price_optimal_withdrawal_by_lines(scen, contract: CFContractSpec,
                                      degree: int,
                                      a0_scale: float = 1.0) -> PricingResult:
    """Dynamic CF value by per-base-level sector regressions.

    Requires the premium to be an exact multiple of G so that withdrawal
    multiples keep the base on the level grid.
    """
    premium, g, kappa = contract.premium, contract.g, contract.kappa
    levels = premium / g
    if abs(levels - round(levels)) > 1e-9:
        raise ValueError("premium must be a multiple of G for by-lines")
    n_lev = int(round(levels))
    ratios, discs, u, _ = _event_frames(scen, contract)
    n_ev = contract.n_events

    # polys[i][level][sector]
    polys: Dict[int, List[List[Optional[RegionPoly]]]] = {}

    def chooser(j, a, b, uu):
        table = polys[j]
        best_val = np.full(a.shape, -np.inf)
        best_w = np.zeros_like(a)
        lev = np.rint(b / g).astype(np.int64)
        for k in range(n_lev + 1):
            feas = lev >= k
            if not feas.any():
                continue
            w = k * g
            ap = np.maximum(a - w, 0.0)
            cont = np.empty_like(a)
            lp = lev - k
            for lq in np.unique(lp[feas]):
                rows = feas & (lp == lq)
                sec = _sector_of(ap[rows], lq * g)
                sub = np.empty(int(rows.sum()))
                for sid in (0, 1, 2):
                    m = sec == sid
                    if m.any():
                        qq = table[lq][sid]
                        sub[m] = qq(ap[rows][m], uu[rows][m])
                cont[rows] = sub
            val = cashflow_cf(w, g, kappa) + cont
            take = feas & (val > best_val)
            best_val = np.where(take, val, best_val)
            best_w = np.where(take, w, best_w)
        return best_w

    n_paths = scen.n_paths
    for i in range(n_ev - 1, 0, -1):
        table: List[List[Optional[RegionPoly]]] = []
        for lev in range(n_lev + 1):
            row: List[Optional[RegionPoly]] = [None, None, None]
            for sid, (lo, hi) in enumerate(_sector_bounds(lev, g, premium)):
                if hi - lo <= 0 and sid < 2:
                    continue
                nodes = chebyshev_nodes(lo, hi, degree + 1)
                seed_a = nodes[np.arange(n_paths) % len(nodes)]
                seed_b = np.full(n_paths, lev * g)
                vals = _resim_cf(contract, ratios, discs, u, polys, i,
                                 seed_a, seed_b, chooser)
                row[sid] = fit_region_polynomial(
                    [seed_a, u[:, i - 1]], vals, degree)
            # empty sectors fall back to the first nonempty one
            for sid in (0, 1):
                if row[sid] is None:
                    row[sid] = row[2]
            table.append(row)
        polys[i] = table

    start = np.full(n_paths, premium * a0_scale)
    vals = _resim_cf(contract, ratios, discs, u, polys, 0, start,
                     np.full(n_paths, premium), chooser)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return PricingResult(value=mean, std_error=se, method="mc",
                         mode="dynamic-lines", n_paths=n_paths,
                         degree=degree, seed=scen.seed)


# ---------------------------------------------------------------------------
# optimal surrender (YD)
# ---------------------------------------------------------------------------

def price_optimal_surrender_yd(scen, contract: YDContractSpec, degree: int,
                               a0_scale: float = 1.0) -> PricingResult:
    """YD value with the surrender option (Longstaff-Schwartz stopping).

    The account path under the fixed strategy is deterministic per
    scenario; at each event the surrender cash is compared with the
    regression estimate of the continuation value, while realised cash
    flows carry the value (low-bias convention).  Deferred contracts are
    handled through the similarity reduction at t1.
    """
    ratios, discs, u, pre = _event_frames(scen, contract)
    g, kappa = contract.g_hat, contract.kappa
    n_ev = contract.n_events
    n = scen.n_paths

    a_minus = np.empty((n, n_ev))
    start_scale = 1.0 if pre is not None else a0_scale
    a = np.full(n, contract.premium * start_scale)
    for i in range(n_ev):
        a = a * ratios[:, i]
        a_minus[:, i] = a
        a = np.maximum(a - g, 0.0)

    value = g + np.maximum(a_minus[:, n_ev - 1] - g, 0.0)
    for i in range(n_ev - 1, 0, -1):
        cont_real = discs[:, i] * value
        a_post = np.maximum(a_minus[:, i - 1] - g, 0.0)
        poly = fit_region_polynomial([a_post, u[:, i - 1]], cont_real, degree)
        exercise = (1.0 - kappa) * a_post
        stop = exercise >= poly(a_post, u[:, i - 1])
        value = g + np.where(stop, exercise, cont_real)
    value = discs[:, 0] * value
    value = _deferred_scale(contract, pre, value, a0_scale)
    mean = float(value.mean())
    se = float(value.std(ddof=1) / math.sqrt(n))
    return PricingResult(value=mean, std_error=se, method="mc",
                         mode="surrender", n_paths=n, degree=degree,
                         seed=scen.seed)
