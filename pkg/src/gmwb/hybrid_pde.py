"""Hybrid lattice / 1D finite-difference pricer.

The stochastic factor (variance or rate factor) lives on a quadrinomial
lattice; between consecutive levels the value function is advanced by one
implicit finite-difference step of the one-dimensional PDE satisfied by
the factor-decorrelated log account

    Heston:  Y = ln A - (rho/omega) v
    BSHW:    Y = ln A - rho sigma X        (solved in W = Y - int beta dt)

with the factor frozen at the node's value.  Per node the step is: mix the
four upcoming value vectors by the transition probabilities, solve the
implicit transport step, and apply the exact exponential discount.  Event
times act in account space through the inverse transform, using natural
cubic splines for off-grid reads; a dedicated scalar entry per node tracks
the exhausted state A = 0, which the log grid cannot represent.

Curtailing: only lattice nodes with positive accumulated visit probability
are processed; by construction the active set is closed under transitions,
so skipping the complement leaves root values unchanged.

Working in W instead of Y makes every PDE coefficient time-independent, so
the Thomas factors of the implicit solve are precomputed once per distinct
factor value; the deterministic discount exp(-int beta) is applied as an
exact per-level scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import _kernels as K
from .contract import CFContractSpec, YDContractSpec
from .lattice import Lattice
from .models import HestonParams, HullWhiteParams
from .results import PricingResult

__all__ = [
    "to_y_heston",
    "from_y_heston",
    "to_y_hw",
    "from_y_hw",
    "pde_step_heston",
    "pde_step_hw",
    "price_hybrid",
    "StrategySlice",
]


# ---------------------------------------------------------------------------
# coordinate transforms
# ---------------------------------------------------------------------------

def to_y_heston(a, v, params: HestonParams):
    """Decorrelated coordinate Y = ln A - (rho/omega) v; requires A > 0."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("the log transform needs A > 0")
    return np.log(a) - (params.rho / params.omega) * np.asarray(v, dtype=float)


def from_y_heston(y, v, params: HestonParams):
    return np.exp(np.asarray(y, dtype=float)
                  + (params.rho / params.omega) * np.asarray(v, dtype=float))


def to_y_hw(a, x, params: HullWhiteParams):
    """Decorrelated coordinate Y = ln A - rho sigma X; requires A > 0."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("the log transform needs A > 0")
    return np.log(a) - params.rho * params.sigma * np.asarray(x, dtype=float)


def from_y_hw(y, x, params: HullWhiteParams):
    return np.exp(np.asarray(y, dtype=float)
                  + params.rho * params.sigma * np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# reference single PDE steps (used by tests and small solves)
# ---------------------------------------------------------------------------

def _implicit_step(values: np.ndarray, dy: float, drift: float, diff: float,
                   dtau: float, disc: float) -> np.ndarray:
    """(I - dtau (drift d/dY + diff d2/dY2))^-1 then exact discount."""
    values = np.ascontiguousarray(values, dtype=float)
    ny = values.shape[0]
    cp = np.empty(ny)
    inv = np.empty(ny)
    l_int, l_top = K.thomas_prepare(drift, diff, dtau, dy, ny, cp, inv)
    out = np.empty((1, ny))
    a0 = np.zeros(1)
    K.hpde_level(values[None, :], np.zeros(1), np.zeros((1, 4), dtype=np.int32),
                 np.array([[1.0, 0.0, 0.0, 0.0]]), np.zeros(1, dtype=np.int32),
                 np.array([l_int]), np.array([l_top]),
                 cp[None, :], inv[None, :], np.array([disc]), out, a0)
    return out[0]


def pde_step_heston(values, dy: float, v_tau: float, dtau: float,
                    params: HestonParams, alpha_tot: float = 0.0) -> np.ndarray:
    """One backward step of the frozen-variance PDE in Y."""
    drift = (params.r - alpha_tot - 0.5 * v_tau
             - (params.rho / params.omega) * params.k * (params.theta - v_tau))
    diff = 0.5 * (1.0 - params.rho ** 2) * v_tau
    return _implicit_step(values, dy, drift, diff, dtau,
                          math.exp(-params.r * dtau))


def pde_step_hw(values, dy: float, r_tau: float, x_tau: float, dtau: float,
                params: HullWhiteParams, alpha_tot: float = 0.0) -> np.ndarray:
    """One backward step of the frozen-rate PDE in Y."""
    drift = (r_tau - alpha_tot - 0.5 * params.sigma ** 2
             + params.sigma * params.rho * params.k * x_tau)
    diff = 0.5 * (1.0 - params.rho ** 2) * params.sigma ** 2
    return _implicit_step(values, dy, drift, diff, dtau,
                          math.exp(-r_tau * dtau))


# ---------------------------------------------------------------------------
# model plumbing for the full solver
# ---------------------------------------------------------------------------

@dataclass
class StrategySlice:
    """Optimal withdrawals captured at one event time (dynamic CF mode)."""

    time: float
    factor_values: np.ndarray          # per active node
    account_grid: np.ndarray           # (node, ny) account values
    withdrawals: np.ndarray            # (base level, node, ny) in units of G
    withdrawals_a0: np.ndarray         # (base level, node) at A = 0
    base_levels: np.ndarray


class _ModelOps:
    """Per-model coefficients of the 1D solve on the shared grid."""

    def __init__(self, params, lat: Lattice, alpha_tot: float, t2: float):
        self.lat = lat
        dt = lat.dt
        n = lat.n_levels
        if isinstance(params, HestonParams):
            c = params.rho / params.omega
            self.r_flat = params.r
            self.drift = lambda v: (params.r - alpha_tot - 0.5 * v
                                    - c * params.k * (params.theta - v))
            self.diff = lambda v: 0.5 * (1.0 - params.rho ** 2) * v
            self.disc_key = lambda v: math.exp(-params.r * dt)
            self.off_shift = np.zeros(n + 1)
            self.off_scale = c
            self.level_mult = np.ones(n)
            vbar = max(params.v0, params.theta)
            var_y = ((1.0 - params.rho ** 2) * vbar * t2
                     + (0.5 + abs(c) * params.k) ** 2
                     * params.omega ** 2 * params.theta * t2 / params.k ** 2)
            mu = max(abs(params.r - alpha_tot - 0.5 * vbar
                         - c * params.k * (params.theta - vbar)),
                     abs(params.r - alpha_tot - c * params.k * params.theta))
            self.half_span = 8.0 * math.sqrt(var_y) + mu * t2 + 1.0
        else:
            sig, rho, k, om = params.sigma, params.rho, params.k, params.omega
            self.r_flat = None
            self.drift = lambda x: (om + sig * rho * k) * x - alpha_tot \
                - 0.5 * sig ** 2
            self.diff = lambda x: 0.5 * (1.0 - rho ** 2) * sig ** 2
            self.disc_key = lambda x: math.exp(-om * x * dt)
            ts = np.arange(n + 1) * dt
            self.off_shift = np.array([params.beta_integral(0.0, t) for t in ts])
            self.off_scale = rho * sig
            self.level_mult = np.array(
                [math.exp(-params.beta_integral(ts[i], ts[i + 1]))
                 for i in range(n)])
            h_t = math.exp(-k * t2)
            var_i = (t2 - 2.0 * (1.0 - h_t) / k
                     + (1.0 - h_t ** 2) / (2.0 * k)) / k ** 2
            var_w = (1.0 - rho ** 2) * sig ** 2 * t2 \
                + (om + sig * rho * k) ** 2 * var_i
            self.half_span = 8.0 * math.sqrt(var_w) \
                + abs(alpha_tot + 0.5 * sig ** 2) * t2 + 1.0

    def offsets(self, keys: np.ndarray, level: int) -> np.ndarray:
        """Per-node log offset: A = exp(grid + offset)."""
        return self.off_shift[level] + self.off_scale * self.lat.value_of_key(keys)


def _factor_tables(ops: _ModelOps, lat: Lattice, ny: int, dy: float,
                   lo: np.ndarray, hi: np.ndarray):
    qmin = min(int(lat.key_of(n, int(lo[n]))) for n in range(lat.n_levels + 1))
    qmax = max(int(lat.key_of(n, int(hi[n]))) for n in range(lat.n_levels + 1))
    nf = qmax - qmin + 1
    cp = np.empty((nf, ny))
    inv = np.empty((nf, ny))
    l_int = np.empty(nf)
    l_top = np.empty(nf)
    disc = np.empty(nf)
    dt = lat.dt
    vals = ops.lat.value_of_key(np.arange(qmin, qmax + 1))
    for f in range(nf):
        v = vals[f]
        l_int[f], l_top[f] = K.thomas_prepare(ops.drift(v), ops.diff(v),
                                              dt, dy, ny, cp[f], inv[f])
        disc[f] = ops.disc_key(v)
    return qmin, l_int, l_top, cp, inv, disc


def price_hybrid(lat: Lattice, params, contract, mode: str, ny: int,
                 use_curtail: bool = True,
                 capture_level: Optional[int] = None,
                 readout_scales: Tuple[float, ...] = ()) -> PricingResult:
    """Backward hybrid lattice/PDE valuation.

    ``mode`` is "static" (CF or YD), "dynamic" (CF optimal withdrawal,
    solved on the benefit-base level stack) or "surrender" (YD).  Event
    times must land exactly on lattice levels.  Returns the root value
    plus a grid-read delta in ``diagnostics``.
    """
    if mode not in ("static", "dynamic", "surrender"):
        raise ValueError(f"unknown mode {mode!r}")
    is_yd = isinstance(contract, YDContractSpec)
    if mode == "dynamic" and is_yd:
        raise ValueError("dynamic withdrawal applies to the CF contract")
    if mode == "surrender" and not is_yd:
        raise ValueError("surrender applies to the YD contract")
    dt = lat.dt
    t2 = contract.t2
    n_lev = lat.n_levels
    if abs(n_lev * dt - t2) > 1e-9:
        raise ValueError("lattice horizon must equal the contract maturity")
    etimes = contract.event_times()
    elevels = np.rint(etimes / dt).astype(np.int64)
    if np.any(np.abs(elevels * dt - etimes) > 1e-9):
        raise ValueError("event times must land on lattice levels")
    event_of_level = {int(l): i + 1 for i, l in enumerate(elevels)}
    reset_level = None
    if is_yd and contract.t1 > 0:
        reset_level = int(round(contract.t1 / dt))
        if abs(reset_level * dt - contract.t1) > 1e-9:
            raise ValueError("payout start must land on a lattice level")

    premium = contract.premium
    g = contract.g if not is_yd else contract.g_hat
    kappa = contract.kappa
    alpha_tot = contract.fees.total
    ops = _ModelOps(params, lat, alpha_tot, t2)

    if use_curtail:
        lo, hi = lat.lo, lat.hi
    else:
        lo = np.zeros(n_lev + 1, dtype=np.int64)
        hi = np.array([lat.level_size(n) - 1 for n in range(n_lev + 1)],
                      dtype=np.int64)

    # shared grid, root value on a grid point
    root_off = float(ops.offsets(lat.key_of(0, np.array([0])), 0)[0])
    y0 = math.log(premium) - root_off
    i0 = (ny - 1) // 2
    dy = 2.0 * ops.half_span / (ny - 1)
    ygrid = y0 + (np.arange(ny) - i0) * dy

    qmin, l_int, l_top, cp, inv, disc_key = _factor_tables(
        ops, lat, ny, dy, lo, hi)
    cps = np.empty(ny)
    invs = np.empty(ny)
    K.spline_prepare_uniform(ny, cps, invs)

    nb1 = 1
    if mode == "dynamic":
        nlevels = premium / g
        if abs(nlevels - round(nlevels)) > 1e-9:
            raise ValueError("premium must be a multiple of G for dynamic mode")
        nb1 = int(round(nlevels)) + 1

    wmax = int((hi - lo).max()) + 1
    vcur = np.zeros((nb1, wmax, ny))
    vnew = np.zeros((nb1, wmax, ny))
    a0cur = np.zeros((nb1, wmax))
    a0new = np.zeros((nb1, wmax))
    wstar_out: Optional[StrategySlice] = None

    # terminal condition at the last event time (pre-withdrawal value)
    w_term = int(hi[n_lev] - lo[n_lev]) + 1
    keys = lat.key_of(n_lev, np.arange(int(lo[n_lev]), int(hi[n_lev]) + 1))
    off = np.ascontiguousarray(ops.offsets(keys, n_lev))
    if mode == "dynamic":
        K.hpde_terminal_dynamic(off, ygrid, g, kappa, nb1,
                                vcur[:, :w_term], a0cur[:, :w_term])
    else:
        amat = np.exp(ygrid[None, :] + off[:, None])
        vcur[0, :w_term] = g + np.maximum(amat - g, 0.0)
        a0cur[0, :w_term] = g

    for n in range(n_lev - 1, -1, -1):
        w = int(hi[n] - lo[n]) + 1
        w1 = int(hi[n + 1] - lo[n + 1]) + 1
        tgt, prb = lat.transitions(n, int(lo[n]), int(hi[n]))
        tgt_rel = (tgt - int(lo[n + 1])).astype(np.int32)
        np.clip(tgt_rel, 0, w1 - 1, out=tgt_rel)
        keys = lat.key_of(n, np.arange(int(lo[n]), int(hi[n]) + 1))
        fidx = (keys - qmin).astype(np.int32)
        disc = disc_key[fidx] * ops.level_mult[n]
        for nb in range(nb1):
            K.hpde_level(vcur[nb, :w1], a0cur[nb, :w1], tgt_rel, prb, fidx,
                         l_int, l_top, cp, inv, disc,
                         vnew[nb, :w], a0new[nb, :w])
        vcur, vnew = vnew, vcur
        a0cur, a0new = a0new, a0cur

        ev = event_of_level.get(n)
        if ev is not None:
            off = np.ascontiguousarray(ops.offsets(keys, n))
            if mode == "dynamic":
                record = capture_level is not None and n == capture_level
                ws = np.zeros((nb1, w, ny), dtype=np.int8) if record else \
                    np.zeros((1, 1, 1), dtype=np.int8)
                ws0 = np.zeros((nb1, w), dtype=np.int8) if record else \
                    np.zeros((1, 1), dtype=np.int8)
                K.hpde_event_dynamic(vcur[:, :w], a0cur[:, :w], off, ygrid,
                                     g, kappa, cps, invs,
                                     vnew[:, :w], a0new[:, :w], record, ws,
                                     ws0)
                vcur, vnew = vnew, vcur
                a0cur, a0new = a0new, a0cur
                if record:
                    wstar_out = StrategySlice(
                        time=n * dt,
                        factor_values=lat.values(n, int(lo[n]), int(hi[n])),
                        account_grid=np.exp(ygrid[None, :] + off[:, None]),
                        withdrawals=ws,
                        withdrawals_a0=ws0,
                        base_levels=np.arange(nb1) * g)
            else:
                K.hpde_event_static(vcur[0, :w], a0cur[0, :w], off, ygrid, g,
                                    cps, invs, mode == "surrender", kappa)
        if reset_level is not None and n == reset_level:
            off = np.ascontiguousarray(ops.offsets(keys, n))
            K.hpde_reset_deferred(vcur[0, :w], a0cur[0, :w], off, ygrid,
                                  contract.c_t1, premium, cps, invs)

    root_nb = nb1 - 1
    value = float(vcur[root_nb, 0, i0])
    # grid-read delta: nonuniform central difference at A = premium
    a_minus = premium * math.exp(-dy)
    a_plus = premium * math.exp(dy)
    hm, hp = premium - a_minus, a_plus - premium
    vl, vc, vr = vcur[root_nb, 0, i0 - 1], value, vcur[root_nb, 0, i0 + 1]
    delta = (-hp / (hm * (hm + hp)) * vl
             + (hp - hm) / (hm * hp) * vc
             + hm / (hp * (hm + hp)) * vr)
    diagnostics = {
        "delta": float(delta),
        "ny": ny,
        "levels": n_lev,
        "dy": dy,
        "max_width": wmax,
        "root_row": i0,
    }
    if readout_scales:
        cps_s = np.empty(ny)
        invs_s = np.empty(ny)
        K.spline_prepare_uniform(ny, cps_s, invs_s)
        mom = np.empty(ny)
        row = np.ascontiguousarray(vcur[root_nb, 0])
        K.spline_moments_uniform(row, dy, cps_s, invs_s, mom)
        diagnostics["values_at_scales"] = {
            s: float(K.spline_eval_uniform(row, mom, ygrid[0], dy,
                                           y0 + math.log(s)))
            for s in readout_scales}
    if wstar_out is not None:
        diagnostics["strategy"] = wstar_out
    return PricingResult(value=value, std_error=None, method="hpde",
                         mode=mode, diagnostics=diagnostics)
