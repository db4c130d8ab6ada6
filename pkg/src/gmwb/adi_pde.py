"""Two-factor ADI (Douglas) finite-difference pricer on nonuniform meshes.

The account axis is uniform with spacing S0/20 on [0.8 S0, 1.2 S0] and
sinh-stretched outside down to 0 and up to 1000 * T2 * S0; the rate axis
(BSHW) is sinh-concentrated around r0 on [-0.8, 0.8]; the variance axis
(Heston) is sinh-concentrated near 0 on [0, Vmax] with
Vmax = min(max(100 v0, 1), 5).

One Douglas step with theta = 1/2 treats the mixed derivative explicitly
and each axis implicitly in turn; the reaction term -rV is split evenly
between the two one-dimensional operators.  All outer boundaries carry
homogeneous Neumann conditions (normal derivatives dropped, one-sided
convection where the drift points inward); the A = 0 and V = 0 rows are
the degenerate PDE restrictions and need no boundary data.

Event-time actions reuse the account-space logic of the hybrid solver:
cash flow plus a natural-cubic-spline read of the post-withdrawal value,
level by level on the benefit-base stack in the dynamic case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K
from .contract import CFContractSpec, YDContractSpec
from .models import HestonParams, HullWhiteParams
from .results import PricingResult

__all__ = ["Mesh2D", "build_meshes", "douglas_step", "price_adi"]


@dataclass
class Mesh2D:
    """Nonuniform product mesh: account axis times rate/variance axis."""

    a: np.ndarray
    u: np.ndarray
    model: str           # "heston" | "hw"
    ia0: int             # index of the account node equal to s0

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.a), len(self.u)


def build_meshes(params, contract, na: int, nu: int,
                 a_max_scale: float = 1.0) -> Mesh2D:
    """Mesh with ``na`` account nodes and ``nu`` second-axis nodes.

    The account mesh is uniform in a transformed coordinate that is linear
    on [0.8 S0, 1.2 S0] (scale d1 = S0/20) and sinh-stretched outside, so
    roughly a constant fraction of the nodes concentrates around S0 while
    the grid reaches A_max = 1000 T2 S0; spacing refines everywhere as
    ``na`` grows.  The second axis is sinh-concentrated around r0 (BSHW)
    or 0 (Heston variance).
    """
    s0 = params.s0
    t2 = contract.t2
    a_left, a_right = 0.8 * s0, 1.2 * s0
    a_max = 1000.0 * t2 * s0 * a_max_scale
    d1 = s0 / 20.0
    xi_min = -math.asinh(a_left / d1)
    xi_int = (a_right - a_left) / d1
    xi_max = xi_int + math.asinh((a_max - a_right) / d1)
    xi = np.linspace(xi_min, xi_max, na)
    a = np.where(
        xi < 0.0, a_left + d1 * np.sinh(xi),
        np.where(xi <= xi_int, a_left + d1 * xi,
                 a_right + d1 * np.sinh(xi - xi_int)))
    a[0] = 0.0
    a[-1] = a_max
    ia0 = int(np.argmin(np.abs(a - s0)))

    if isinstance(params, HestonParams):
        v_max = min(max(100.0 * params.v0, 1.0), 5.0)
        d3 = v_max / 500.0
        xiv = np.linspace(0.0, math.asinh(v_max / d3), nu)
        u = d3 * np.sinh(xiv)
        u[-1] = v_max
        model = "heston"
    else:
        r_max = 0.8
        c = params.r0
        d2 = r_max / 400.0
        xir = np.linspace(math.asinh((-r_max - c) / d2),
                          math.asinh((r_max - c) / d2), nu)
        u = c + d2 * np.sinh(xir)
        u[0], u[-1] = -r_max, r_max
        model = "hw"
    return Mesh2D(a=a, u=u, model=model, ia0=ia0)


def _d1_weights(x: np.ndarray):
    """Nonuniform central first-derivative weights (lower, upper)."""
    hm = np.diff(x)[:-1]
    hp = np.diff(x)[1:]
    wl = -hp / (hm * (hm + hp))
    wu = hm / (hp * (hm + hp))
    return wl, wu


def _d2_weights(x: np.ndarray):
    hm = np.diff(x)[:-1]
    hp = np.diff(x)[1:]
    wl = 2.0 / (hm * (hm + hp))
    wu = 2.0 / (hp * (hm + hp))
    return wl, wu


class _Operators:
    """Tridiagonal coefficient tables of F1, F2 and the mixed factor."""

    def __init__(self, params, contract, mesh: Mesh2D):
        a, u = mesh.a, mesh.u
        na, nu = mesh.shape
        alpha = contract.fees.total
        self.mesh = mesh
        self.params = params
        a_col = a[:, None]
        u_row = u[None, :]
        if mesh.model == "heston":
            r = params.r
            var_loc = u_row
            diff_a = 0.5 * u_row * a_col ** 2
            drift_a = (r - alpha) * a_col * np.ones_like(u_row)
            self.rate = np.full((na, nu), r)
            diff_u = 0.5 * params.omega ** 2 * u_row * np.ones_like(a_col)
            drift_u = params.k * (params.theta - u_row) * np.ones_like(a_col)
            self.mixed = params.rho * params.omega * a_col * var_loc
            self.theta_drift = None
        else:
            diff_a = 0.5 * params.sigma ** 2 * a_col ** 2 * np.ones_like(u_row)
            drift_a = (u_row - alpha) * a_col
            self.rate = np.broadcast_to(u_row, (na, nu)).copy()
            diff_u = np.full((na, nu), 0.5 * params.omega ** 2)
            # drift k(theta_t - r): the theta_t part is level-dependent
            drift_u = -params.k * u_row * np.ones_like(a_col)
            self.theta_drift = params.k
            self.mixed = params.rho * params.omega * params.sigma * a_col \
                * np.ones_like(u_row)

        # axis-0 (account) operator
        wl1, wu1 = _d1_weights(a)
        vl2, vu2 = _d2_weights(a)
        self.l1 = np.zeros((na, nu))
        self.d1 = np.zeros((na, nu))
        self.u1 = np.zeros((na, nu))
        self.l1[1:-1] = diff_a[1:-1] * vl2[:, None] + drift_a[1:-1] * wl1[:, None]
        self.u1[1:-1] = diff_a[1:-1] * vu2[:, None] + drift_a[1:-1] * wu1[:, None]
        self.d1[1:-1] = -(diff_a[1:-1] * (vl2 + vu2)[:, None]
                          + drift_a[1:-1] * (wl1 + wu1)[:, None])
        # A = 0: degenerate row (no account terms); A = Amax: one-sided drift
        h_top = a[-1] - a[-2]
        self.l1[-1] = -drift_a[-1] / h_top
        self.d1[-1] = drift_a[-1] / h_top
        self.d1 -= 0.5 * self.rate

        # axis-1 (rate / variance) operator, split into base and theta part
        wl, wu = _d1_weights(u)
        vl, vu = _d2_weights(u)
        self.l2 = np.zeros((na, nu))
        self.d2 = np.zeros((na, nu))
        self.u2 = np.zeros((na, nu))
        self.l2[:, 1:-1] = diff_u[:, 1:-1] * vl[None, :] + drift_u[:, 1:-1] * wl[None, :]
        self.u2[:, 1:-1] = diff_u[:, 1:-1] * vu[None, :] + drift_u[:, 1:-1] * wu[None, :]
        self.d2[:, 1:-1] = -(diff_u[:, 1:-1] * (vl + vu)[None, :]
                             + drift_u[:, 1:-1] * (wl + wu)[None, :])
        h_lo = u[1] - u[0]
        h_hi = u[-1] - u[-2]
        self.d2[:, 0] = -drift_u[:, 0] / h_lo
        self.u2[:, 0] = drift_u[:, 0] / h_lo
        self.l2[:, -1] = -drift_u[:, -1] / h_hi
        self.d2[:, -1] = drift_u[:, -1] / h_hi
        self.d2 -= 0.5 * self.rate
        if self.theta_drift is not None:
            self.w2l = np.zeros((na, nu))
            self.w2d = np.zeros((na, nu))
            self.w2u = np.zeros((na, nu))
            self.w2l[:, 1:-1] = wl[None, :]
            self.w2u[:, 1:-1] = wu[None, :]
            self.w2d[:, 1:-1] = -(wl + wu)[None, :]
            self.w2d[:, 0] = -1.0 / h_lo
            self.w2u[:, 0] = 1.0 / h_lo
            self.w2l[:, -1] = -1.0 / h_hi
            self.w2d[:, -1] = 1.0 / h_hi

        # mixed-derivative first-difference weights per axis
        self.wam = np.zeros(na)
        self.wap = np.zeros(na)
        self.wam[1:-1], self.wap[1:-1] = wl1, wu1
        self.wum = np.zeros(nu)
        self.wup = np.zeros(nu)
        self.wum[1:-1], self.wup[1:-1] = wl, wu

    def f2_parts(self, theta_t: Optional[float]):
        if self.theta_drift is None or theta_t is None:
            return self.l2, self.d2, self.u2
        c = self.theta_drift * theta_t
        return (self.l2 + c * self.w2l, self.d2 + c * self.w2d,
                self.u2 + c * self.w2u)


def douglas_step(u_val: np.ndarray, ops: _Operators, dt: float,
                 theta_t: Optional[float] = None,
                 theta_scheme: float = 0.5) -> np.ndarray:
    """One backward Douglas step (explicit mixed, two implicit sweeps)."""
    l2, d2, u2 = ops.f2_parts(theta_t)
    na, nu = u_val.shape
    f1 = np.empty_like(u_val)
    f2 = np.empty_like(u_val)
    f0 = np.empty_like(u_val)
    K.adi_apply_ops(u_val, ops.l1, ops.d1, ops.u1, l2, d2, u2, ops.mixed,
                    ops.wam, ops.wap, ops.wum, ops.wup, f1, f2, f0)
    y0 = u_val + dt * (f0 + f1 + f2)
    y1 = np.empty_like(u_val)
    K.adi_solve_axis0(y0 - theta_scheme * dt * f1, ops.l1, ops.d1, ops.u1,
                      theta_scheme * dt, y1)
    y2 = np.empty_like(u_val)
    K.adi_solve_axis1(y1 - theta_scheme * dt * f2, l2, d2, u2,
                      theta_scheme * dt, y2)
    return y2


def price_adi(params, contract, mode: str, na: int, nu: int,
              steps_per_year: int,
              capture_event: Optional[int] = None,
              readout_scales: Tuple[float, ...] = (),
              a_max_scale: float = 1.0) -> PricingResult:
    """Backward ADI valuation on the 2D mesh.

    Modes mirror the hybrid solver: "static" (CF/YD), "dynamic" (CF) and
    "surrender" (YD).  The root value is read at (s0, v0 or r0) by
    bilinear interpolation.
    """
    if mode not in ("static", "dynamic", "surrender"):
        raise ValueError(f"unknown mode {mode!r}")
    is_yd = isinstance(contract, YDContractSpec)
    if mode == "dynamic" and is_yd:
        raise ValueError("dynamic withdrawal applies to the CF contract")
    if mode == "surrender" and not is_yd:
        raise ValueError("surrender applies to the YD contract")
    mesh = build_meshes(params, contract, na, nu, a_max_scale)
    ops = _Operators(params, contract, mesh)
    premium = contract.premium
    g = contract.g if not is_yd else contract.g_hat
    kappa = contract.kappa
    t2 = contract.t2
    etimes = contract.event_times()
    n_steps = int(round(t2 * steps_per_year))
    dt = t2 / n_steps
    elevels = np.rint(etimes / dt).astype(np.int64)
    if np.any(np.abs(elevels * dt - etimes) > 1e-9):
        raise ValueError("event times must land on time steps")
    event_of_level = {int(l): i + 1 for i, l in enumerate(elevels)}
    reset_level = None
    if is_yd and contract.t1 > 0:
        reset_level = int(round(contract.t1 / dt))

    nb1 = 1
    if mode == "dynamic":
        nlev = premium / g
        if abs(nlev - round(nlev)) > 1e-9:
            raise ValueError("premium must be a multiple of G for dynamic mode")
        nb1 = int(round(nlev)) + 1

    a = mesh.a
    na_, nu_ = mesh.shape
    vals = np.empty((nb1, na_, nu_))
    if mode == "dynamic":
        for nb in range(nb1):
            b = nb * g
            floor_val = (1.0 - kappa) * b + kappa * min(g, b)
            vals[nb] = np.maximum(a[:, None], floor_val)
    else:
        vals[0] = g + np.maximum(a[:, None] - g, 0.0)

    capture = None
    hw_model = mesh.model == "hw"
    for n in range(n_steps - 1, -1, -1):
        theta_t = float(params.theta_t(n * dt)) if hw_model else None
        for nb in range(nb1):
            vals[nb] = douglas_step(vals[nb], ops, dt, theta_t)
        ev = event_of_level.get(n)
        if ev is not None:
            if mode == "dynamic":
                record = capture_event is not None and ev == capture_event
                ws = np.zeros((nb1, na_, nu_), dtype=np.int8) if record else \
                    np.zeros((1, 1, 1), dtype=np.int8)
                out = np.empty_like(vals)
                K.adi_event_dynamic(vals, a, g, kappa, out, record, ws)
                vals = out
                if record:
                    capture = (n * dt, ws)
            else:
                for nb in range(nb1):
                    K.adi_event_static(vals[nb], a, g,
                                       mode == "surrender", kappa)
        if reset_level is not None and n == reset_level:
            vp = _interp_rows(a, vals[0], premium)
            scale = np.maximum(contract.c_t1, a)[:, None] / premium
            vals[0] = scale * vp[None, :]

    u0 = params.v0 if mesh.model == "heston" else params.r0
    value = _bilinear(mesh, vals[nb1 - 1], params.s0, u0)
    vl = _bilinear(mesh, vals[nb1 - 1], a[mesh.ia0 - 1], u0)
    vr = _bilinear(mesh, vals[nb1 - 1], a[mesh.ia0 + 1], u0)
    hm = params.s0 - a[mesh.ia0 - 1]
    hp = a[mesh.ia0 + 1] - params.s0
    delta = (-hp / (hm * (hm + hp)) * vl + (hp - hm) / (hm * hp) * value
             + hm / (hp * (hm + hp)) * vr)
    diagnostics = {"delta": float(delta), "na": na_, "nu": nu_,
                   "steps_per_year": steps_per_year}
    if readout_scales:
        diagnostics["values_at_scales"] = {
            s: _bilinear(mesh, vals[nb1 - 1], params.s0 * s, u0)
            for s in readout_scales}
    if capture is not None:
        diagnostics["strategy"] = {
            "time": capture[0], "withdrawals": capture[1],
            "account": a, "factor": mesh.u,
            "base_levels": np.arange(nb1) * g}
    return PricingResult(value=float(value), std_error=None, method="apde",
                         mode=mode, diagnostics=diagnostics)


def _interp_rows(a: np.ndarray, vals: np.ndarray, aq: float) -> np.ndarray:
    """Natural-spline read of vals(:, j) at account aq, for every column."""
    nu = vals.shape[1]
    out = np.empty(nu)
    mom = np.empty(len(a))
    scratch = np.empty(len(a))
    for j in range(nu):
        col = np.ascontiguousarray(vals[:, j])
        K.spline_moments_nonuniform(a, col, mom, scratch)
        out[j] = K.spline_eval_nonuniform(a, col, mom, aq)
    return out


def _bilinear(mesh: Mesh2D, vals: np.ndarray, aq: float, uq: float) -> float:
    ia = int(np.clip(np.searchsorted(mesh.a, aq) - 1, 0, len(mesh.a) - 2))
    iu = int(np.clip(np.searchsorted(mesh.u, uq) - 1, 0, len(mesh.u) - 2))
    ta = (aq - mesh.a[ia]) / (mesh.a[ia + 1] - mesh.a[ia])
    tu = (uq - mesh.u[iu]) / (mesh.u[iu + 1] - mesh.u[iu])
    return float((1 - ta) * (1 - tu) * vals[ia, iu]
                 + ta * (1 - tu) * vals[ia + 1, iu]
                 + (1 - ta) * tu * vals[ia, iu + 1]
                 + ta * tu * vals[ia + 1, iu + 1])
