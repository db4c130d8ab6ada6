"""Scenario generation: correlated fund/factor paths for the MC pricers.

Four samplers share one interface and one determinism contract:

* ``hybrid_heston_paths`` / ``hybrid_hw_paths`` walk the quadrinomial
  lattice for the variance (rate factor) and advance the log fund with the
  exponential splitting update, drawing one standard normal per fine step
  (plus a Bernoulli operator-splitting coin in the Heston case).
* ``standard_heston_paths`` samples exact noncentral-chi-square variance
  transitions and reuses the same splitting update for the fund.
* ``standard_hw_paths`` samples the factor, its time integral and the fund
  jointly from their exact Gaussian law, so one step per event interval
  suffices and the discount factors are exact.

Paths are generated in fixed-size chunks; chunk c uses an independent
Philox stream keyed by (master seed, c), so path i is bit-identical
regardless of chunk consumption order or thread count.  Antithetic mode
pairs adjacent paths (2i, 2i+1) and negates every Gaussian draw of the odd
member (lattice walks and Bernoulli coins are shared within a pair).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .lattice import Lattice
from .models import HestonParams, HullWhiteParams

__all__ = [
    "ScenarioSet",
    "CHUNK_PATHS",
    "hybrid_heston_paths",
    "hybrid_hw_paths",
    "standard_heston_paths",
    "standard_hw_paths",
    "scenario_chunks",
]

CHUNK_PATHS = 1 << 16


@dataclass
class ScenarioSet:
    """A batch of discretised paths sampled on a reporting grid.

    ``s`` holds the fund, ``u`` the second factor (variance for Heston,
    short rate for BSHW) and ``disc[:, i]`` the integral of the short rate
    over [times[i], times[i+1]].
    """

    model: str
    times: np.ndarray
    s: np.ndarray
    u: np.ndarray
    disc: np.ndarray
    seed: int
    antithetic: bool = False

    @property
    def n_paths(self) -> int:
        return self.s.shape[0]

    def _col(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t))
        if idx >= len(self.times) or abs(self.times[idx] - t) > 1e-9:
            raise ValueError(f"time {t} is not on the scenario grid")
        return idx

    def integrated_rate(self, t1: float, t2: float) -> np.ndarray:
        """Per-path integral of the short rate over [t1, t2] (grid times)."""
        i1, i2 = self._col(t1), self._col(t2)
        if i2 < i1:
            raise ValueError("t2 must be >= t1")
        return self.disc[:, i1:i2].sum(axis=1)


def _rng_for_chunk(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed, chunk_index)))


def _chunk_ranges(n_paths: int, first_path: int = 0):
    if first_path % CHUNK_PATHS:
        raise ValueError("first_path must sit on a chunk boundary")
    for start in range(0, n_paths, CHUNK_PATHS):
        yield (first_path + start) // CHUNK_PATHS, start, min(CHUNK_PATHS, n_paths - start)


def _normals(rng, n: int, antithetic: bool) -> np.ndarray:
    """n standard normals; antithetic pairs (2i, 2i+1) are negations."""
    if not antithetic:
        return rng.standard_normal(n)
    half = (n + 1) // 2
    z = rng.standard_normal(half)
    out = np.empty(2 * half)
    out[0::2] = z
    out[1::2] = -z
    return out[:n]


def _shared_uniforms(rng, n: int, antithetic: bool) -> np.ndarray:
    """Uniforms shared within an antithetic pair (walks/coins coincide)."""
    if not antithetic:
        return rng.random(n)
    half = (n + 1) // 2
    u = rng.random(half)
    return np.repeat(u, 2)[:n]


def _validate_grid(report_times: np.ndarray, dt: float) -> np.ndarray:
    """Fine steps per reporting interval; each must be an exact multiple."""
    times = np.asarray(report_times, dtype=float)
    if times[0] != 0.0:
        raise ValueError("reporting grid must start at 0")
    steps = np.diff(times) / dt
    rounded = np.round(steps).astype(np.int64)
    if np.any(np.abs(steps - rounded) > 1e-9) or np.any(rounded < 1):
        raise ValueError("reporting times must sit on the fine grid")
    return rounded


def _level_tables(lat: Lattice, n_levels: int):
    """Per-level (lo, values, rel-targets, probs) for the lattice walk."""
    tables = []
    for n in range(n_levels):
        lo, hi = int(lat.lo[n]), int(lat.hi[n])
        tgt, prb = lat.transitions(n, lo, hi)
        vals_next = lat.values(n + 1, int(lat.lo[n + 1]), int(lat.hi[n + 1]))
        tables.append((lo, int(lat.lo[n + 1]),
                       np.ascontiguousarray(vals_next),
                       np.ascontiguousarray(tgt),
                       np.ascontiguousarray(prb)))
    return tables


def hybrid_heston_paths(lat: Lattice, params: HestonParams, n_paths: int,
                        report_times, seed: int, antithetic: bool = False,
                        first_path: int = 0) -> ScenarioSet:
    """Tree-walk variance scenario plus split log-fund update (Heston)."""
    times = np.asarray(report_times, dtype=float)
    subs = _validate_grid(times, lat.dt)
    if int(subs.sum()) > lat.n_levels:
        raise ValueError("lattice horizon shorter than the reporting grid")
    nt = len(times)
    s = np.empty((n_paths, nt))
    u_out = np.empty((n_paths, nt))
    dt = lat.dt
    r, k, theta, omega, rho = params.r, params.k, params.theta, params.omega, params.rho
    c = rho / omega
    var_coef = (1.0 - rho * rho) * dt
    tables = _level_tables(lat, int(subs.sum()))

    for ci, start, n in _chunk_ranges(n_paths, first_path):
        rng = _rng_for_chunk(seed, ci)
        j = np.zeros(n, dtype=np.int64)
        v = np.full(n, params.v0)
        ln_s = np.full(n, math.log(params.s0))
        s[start:start + n, 0] = params.s0
        u_out[start:start + n, 0] = params.v0
        level = 0
        drift0 = (r - c * k * theta) * dt
        ck_half_dt = (c * k - 0.5) * 0.5 * dt
        for col in range(1, nt):
            for _ in range(int(subs[col - 1])):
                uu = _shared_uniforms(rng, n, antithetic)
                zz = _normals(rng, n, antithetic)
                coin = _shared_uniforms(rng, n, antithetic) < 0.5
                lo, next_lo, vals_next, tgt, prb = tables[level]
                K.hybrid_step_heston(j, v, ln_s, uu, zz, coin, lo, next_lo,
                                     vals_next, tgt, prb, drift0, ck_half_dt,
                                     c, var_coef)
                level += 1
            s[start:start + n, col] = np.exp(ln_s)
            u_out[start:start + n, col] = v
    disc = np.broadcast_to(np.diff(times) * r, (n_paths, nt - 1)).copy()
    return ScenarioSet(model="heston", times=times, s=s, u=u_out, disc=disc,
                       seed=seed, antithetic=antithetic)


def hybrid_hw_paths(lat: Lattice, params: HullWhiteParams, n_paths: int,
                    report_times, seed: int, antithetic: bool = False,
                    first_path: int = 0) -> ScenarioSet:
    """Tree-walk rate-factor scenario plus log-fund update (BSHW).

    Discount exponents are trapezoidal integrals of the short rate on the
    fine grid.
    """
    times = np.asarray(report_times, dtype=float)
    subs = _validate_grid(times, lat.dt)
    if int(subs.sum()) > lat.n_levels:
        raise ValueError("lattice horizon shorter than the reporting grid")
    nt = len(times)
    s = np.empty((n_paths, nt))
    u_out = np.empty((n_paths, nt))
    disc = np.empty((n_paths, nt - 1))
    dt = lat.dt
    sigma, k, omega, rho = params.sigma, params.k, params.omega, params.rho
    rho_bar = math.sqrt(1.0 - rho * rho)
    n_fine = int(subs.sum())
    beta_fine = params.beta(np.arange(n_fine + 1) * dt)
    tables = _level_tables(lat, n_fine)

    for ci, start, n in _chunk_ranges(n_paths, first_path):
        rng = _rng_for_chunk(seed, ci)
        j = np.zeros(n, dtype=np.int64)
        x = np.zeros(n)
        ln_s = np.full(n, math.log(params.s0))
        s[start:start + n, 0] = params.s0
        u_out[start:start + n, 0] = beta_fine[0]
        level = 0
        for col in range(1, nt):
            acc = np.zeros(n)
            for _ in range(int(subs[col - 1])):
                uu = _shared_uniforms(rng, n, antithetic)
                zz = _normals(rng, n, antithetic)
                lo, next_lo, vals_next, tgt, prb = tables[level]
                K.hybrid_step_hw(j, x, ln_s, acc, uu, zz, lo, next_lo,
                                 vals_next, tgt, prb, beta_fine[level],
                                 beta_fine[level + 1], omega, sigma, rho,
                                 math.sqrt(dt) * rho_bar, k * dt, 0.5 * dt,
                                 -0.5 * sigma * sigma * dt)
                level += 1
            s[start:start + n, col] = np.exp(ln_s)
            u_out[start:start + n, col] = omega * x + beta_fine[level]
            disc[start:start + n, col - 1] = acc
    return ScenarioSet(model="hw", times=times, s=s, u=u_out, disc=disc,
                       seed=seed, antithetic=antithetic)


def standard_heston_paths(params: HestonParams, n_paths: int, report_times,
                          steps_per_year: int, seed: int,
                          antithetic: bool = False,
                          first_path: int = 0) -> ScenarioSet:
    """Exact variance transitions (noncentral chi-square) plus the split
    log-fund update."""
    times = np.asarray(report_times, dtype=float)
    nt = len(times)
    s = np.empty((n_paths, nt))
    u_out = np.empty((n_paths, nt))
    r, k, theta, omega, rho = params.r, params.k, params.theta, params.omega, params.rho
    c = rho / omega
    d = 4.0 * k * theta / omega ** 2

    for ci, start, n in _chunk_ranges(n_paths, first_path):
        rng = _rng_for_chunk(seed, ci)
        v = np.full(n, params.v0)
        ln_s = np.full(n, math.log(params.s0))
        s[start:start + n, 0] = params.s0
        u_out[start:start + n, 0] = params.v0
        for col in range(1, nt):
            span = times[col] - times[col - 1]
            n_sub = max(1, int(round(span * steps_per_year)))
            dt = span / n_sub
            ekh = math.exp(-k * dt)
            cfac = omega ** 2 * (1.0 - ekh) / (4.0 * k)
            var_coef = (1.0 - rho * rho) * dt
            for _ in range(n_sub):
                lam = v * ekh / cfac
                if antithetic:
                    half = (n + 1) // 2
                    vh = cfac * _ncx2(rng, d, lam[0::2][:half])
                    v_next = np.repeat(vh, 2)[:n]
                else:
                    v_next = cfac * _ncx2(rng, d, lam)
                zz = _normals(rng, n, antithetic)
                coin = _shared_uniforms(rng, n, antithetic) < 0.5
                v_bar = np.where(coin, v, v_next)
                ln_s += ((r - c * k * theta) * dt
                         + (c * k - 0.5) * 0.5 * (v + v_next) * dt
                         + c * (v_next - v)
                         + np.sqrt(var_coef * v_bar) * zz)
                v = v_next
            s[start:start + n, col] = np.exp(ln_s)
            u_out[start:start + n, col] = v
    disc = np.broadcast_to(np.diff(times) * r, (n_paths, nt - 1)).copy()
    return ScenarioSet(model="heston", times=times, s=s, u=u_out, disc=disc,
                       seed=seed, antithetic=antithetic)


def _ncx2(rng, d: float, lam: np.ndarray) -> np.ndarray:
    out = np.empty_like(lam)
    pos = lam > 0
    if pos.any():
        out[pos] = rng.noncentral_chisquare(d, lam[pos])
    if (~pos).any():
        out[~pos] = 2.0 * rng.standard_gamma(d / 2.0, size=int((~pos).sum()))
    return out


def standard_hw_paths(params: HullWhiteParams, n_paths: int, report_times,
                      seed: int, antithetic: bool = False,
                      steps_per_year: int = 1,
                      first_path: int = 0) -> ScenarioSet:
    """Exact joint sampling of (factor, integrated factor, fund) for BSHW.

    The factor increment and its time integral are bivariate normal with
    known moments; the fund's driving Brownian increment is recovered
    exactly from them, so the scheme has no discretisation bias and one
    step per event interval suffices (``steps_per_year`` is accepted for
    interface parity and only refines the reporting of the rate).
    """
    times = np.asarray(report_times, dtype=float)
    nt = len(times)
    s = np.empty((n_paths, nt))
    u_out = np.empty((n_paths, nt))
    disc = np.empty((n_paths, nt - 1))
    sigma, k, omega, rho = params.sigma, params.k, params.omega, params.rho
    rho_bar = math.sqrt(1.0 - rho * rho)
    beta_t = params.beta(times)

    # per-interval moments of (X', I | X)
    spans = np.diff(times)
    H = np.exp(-k * spans)
    v_x = (1.0 - H ** 2) / (2.0 * k)
    v_i = (spans - 2.0 * (1.0 - H) / k + (1.0 - H ** 2) / (2.0 * k)) / k ** 2
    c_xi = (1.0 - H) ** 2 / (2.0 * k ** 2)
    b_int = np.array([params.beta_integral(times[i], times[i + 1])
                      for i in range(nt - 1)])

    for ci, start, n in _chunk_ranges(n_paths, first_path):
        rng = _rng_for_chunk(seed, ci)
        x = np.zeros(n)
        ln_s = np.full(n, math.log(params.s0))
        s[start:start + n, 0] = params.s0
        u_out[start:start + n, 0] = beta_t[0]
        for col in range(1, nt):
            i = col - 1
            z1 = _normals(rng, n, antithetic)
            z2 = _normals(rng, n, antithetic)
            z3 = _normals(rng, n, antithetic)
            sx = math.sqrt(v_x[i])
            x_next = x * H[i] + sx * z1
            cond_sd = math.sqrt(max(0.0, v_i[i] - c_xi[i] ** 2 / v_x[i]))
            integ = x * (1.0 - H[i]) / k + (c_xi[i] / sx) * z1 + cond_sd * z2
            dw = x_next - x + k * integ
            r_int = omega * integ + b_int[i]
            ln_s += (r_int - 0.5 * sigma ** 2 * spans[i]
                     + sigma * (rho * dw + rho_bar * math.sqrt(spans[i]) * z3))
            x = x_next
            s[start:start + n, col] = np.exp(ln_s)
            u_out[start:start + n, col] = omega * x + beta_t[col]
            disc[start:start + n, i] = r_int
    return ScenarioSet(model="hw", times=times, s=s, u=u_out, disc=disc,
                       seed=seed, antithetic=antithetic)


def scenario_chunks(sampler, n_paths: int, chunk_paths: int = 1 << 19,
                    ) -> Iterator[ScenarioSet]:
    """Stream scenario sets of at most ``chunk_paths`` paths.

    ``sampler(n, first_path)`` must honour the chunk-keyed determinism
    contract; the helpers here slice on CHUNK_PATHS boundaries so results
    are independent of ``chunk_paths``.
    """
    chunk_paths = max(CHUNK_PATHS, (chunk_paths // CHUNK_PATHS) * CHUNK_PATHS)
    start = 0
    while start < n_paths:
        n = min(chunk_paths, n_paths - start)
        yield sampler(n, start)
        start += n
