"""Recombining quadrinomial lattices for the variance and rate factors.

The Heston variance lattice discretises sqrt(v) on a shifted integer grid
with spacing omega*sqrt(h)/2 and matches the first three conditional
moments of the variance transition; when the resulting probabilities leave
[0, 1] a fixed sequence of nine node-replacement combinations is tried,
with a first-moment-exact two-moment split as the final fallback.

The Hull-White factor lattice places X(n, j) = (j - 1.5 n) * K with
K = sqrt((1 - exp(-2 k h)) / (2 k)) and uses closed-form probabilities
that reproduce the exact OU conditional mean and variance (and a zero
third central moment).

Both lattices are mean reverting, so the visit probability of most nodes
is exactly zero; per-level active windows are computed once at build time
and pricing only ever touches active nodes.  For large level counts the
node data is generated on demand from per-value-key transition tables
instead of being stored, which keeps memory flat.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import _kernels as K
from ._kernels import CODE_DEGENERATE, CODE_THREE_MOMENT, CODE_TWO_MOMENT
from .models import HestonParams, HullWhiteParams

__all__ = [
    "HestonMoments",
    "Lattice",
    "heston_node_value",
    "heston_moments",
    "match_three_moments",
    "fallback_two_moment",
    "select_heston_transition",
    "build_heston_lattice",
    "build_hw_lattice",
    "build_chain_lattice",
    "curtail",
    "dump_lattice_csv",
]

# keep full per-level visit probabilities only below this total node count
_VISIT_STORE_LIMIT = 4_000_000


@dataclass(frozen=True)
class HestonMoments:
    """First three conditional moments of v_{t+h} given v_t, plus psi(h)."""

    m1: float
    m2: float
    m3: float
    psi: float


def heston_moments(params: HestonParams, v: float, h: float) -> HestonMoments:
    """Conditional moments of the variance process over a step of length h."""
    if v < 0 or h <= 0:
        raise ValueError("need v >= 0 and h > 0")
    k, theta, omega = params.k, params.theta, params.omega
    ekh = math.exp(-k * h)
    psi = (1.0 - ekh) / k
    thk = theta * k
    m1 = v * ekh + thk * psi
    m2 = m1 * m1 + omega ** 2 * psi * (0.5 * thk * psi + v * ekh)
    m3 = m1 * m2 + omega ** 2 * psi * (
        2.0 * v * v * ekh * ekh
        + psi * (thk + 0.5 * omega ** 2) * (3.0 * v * ekh + thk * psi)
    )
    return HestonMoments(m1=m1, m2=m2, m3=m3, psi=psi)


def _j_shift(n: int, q_index: float) -> int:
    return max(0, math.floor(1.5 * n - q_index))


def heston_node_value(params: HestonParams, h: float, n: int, j: int) -> float:
    """Variance value of node (n, j); index range is 0..3n - j_n."""
    step = params.omega * math.sqrt(h) / 2.0
    sqv0 = math.sqrt(params.v0)
    jn = _j_shift(n, sqv0 / step)
    if not 0 <= j <= 3 * n - jn:
        raise IndexError(f"node index {j} outside level {n} (size {3 * n - jn + 1})")
    x = sqv0 + (j + jn - 1.5 * n) * step
    return max(0.0, x) ** 2


def match_three_moments(values, moments: HestonMoments) -> Optional[np.ndarray]:
    """Probabilities over 4 candidate values matching three moments.

    Returns None when the linear system is singular or any probability
    falls outside [0, 1] (both count as failure).
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != (4,):
        raise ValueError("exactly four candidate values required")
    out = np.empty(4)
    ok = K.solve4_moment_probs(vals[0], vals[1], vals[2], vals[3],
                               moments.m1, moments.m2, moments.m3, out)
    return out if ok else None


def fallback_two_moment(values, m1: float) -> np.ndarray:
    """5/8-3/8 split over the straddling pairs (A, B) and (C, D).

    ``values`` is (A, B, C, D) with A > B, C > D and m1 inside both
    brackets; the returned probabilities reproduce m1 exactly.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != (4,):
        raise ValueError("exactly four candidate values required")
    out = np.empty(4)
    ok = K.two_moment_probs(vals[0], vals[1], vals[2], vals[3], m1, out)
    if not ok:
        raise ValueError("m1 is not bracketed by both candidate pairs")
    return out


def select_heston_transition(next_values, v: float, moments: HestonMoments
                             ) -> Tuple[np.ndarray, np.ndarray, int]:
    """Pick four target nodes and probabilities among ``next_values``.

    Returns (indices, probabilities, code) where code is 0 for a
    three-moment match, 1 for the two-moment fallback and 2 for the
    degenerate nearest-node fallback.
    """
    vals = np.ascontiguousarray(next_values, dtype=float)
    idx = np.empty(4, dtype=np.int64)
    prb = np.empty(4)
    code = K.select_transition(vals, moments.m1, moments.m2, moments.m3, idx, prb)
    return idx, prb, int(code)


@dataclass
class Lattice:
    """A built factor lattice with per-level active windows.

    ``lo``/``hi`` delimit (inclusively) the nodes reachable from the root
    with positive accumulated probability; everything outside is curtailed.
    Node values and transitions are materialised on demand.
    """

    kind: str                     # "heston" | "hw" | "chain"
    dt: float
    n_levels: int
    lo: np.ndarray
    hi: np.ndarray
    # Heston bits
    j_shift: np.ndarray = field(default=None, repr=False)
    sqv0: float = 0.0
    step: float = 0.0
    ekh: float = 0.0
    psi: float = 0.0
    thk: float = 0.0
    om2: float = 0.0
    memo_qmin: int = 0
    memo_tgt: np.ndarray = field(default=None, repr=False)
    memo_prb: np.ndarray = field(default=None, repr=False)
    memo_code: np.ndarray = field(default=None, repr=False)
    # Hull-White bits
    K: float = 0.0
    H: float = 0.0
    # diagnostics
    n_three_moment: int = 0
    n_two_moment: int = 0
    n_degenerate: int = 0
    visit: Optional[List[np.ndarray]] = field(default=None, repr=False)

    # -- geometry ----------------------------------------------------------
    def level_size(self, n: int) -> int:
        if self.kind == "heston":
            return 3 * n - int(self.j_shift[n]) + 1
        if self.kind == "hw":
            return 3 * n + 1
        return 1

    def values(self, n: int, lo: Optional[int] = None, hi: Optional[int] = None
               ) -> np.ndarray:
        """Factor values of nodes lo..hi (defaults: the whole level)."""
        if lo is None:
            lo = 0
        if hi is None:
            hi = self.level_size(n) - 1
        j = np.arange(lo, hi + 1)
        if self.kind == "heston":
            x = self.sqv0 + (j + int(self.j_shift[n]) - 1.5 * n) * self.step
            return np.maximum(0.0, x) ** 2
        if self.kind == "hw":
            return (j - 1.5 * n) * self.K
        return np.zeros(hi - lo + 1)

    def key_of(self, n: int, j) -> np.ndarray:
        """Integer value key of node (n, j): twice the sqrt/X grid offset."""
        if self.kind == "heston":
            return 2 * (np.asarray(j) + int(self.j_shift[n])) - 3 * n
        if self.kind == "hw":
            return 2 * np.asarray(j) - 3 * n
        return np.zeros_like(np.asarray(j))

    def value_of_key(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.kind == "heston":
            return np.maximum(0.0, self.sqv0 + 0.5 * q * self.step) ** 2
        if self.kind == "hw":
            return 0.5 * q * self.K
        return np.zeros_like(q)

    # -- transitions -------------------------------------------------------
    def transitions(self, n: int, lo: Optional[int] = None,
                    hi: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(targets, probabilities) for nodes lo..hi of level n.

        Targets are absolute node indices at level n+1.
        """
        if n >= self.n_levels:
            raise IndexError("no transitions from the last level")
        if lo is None:
            lo = 0
        if hi is None:
            hi = self.level_size(n) - 1
        w = hi - lo + 1
        tgt = np.empty((w, 4), dtype=np.int64)
        prb = np.empty((w, 4))
        if self.kind == "heston":
            code = np.empty(w, dtype=np.int8)
            K.heston_level_transitions(
                n, int(self.j_shift[n]), int(self.j_shift[n + 1]), lo, hi,
                self.sqv0, self.step, self.ekh, self.psi, self.thk, self.om2,
                3 * (n + 1) - int(self.j_shift[n + 1]),
                self.memo_qmin, self.memo_tgt, self.memo_prb, self.memo_code,
                tgt, prb, code,
            )
        elif self.kind == "hw":
            K.hw_level_transitions(n, lo, hi, self.K, self.H, tgt, prb)
        else:
            tgt[:] = 0
            prb[:] = 0.0
            prb[:, 0] = 1.0
        return tgt, prb

    # -- visit probabilities -----------------------------------------------
    def visit_probs(self, n: int) -> np.ndarray:
        """Visit probabilities over the full level (zeros outside the window)."""
        if self.visit is not None:
            out = np.zeros(self.level_size(n))
            out[self.lo[n]:self.hi[n] + 1] = self.visit[n]
            return out
        mass = np.ones(1)
        lo = 0
        for m in range(n):
            tgt, prb = self.transitions(m, self.lo[m], self.hi[m])
            win = mass[self.lo[m] - lo: self.hi[m] - lo + 1]
            nlo, nhi = self.lo[m + 1], self.hi[m + 1]
            mass = K.forward_mass(win, tgt, prb, self.lo[m], nlo, nhi - nlo + 1)
            lo = nlo
        out = np.zeros(self.level_size(n))
        out[lo:lo + mass.shape[0]] = mass
        return out


def curtail(lattice: Lattice) -> Tuple[np.ndarray, np.ndarray]:
    """Per-level active windows [lo, hi] of nodes with nonzero visit mass."""
    return lattice.lo, lattice.hi


def _forward_pass(lat: Lattice, store_visit: bool) -> None:
    """Compute active windows (and optionally visit probabilities).

    For Heston lattices the per-key transition memo is grown alongside the
    active window so that every carried key stays addressable.
    """
    n = lat.n_levels
    lo = np.zeros(n + 1, dtype=np.int64)
    hi = np.zeros(n + 1, dtype=np.int64)
    lat.lo, lat.hi = lo, hi
    visit: Optional[List[np.ndarray]] = [] if store_visit else None
    mass = np.ones(1)
    total = 0
    for m in range(n + 1):
        if visit is not None:
            visit.append(mass)
        total += mass.shape[0]
        if visit is not None and total > _VISIT_STORE_LIMIT:
            visit = None
        if m == n:
            break
        if lat.kind == "heston":
            _ensure_memo(lat, int(lat.key_of(m, int(lo[m]))) - 32,
                         int(lat.key_of(m, int(hi[m]))) + 32)
        tgt, prb = lat.transitions(m, int(lo[m]), int(hi[m]))
        if lat.kind == "heston":
            codes = _transition_codes(lat, m, int(lo[m]), int(hi[m]), tgt, prb)
            lat.n_three_moment += int(np.sum(codes == CODE_THREE_MOMENT))
            lat.n_two_moment += int(np.sum(codes == CODE_TWO_MOMENT))
            lat.n_degenerate += int(np.sum(codes == CODE_DEGENERATE))
        live = prb > 0.0
        nlo = int(tgt[live].min())
        nhi = int(tgt[live].max())
        nmass = K.forward_mass(mass, tgt, prb, int(lo[m]), nlo, nhi - nlo + 1)
        nz = np.nonzero(nmass)[0]
        lo[m + 1], hi[m + 1] = nlo + int(nz[0]), nlo + int(nz[-1])
        mass = nmass[nz[0]:nz[-1] + 1]
    lat.visit = visit


def _transition_codes(lat: Lattice, n: int, lo: int, hi: int,
                      tgt: np.ndarray, prb: np.ndarray) -> np.ndarray:
    """Re-derive outcome codes for diagnostics (from the memo table)."""
    q = lat.key_of(n, np.arange(lo, hi + 1))
    qi = q - lat.memo_qmin
    codes = np.full(qi.shape, CODE_THREE_MOMENT, dtype=np.int8)
    ok = (qi >= 0) & (qi < lat.memo_code.shape[0])
    codes[ok] = lat.memo_code[qi[ok]]
    # nodes not in the memo (edges): degenerate iff all mass on one target
    unknown = ~ok | (codes < 0)
    if unknown.any():
        one = (prb[unknown] == 1.0).any(axis=1)
        codes[unknown] = np.where(one, CODE_DEGENERATE, CODE_THREE_MOMENT)
    return codes


def _ensure_memo(lat: Lattice, qmin: int, qmax: int) -> None:
    """Grow the per-key transition memo so [qmin, qmax] is addressable."""
    if lat.memo_tgt is not None and lat.memo_qmin <= qmin \
            and qmax < lat.memo_qmin + lat.memo_code.shape[0]:
        return
    new_qmin = min(qmin, lat.memo_qmin if lat.memo_tgt is not None else qmin)
    new_qmax = max(qmax, (lat.memo_qmin + lat.memo_code.shape[0] - 1)
                   if lat.memo_tgt is not None else qmax)
    span = new_qmax - new_qmin + 1 + 64
    tgt = np.full((span, 4), K.ZKEY, dtype=np.int64)
    prb = np.zeros((span, 4))
    code = np.full(span, -1, dtype=np.int8)
    if lat.memo_tgt is not None:
        off = lat.memo_qmin - new_qmin
        old = lat.memo_code.shape[0]
        tgt[off:off + old] = lat.memo_tgt
        prb[off:off + old] = lat.memo_prb
        code[off:off + old] = lat.memo_code
    lat.memo_qmin = new_qmin
    lat.memo_tgt, lat.memo_prb, lat.memo_code = tgt, prb, code


def build_heston_lattice(params: HestonParams, T: float, N: int,
                         store_visit: str = "auto") -> Lattice:
    """Build the N-level variance lattice over [0, T]."""
    if N < 1 or T <= 0:
        raise ValueError("need N >= 1 and T > 0")
    h = T / N
    step = params.omega * math.sqrt(h) / 2.0
    sqv0 = math.sqrt(params.v0)
    ekh = math.exp(-params.k * h)
    psi = (1.0 - ekh) / params.k
    jn = np.array([_j_shift(n, sqv0 / step) for n in range(N + 1)], dtype=np.int64)
    lat = Lattice(
        kind="heston", dt=h, n_levels=N,
        lo=np.zeros(N + 1, dtype=np.int64), hi=np.zeros(N + 1, dtype=np.int64),
        j_shift=jn, sqv0=sqv0, step=step, ekh=ekh, psi=psi,
        thk=params.theta * params.k, om2=params.omega ** 2,
    )
    _ensure_memo(lat, -int(2 * sqv0 / step) - 16, 3 * min(N, 64) + 16)
    _forward_pass(lat, store_visit in ("auto", "always"))
    return lat


def build_hw_lattice(params: HullWhiteParams, T: float, N: int,
                     store_visit: str = "auto") -> Lattice:
    """Build the N-level OU factor lattice over [0, T]."""
    if N < 1 or T <= 0:
        raise ValueError("need N >= 1 and T > 0")
    h = T / N
    k = params.k
    lat = Lattice(
        kind="hw", dt=h, n_levels=N,
        lo=np.zeros(N + 1, dtype=np.int64), hi=np.zeros(N + 1, dtype=np.int64),
        K=math.sqrt((1.0 - math.exp(-2.0 * k * h)) / (2.0 * k)),
        H=math.exp(-k * h),
    )
    _forward_pass(lat, store_visit == "always" or store_visit == "auto")
    return lat


def build_chain_lattice(T: float, N: int) -> Lattice:
    """Degenerate one-node-per-level lattice (deterministic factor)."""
    if N < 1 or T <= 0:
        raise ValueError("need N >= 1 and T > 0")
    lat = Lattice(
        kind="chain", dt=T / N, n_levels=N,
        lo=np.zeros(N + 1, dtype=np.int64), hi=np.zeros(N + 1, dtype=np.int64),
    )
    lat.visit = [np.ones(1) for _ in range(N + 1)]
    return lat


def dump_lattice_csv(lat: Lattice, path: str, max_levels: Optional[int] = None
                     ) -> None:
    """Debug dump: level, index, value, four (target, prob) pairs, visit prob."""
    n_out = lat.n_levels if max_levels is None else min(max_levels, lat.n_levels)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["level", "index", "value",
                     "t0", "p0", "t1", "p1", "t2", "p2", "t3", "p3",
                     "visit_prob"])
        for n in range(n_out + 1):
            lo, hi = int(lat.lo[n]), int(lat.hi[n])
            vals = lat.values(n, lo, hi)
            vis = lat.visit_probs(n)[lo:hi + 1]
            if n < lat.n_levels:
                tgt, prb = lat.transitions(n, lo, hi)
            else:
                tgt = np.zeros((hi - lo + 1, 4), dtype=np.int64)
                prb = np.zeros((hi - lo + 1, 4))
            for row, j in enumerate(range(lo, hi + 1)):
                wr.writerow([n, j, repr(float(vals[row])),
                             tgt[row, 0], repr(float(prb[row, 0])),
                             tgt[row, 1], repr(float(prb[row, 1])),
                             tgt[row, 2], repr(float(prb[row, 2])),
                             tgt[row, 3], repr(float(prb[row, 3])),
                             repr(float(vis[row]))])
