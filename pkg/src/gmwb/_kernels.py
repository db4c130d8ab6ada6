"""Compiled numerical kernels (numba) shared by the lattice and PDE engines.

Everything here is deterministic: parallel loops only ever write disjoint
output rows, so results are bit-identical for any thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# Sentinel target key for the clamped zero-variance node of a Heston level.
ZKEY = -(2 ** 40)

# Transition selection outcome codes.
CODE_THREE_MOMENT = 0
CODE_TWO_MOMENT = 1
CODE_DEGENERATE = 2


# ---------------------------------------------------------------------------
# moment matching
# ---------------------------------------------------------------------------

@njit(cache=True)
def solve4_moment_probs(x0, x1, x2, x3, m1, m2, m3, out):
    """Solve the 4x4 system {sum p = 1, sum p x^k = M_k, k=1..3}.

    The candidates are shifted by M1 and scaled by the largest offset before
    elimination (partial pivoting) to control conditioning.  Returns True if
    the solve succeeded with all probabilities in [0, 1].
    """
    s = max(max(abs(x0 - m1), abs(x1 - m1)), max(abs(x2 - m1), abs(x3 - m1)))
    if s <= 0.0 or not np.isfinite(s):
        return False
    z = np.empty(4)
    z[0] = (x0 - m1) / s
    z[1] = (x1 - m1) / s
    z[2] = (x2 - m1) / s
    z[3] = (x3 - m1) / s
    c2 = (m2 - m1 * m1) / (s * s)
    c3 = (m3 - 3.0 * m1 * m2 + 2.0 * m1 ** 3) / (s * s * s)

    a = np.empty((4, 5))
    for j in range(4):
        a[0, j] = 1.0
        a[1, j] = z[j]
        a[2, j] = z[j] * z[j]
        a[3, j] = z[j] * z[j] * z[j]
    a[0, 4] = 1.0
    a[1, 4] = 0.0
    a[2, 4] = c2
    a[3, 4] = c3

    for col in range(4):
        piv = col
        big = abs(a[col, col])
        for row in range(col + 1, 4):
            if abs(a[row, col]) > big:
                big = abs(a[row, col])
                piv = row
        if big < 1e-300:
            return False
        if piv != col:
            for j in range(5):
                tmp = a[col, j]
                a[col, j] = a[piv, j]
                a[piv, j] = tmp
        for row in range(col + 1, 4):
            f = a[row, col] / a[col, col]
            for j in range(col, 5):
                a[row, j] -= f * a[col, j]

    p = np.empty(4)
    for row in range(3, -1, -1):
        acc = a[row, 4]
        for j in range(row + 1, 4):
            acc -= a[row, j] * p[j]
        p[row] = acc / a[row, row]

    # residuals of the scaled system
    r0 = p[0] + p[1] + p[2] + p[3] - 1.0
    r1 = p[0] * z[0] + p[1] * z[1] + p[2] * z[2] + p[3] * z[3]
    r2 = p[0] * z[0] ** 2 + p[1] * z[1] ** 2 + p[2] * z[2] ** 2 + p[3] * z[3] ** 2 - c2
    r3 = p[0] * z[0] ** 3 + p[1] * z[1] ** 3 + p[2] * z[2] ** 3 + p[3] * z[3] ** 3 - c3
    tol = 1e-10 * (1.0 + abs(c2) + abs(c3))
    if abs(r0) > tol or abs(r1) > tol or abs(r2) > tol or abs(r3) > tol:
        return False

    for j in range(4):
        if not (0.0 <= p[j] <= 1.0):
            return False
        out[j] = p[j]
    return True


@njit(cache=True)
def two_moment_probs(xa, xb, xc, xd, m1, out):
    """First-moment-exact 5/8-3/8 split over the two straddling pairs."""
    if not (xa > xb and xc > xd):
        return False
    if not (xb <= m1 <= xa and xd <= m1 <= xc):
        return False
    pab = (m1 - xb) / (xa - xb)
    pcd = (m1 - xd) / (xc - xd)
    out[0] = 0.625 * pab
    out[1] = 0.625 * (1.0 - pab)
    out[2] = 0.375 * pcd
    out[3] = 0.375 * (1.0 - pcd)
    return True


@njit(cache=True)
def select_transition(vals, m1, m2, m3, out_idx, out_p):
    """Choose 4 target nodes among ``vals`` (ascending) and probabilities.

    Tries the straddling quadruple (D, B, A, C) around M1 first, then the
    nine replacement combinations (A or C moved up to E, B or D moved down
    to F; D falls back to E when no node exists below it), and finally the
    two-moment 5/8-3/8 split.  Returns an outcome code.
    """
    L = vals.shape[0]
    # b = largest index with vals[b] <= m1
    b = -1
    for i in range(L):
        if vals[i] <= m1:
            b = i
        else:
            break
    i_d = b - 1
    i_b = b
    i_a = b + 1
    i_c = b + 2
    # clamp the quadruple into [0, L-1] by a common shift
    if i_d < 0:
        sh = -i_d
        i_d += sh
        i_b += sh
        i_a += sh
        i_c += sh
    if i_c > L - 1:
        sh = i_c - (L - 1)
        i_d -= sh
        i_b -= sh
        i_a -= sh
        i_c -= sh
    if i_d < 0:
        # fewer than 4 candidates: degenerate, all mass on nearest node
        best = 0
        dist = abs(vals[0] - m1)
        for i in range(1, L):
            if abs(vals[i] - m1) < dist:
                dist = abs(vals[i] - m1)
                best = i
        out_idx[0] = best
        out_idx[1] = best
        out_idx[2] = best
        out_idx[3] = best
        out_p[0] = 1.0
        out_p[1] = 0.0
        out_p[2] = 0.0
        out_p[3] = 0.0
        return CODE_DEGENERATE

    has_e = i_c + 1 <= L - 1
    i_e = i_c + 1 if has_e else i_c
    has_f = i_d - 1 >= 0
    i_f = i_d - 1 if has_f else i_d

    # combinations in fixed order: slots are (A, B, C, D)
    for combo in range(9):
        ia = i_a
        ib = i_b
        ic = i_c
        id_ = i_d
        ok = True
        if combo == 1:  # A -> E
            if not has_e:
                ok = False
            ia = i_e
        elif combo == 2:  # B -> F
            if not has_f:
                ok = False
            ib = i_f
        elif combo == 3:  # C -> E
            if not has_e:
                ok = False
            ic = i_e
        elif combo == 4:  # D -> F (or E when no node below D exists)
            if has_f:
                id_ = i_f
            elif has_e:
                id_ = i_e
            else:
                ok = False
        elif combo == 5:  # A -> E, B -> F
            if not (has_e and has_f):
                ok = False
            ia = i_e
            ib = i_f
        elif combo == 6:  # A -> E, D -> F
            if not (has_e and has_f):
                ok = False
            ia = i_e
            id_ = i_f
        elif combo == 7:  # C -> E, B -> F
            if not (has_e and has_f):
                ok = False
            ic = i_e
            ib = i_f
        elif combo == 8:  # C -> E, D -> F
            if not (has_e and has_f):
                ok = False
            ic = i_e
            id_ = i_f
        if not ok:
            continue
        # indices must be distinct
        if ia == ib or ia == ic or ia == id_ or ib == ic or ib == id_ or ic == id_:
            continue
        if solve4_moment_probs(vals[ia], vals[ib], vals[ic], vals[id_],
                               m1, m2, m3, out_p):
            out_idx[0] = ia
            out_idx[1] = ib
            out_idx[2] = ic
            out_idx[3] = id_
            return CODE_THREE_MOMENT

    # widened support search (lexicographic, deterministic): near the
    # variance floor the canonical combinations can all fail while a
    # slightly more asymmetric support still matches all three moments
    for ia in range(L - 3):
        for ib in range(ia + 1, L - 2):
            for ic in range(ib + 1, L - 1):
                for id_ in range(ic + 1, L):
                    if solve4_moment_probs(vals[ia], vals[ib], vals[ic],
                                           vals[id_], m1, m2, m3, out_p):
                        out_idx[0] = ia
                        out_idx[1] = ib
                        out_idx[2] = ic
                        out_idx[3] = id_
                        return CODE_THREE_MOMENT

    if two_moment_probs(vals[i_a], vals[i_b], vals[i_c], vals[i_d], m1, out_p):
        out_idx[0] = i_a
        out_idx[1] = i_b
        out_idx[2] = i_c
        out_idx[3] = i_d
        return CODE_TWO_MOMENT

    # last resort: all mass on the node nearest to M1
    best = i_b
    if abs(vals[i_a] - m1) < abs(vals[best] - m1):
        best = i_a
    out_idx[0] = best
    out_idx[1] = best
    out_idx[2] = best
    out_idx[3] = best
    out_p[0] = 1.0
    out_p[1] = 0.0
    out_p[2] = 0.0
    out_p[3] = 0.0
    return CODE_DEGENERATE


# ---------------------------------------------------------------------------
# Heston lattice level transitions (memoised by the node's value key)
# ---------------------------------------------------------------------------

@njit(cache=True)
def heston_sqrt_value(q, sqv0, step):
    """Variance node value for integer key q (= 2 * sqrt-offset of the node)."""
    x = sqv0 + 0.5 * q * step
    if x < 0.0:
        x = 0.0
    return x * x


@njit(cache=True)
def heston_level_transitions(
    n, jn, jn1, lo, hi,
    sqv0, step, ekh, psi, thk, om2,
    top_next,
    memo_qmin, memo_tgt, memo_prb, memo_code,
    out_tgt, out_prb, out_code,
):
    """Fill transitions for active nodes [lo, hi] of level n.

    Targets are absolute node indices at level n+1.  Interior nodes are
    memoised by their value key; nodes whose candidate window touches a
    level boundary are computed explicitly.
    """
    nn1 = n + 1
    cvals = np.empty(32)
    cidx = np.empty(4, dtype=np.int64)
    cprb = np.empty(4)
    memo_span = memo_code.shape[0]

    for j in range(lo, hi + 1):
        row = j - lo
        q = 2 * (j + jn) - 3 * n
        v = heston_sqrt_value(q, sqv0, step)
        m1v = v * ekh + thk * psi
        m2v = m1v * m1v + om2 * psi * (0.5 * thk * psi + v * ekh)
        m3v = m1v * m2v + om2 * psi * (
            2.0 * v * v * ekh * ekh
            + psi * (thk + 0.5 * om2) * (3.0 * v * ekh + thk * psi)
        )

        # candidate window around M1 at the next level
        sq_m1 = np.sqrt(m1v)
        jr = (sq_m1 - sqv0) / step + 1.5 * nn1 - jn1
        b0 = int(np.floor(jr))
        if b0 < 0:
            b0 = 0
        if b0 > top_next:
            b0 = top_next
        w0 = b0 - 9
        if w0 < 0:
            w0 = 0
        w1 = b0 + 10
        if w1 > top_next:
            w1 = top_next

        memo_ok = (w1 < top_next) and (w0 > 0 or jn1 >= 1)
        qi = q - memo_qmin
        if memo_ok and 0 <= qi < memo_span and memo_code[qi] >= 0:
            out_code[row] = memo_code[qi]
            for t in range(4):
                qp = memo_tgt[qi, t]
                if qp == ZKEY:
                    out_tgt[row, t] = 0
                else:
                    out_tgt[row, t] = (qp + 3 * nn1) // 2 - jn1
                out_prb[row, t] = memo_prb[qi, t]
            continue

        ncand = w1 - w0 + 1
        for i in range(ncand):
            jp = w0 + i
            cvals[i] = heston_sqrt_value(2 * (jp + jn1) - 3 * nn1, sqv0, step)
        # guard against duplicated clamped-zero candidates
        while ncand > 1 and cvals[0] == cvals[1]:
            for i in range(ncand - 1):
                cvals[i] = cvals[i + 1]
            w0 += 1
            ncand -= 1

        code = select_transition(cvals[:ncand], m1v, m2v, m3v, cidx, cprb)
        out_code[row] = code
        for t in range(4):
            jp = w0 + cidx[t]
            out_tgt[row, t] = jp
            out_prb[row, t] = cprb[t]

        if memo_ok and 0 <= qi < memo_span:
            memo_code[qi] = code
            for t in range(4):
                jp = w0 + cidx[t]
                if jn1 >= 1 and jp == 0:
                    memo_tgt[qi, t] = ZKEY
                else:
                    memo_tgt[qi, t] = 2 * (jp + jn1) - 3 * nn1
                memo_prb[qi, t] = cprb[t]
    return 0


@njit(cache=True)
def hw_level_transitions(n, lo, hi, K, H, out_tgt, out_prb):
    """Closed-form quadrinomial transitions of the OU factor lattice."""
    nn1 = n + 1
    for j in range(lo, hi + 1):
        row = j - lo
        x = (j - 1.5 * n) * K
        m1 = x * H
        y = m1 / K + 1.5 * nn1
        ja = int(np.ceil(y))
        u = ja - y
        if u < 0.0:
            u = 0.0
        if u > 1.0:
            u = 1.0
        v = 1.0 - u
        out_tgt[row, 0] = ja          # A
        out_tgt[row, 1] = ja - 1      # B
        out_tgt[row, 2] = ja + 1      # C
        out_tgt[row, 3] = ja - 2      # D
        out_prb[row, 0] = 0.5 * u * (1.0 + v * v)
        out_prb[row, 1] = 0.5 * v * (1.0 + u * u)
        out_prb[row, 2] = v * (2.0 + v * v) / 6.0
        out_prb[row, 3] = u * (2.0 + u * u) / 6.0
    return 0


@njit(cache=True)
def forward_mass(mass, tgt, prb, lo, next_lo, next_size):
    """Propagate visit probabilities one level (sequential, deterministic)."""
    out = np.zeros(next_size)
    w = mass.shape[0]
    for row in range(w):
        m = mass[row]
        if m == 0.0:
            continue
        for t in range(4):
            p = prb[row, t]
            if p > 0.0:
                out[tgt[row, t] - next_lo] += m * p
    return out


# ---------------------------------------------------------------------------
# tridiagonal machinery for the 1D Y-space PDE
# ---------------------------------------------------------------------------

@njit(cache=True)
def thomas_prepare(a, b, dt, dy, ny, cp, inv):
    """Precompute Thomas factors for (I - dt*(a d/dy + b d2/dy2)).

    Interior rows use central differences; end rows drop diffusion and use
    one-sided drift (linearity boundary).  Returns (l_int, l_top) used by
    the forward sweep.
    """
    l_int = dt * (a / (2.0 * dy) - b / (dy * dy))
    d_int = 1.0 + 2.0 * dt * b / (dy * dy)
    u_int = -dt * (a / (2.0 * dy) + b / (dy * dy))
    d0 = 1.0 + dt * a / dy
    u0 = -dt * a / dy
    l_top = dt * a / dy
    d_top = 1.0 - dt * a / dy

    cp[0] = u0 / d0
    inv[0] = 1.0 / d0
    for i in range(1, ny - 1):
        den = d_int - l_int * cp[i - 1]
        cp[i] = u_int / den
        inv[i] = 1.0 / den
    den = d_top - l_top * cp[ny - 2]
    inv[ny - 1] = 1.0 / den
    cp[ny - 1] = 0.0
    return l_int, l_top


@njit(cache=True, parallel=True)
def hpde_level(vnext, a0next, tgt_rel, prb, fidx, l_int, l_top, cp, inv,
               disc, vout, a0out):
    """One backward hybrid step for all active nodes of a level.

    Per node: probability-mix the four upcoming value vectors, solve the
    implicit transport step with the node's precomputed Thomas factors and
    apply the exact exponential discount.  The account-exhausted scalar
    track (``a0``) mixes and discounts alongside.
    """
    w = tgt_rel.shape[0]
    ny = vnext.shape[1]
    for i in prange(w):
        f = fidx[i]
        t0 = tgt_rel[i, 0]
        t1 = tgt_rel[i, 1]
        t2 = tgt_rel[i, 2]
        t3 = tgt_rel[i, 3]
        p0 = prb[i, 0]
        p1 = prb[i, 1]
        p2 = prb[i, 2]
        p3 = prb[i, 3]
        li = l_int[f]
        lt = l_top[f]
        d = disc[i]

        rhs = (p0 * vnext[t0, 0] + p1 * vnext[t1, 0]
               + p2 * vnext[t2, 0] + p3 * vnext[t3, 0])
        prev = rhs * inv[f, 0]
        vout[i, 0] = prev
        for y in range(1, ny - 1):
            rhs = (p0 * vnext[t0, y] + p1 * vnext[t1, y]
                   + p2 * vnext[t2, y] + p3 * vnext[t3, y])
            prev = (rhs - li * prev) * inv[f, y]
            vout[i, y] = prev
        rhs = (p0 * vnext[t0, ny - 1] + p1 * vnext[t1, ny - 1]
               + p2 * vnext[t2, ny - 1] + p3 * vnext[t3, ny - 1])
        prev = (rhs - lt * prev) * inv[f, ny - 1]
        vout[i, ny - 1] = prev
        for y in range(ny - 2, -1, -1):
            prev = vout[i, y] - cp[f, y] * vout[i, y + 1]
            vout[i, y] = prev
        for y in range(ny):
            vout[i, y] *= d
        a0out[i] = d * (p0 * a0next[t0] + p1 * a0next[t1]
                        + p2 * a0next[t2] + p3 * a0next[t3])
    return 0


# ---------------------------------------------------------------------------
# natural cubic splines (uniform grid) for event-time lookups
# ---------------------------------------------------------------------------

@njit(cache=True)
def spline_prepare_uniform(ny, cps, invs):
    """Thomas factors of the natural-spline moment system on a uniform grid."""
    # interior matrix rows: (1, 4, 1) scaled; natural ends give M0 = Mn = 0
    cps[0] = 0.0
    invs[0] = 0.0
    prev_cp = 0.0
    for i in range(1, ny - 1):
        den = 4.0 - prev_cp
        prev_cp = 1.0 / den
        cps[i] = prev_cp
        invs[i] = 1.0 / den
    return 0


@njit(cache=True)
def spline_moments_uniform(v, dy, cps, invs, m):
    """Second-derivative moments of the natural cubic spline of v (uniform)."""
    ny = v.shape[0]
    m[0] = 0.0
    m[ny - 1] = 0.0
    scale = 6.0 / (dy * dy)
    prev = 0.0
    for i in range(1, ny - 1):
        rhs = scale * (v[i - 1] - 2.0 * v[i] + v[i + 1])
        prev = (rhs - prev) * invs[i]
        m[i] = prev
    for i in range(ny - 3, 0, -1):
        m[i] = m[i] - cps[i] * m[i + 1]
    return 0


@njit(cache=True)
def spline_eval_uniform(v, m, y0, dy, yq):
    """Evaluate the natural cubic spline at yq; linear extrapolation outside."""
    ny = v.shape[0]
    t = (yq - y0) / dy
    if t <= 0.0:
        slope = (v[1] - v[0]) / dy - dy * m[1] / 6.0
        return v[0] + slope * (yq - y0)
    if t >= ny - 1:
        slope = (v[ny - 1] - v[ny - 2]) / dy + dy * m[ny - 2] / 6.0
        return v[ny - 1] + slope * (yq - (y0 + (ny - 1) * dy))
    i = int(t)
    if i > ny - 2:
        i = ny - 2
    xl = t - i
    xr = 1.0 - xl
    return (xr * v[i] + xl * v[i + 1]
            + (dy * dy / 6.0) * ((xr ** 3 - xr) * m[i] + (xl ** 3 - xl) * m[i + 1]))


@njit(cache=True)
def cashflow_amount(w, g, kappa):
    """Cash received for withdrawal w with guaranteed amount g, penalty kappa."""
    if w <= g:
        return w
    return w - kappa * (w - g)


@njit(cache=True, parallel=True)
def hpde_event_static(v, a0, off, ygrid, g, cps, invs, surrender, kappa):
    """Event action for the static / optimal-surrender single-layer solves.

    ``v[i]`` is node i's value vector over the shared Y grid, ``off[i]`` the
    node's log-offset so that A = exp(Y + off).  ``a0`` is the dedicated
    A = 0 entry.  With ``surrender`` set, the payout is the maximum of
    continuing and surrendering (YD contracts).
    """
    w = v.shape[0]
    ny = v.shape[1]
    dy = ygrid[1] - ygrid[0]
    vold = v.copy()
    mom = np.empty((w, ny))
    for i in prange(w):
        spline_moments_uniform(vold[i], dy, cps, invs, mom[i])
    for i in prange(w):
        o = off[i]
        a_lo = np.exp(ygrid[0] + o)
        v_lo = vold[i, 0]
        a0_old = a0[i]
        for y in range(ny):
            a = np.exp(ygrid[y] + o)
            ap = a - g
            if ap <= 0.0:
                cont = a0_old
            elif ap < a_lo:
                cont = a0_old + (v_lo - a0_old) * (ap / a_lo)
            else:
                cont = spline_eval_uniform(vold[i], mom[i], ygrid[0], dy,
                                           np.log(ap) - o)
            val = g + cont
            if surrender:
                ex = g + (1.0 - kappa) * (ap if ap > 0.0 else 0.0)
                if ex > val:
                    val = ex
            v[i, y] = val
        a0[i] = g + a0_old
    return 0


@njit(cache=True, parallel=True)
def hpde_event_dynamic(v, a0, off, ygrid, g, kappa, cps, invs,
                       vout, a0out, record, wstar, wstar0):
    """Optimal-withdrawal event action on the benefit-base level stack.

    ``v[nb, i]`` is node i's value vector at benefit base nb*g.  Each grid
    state maximises cash flow plus post-withdrawal value over withdrawals
    k*g, k = 0..nb, reading the (nb-k) stack level at A - k*g via cubic
    splines.  Ties prefer the smallest withdrawal.  With ``record`` set
    the argmax (in units of g) is stored in ``wstar``.
    """
    nb1 = v.shape[0]
    w = v.shape[1]
    ny = v.shape[2]
    dy = ygrid[1] - ygrid[0]
    mom = np.empty((nb1, w, ny))
    for i in prange(w):
        for nb in range(nb1):
            spline_moments_uniform(v[nb, i], dy, cps, invs, mom[nb, i])
    for i in prange(w):
        o = off[i]
        a_lo = np.exp(ygrid[0] + o)
        for nb in range(nb1):
            # A = 0 states: value comes from cash flow plus the A = 0 track
            best0 = -1.0e300
            k0 = 0
            for k in range(nb + 1):
                cand = cashflow_amount(k * g, g, kappa) + a0[nb - k, i]
                if cand > best0:
                    best0 = cand
                    k0 = k
            a0out[nb, i] = best0
            if record:
                wstar0[nb, i] = k0
            for y in range(ny):
                a = np.exp(ygrid[y] + o)
                best = -1.0e300
                kb = 0
                for k in range(nb + 1):
                    ap = a - k * g
                    lev = nb - k
                    if ap <= 0.0:
                        cont = a0[lev, i]
                    elif ap < a_lo:
                        cont = a0[lev, i] + (v[lev, i, 0] - a0[lev, i]) * (ap / a_lo)
                    else:
                        cont = spline_eval_uniform(v[lev, i], mom[lev, i],
                                                   ygrid[0], dy, np.log(ap) - o)
                    cand = cashflow_amount(k * g, g, kappa) + cont
                    if cand > best:
                        best = cand
                        kb = k
                vout[nb, i, y] = best
                if record:
                    wstar[nb, i, y] = kb
    return 0


@njit(cache=True, parallel=True)
def hpde_terminal_dynamic(off, ygrid, g, kappa, nb1, vout, a0out):
    """Closed-form optimal value at the last event time, per stack level."""
    w = off.shape[0]
    ny = ygrid.shape[0]
    for i in prange(w):
        o = off[i]
        for nb in range(nb1):
            b = nb * g
            gb = g if g < b else b
            floor_val = (1.0 - kappa) * b + kappa * gb
            a0out[nb, i] = floor_val
            for y in range(ny):
                a = np.exp(ygrid[y] + o)
                vout[nb, i, y] = a if a > floor_val else floor_val
    return 0


@njit(cache=True, parallel=True)
def hpde_reset_deferred(v, a0, off, ygrid, c1, premium, cps, invs):
    """Deferred-start reset: V(A) <- max(c1, A)/premium * V(premium)."""
    w = v.shape[0]
    ny = v.shape[1]
    dy = ygrid[1] - ygrid[0]
    for i in prange(w):
        mom = np.empty(ny)
        spline_moments_uniform(v[i], dy, cps, invs, mom)
        vp = spline_eval_uniform(v[i], mom, ygrid[0], dy, np.log(premium) - off[i])
        for y in range(ny):
            a = np.exp(ygrid[y] + off[i])
            am = a if a > c1 else c1
            v[i, y] = am / premium * vp
        a0[i] = c1 / premium * vp
    return 0


# ---------------------------------------------------------------------------
# ADI (Douglas) kernels on the 2D nonuniform mesh
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def adi_apply_ops(u, l1, d1, u1, l2, d2, u2, cm, wam, wap, wum, wup,
                  f1, f2, f0):
    """Apply the directional operators F1 (axis 0), F2 (axis 1) and the
    explicit mixed operator F0 to ``u``."""
    na = u.shape[0]
    nu = u.shape[1]
    for i in prange(na):
        for j in range(nu):
            acc = d1[i, j] * u[i, j]
            if i > 0:
                acc += l1[i, j] * u[i - 1, j]
            if i < na - 1:
                acc += u1[i, j] * u[i + 1, j]
            f1[i, j] = acc
            acc2 = d2[i, j] * u[i, j]
            if j > 0:
                acc2 += l2[i, j] * u[i, j - 1]
            if j < nu - 1:
                acc2 += u2[i, j] * u[i, j + 1]
            f2[i, j] = acc2
            if 0 < i < na - 1 and 0 < j < nu - 1:
                da = wap[i] * u[i + 1, j] + wam[i] * u[i - 1, j] - (wap[i] + wam[i]) * u[i, j]
                db = wap[i] * u[i + 1, j + 1] + wam[i] * u[i - 1, j + 1] - (wap[i] + wam[i]) * u[i, j + 1]
                dc = wap[i] * u[i + 1, j - 1] + wam[i] * u[i - 1, j - 1] - (wap[i] + wam[i]) * u[i, j - 1]
                f0[i, j] = cm[i, j] * (wup[j] * db + wum[j] * dc - (wup[j] + wum[j]) * da)
            else:
                f0[i, j] = 0.0
    return 0


@njit(cache=True, parallel=True)
def adi_solve_axis0(rhs, l, d, u, theta_dt, out):
    """Solve (I - theta_dt * F1) along axis 0 for every column."""
    na = rhs.shape[0]
    nu = rhs.shape[1]
    for j in prange(nu):
        cp = np.empty(na)
        w = np.empty(na)
        den = 1.0 - theta_dt * d[0, j]
        cp[0] = -theta_dt * u[0, j] / den
        w[0] = rhs[0, j] / den
        for i in range(1, na):
            li = -theta_dt * l[i, j]
            den = (1.0 - theta_dt * d[i, j]) - li * cp[i - 1]
            ui = -theta_dt * u[i, j] if i < na - 1 else 0.0
            cp[i] = ui / den
            w[i] = (rhs[i, j] - li * w[i - 1]) / den
        out[na - 1, j] = w[na - 1]
        for i in range(na - 2, -1, -1):
            out[i, j] = w[i] - cp[i] * out[i + 1, j]
    return 0


@njit(cache=True, parallel=True)
def adi_solve_axis1(rhs, l, d, u, theta_dt, out):
    """Solve (I - theta_dt * F2) along axis 1 for every row."""
    na = rhs.shape[0]
    nu = rhs.shape[1]
    for i in prange(na):
        cp = np.empty(nu)
        w = np.empty(nu)
        den = 1.0 - theta_dt * d[i, 0]
        cp[0] = -theta_dt * u[i, 0] / den
        w[0] = rhs[i, 0] / den
        for j in range(1, nu):
            lj = -theta_dt * l[i, j]
            den = (1.0 - theta_dt * d[i, j]) - lj * cp[j - 1]
            uj = -theta_dt * u[i, j] if j < nu - 1 else 0.0
            cp[j] = uj / den
            w[j] = (rhs[i, j] - lj * w[j - 1]) / den
        out[i, nu - 1] = w[nu - 1]
        for j in range(nu - 2, -1, -1):
            out[i, j] = w[j] - cp[j] * out[i, j + 1]
    return 0


@njit(cache=True)
def spline_moments_nonuniform(x, v, m, scratch):
    """Natural cubic spline moments on a nonuniform grid (Thomas solve)."""
    n = x.shape[0]
    m[0] = 0.0
    m[n - 1] = 0.0
    if n < 3:
        return 0
    cp = scratch
    prev_cp = 0.0
    prev_w = 0.0
    for i in range(1, n - 1):
        hl = x[i] - x[i - 1]
        hr = x[i + 1] - x[i]
        diag = 2.0 * (hl + hr)
        low = hl if i > 1 else 0.0
        up = hr if i < n - 2 else 0.0
        rhs = 6.0 * ((v[i + 1] - v[i]) / hr - (v[i] - v[i - 1]) / hl)
        den = diag - low * prev_cp
        prev_cp = up / den
        cp[i] = prev_cp
        prev_w = (rhs - low * prev_w) / den
        m[i] = prev_w
    for i in range(n - 3, 0, -1):
        m[i] = m[i] - cp[i] * m[i + 1]
    return 0


@njit(cache=True)
def spline_eval_nonuniform(x, v, m, xq):
    """Evaluate a natural cubic spline at xq; linear extrapolation outside."""
    n = x.shape[0]
    if xq <= x[0]:
        h = x[1] - x[0]
        slope = (v[1] - v[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0
        return v[0] + slope * (xq - x[0])
    if xq >= x[n - 1]:
        h = x[n - 1] - x[n - 2]
        slope = (v[n - 1] - v[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0
        return v[n - 1] + slope * (xq - x[n - 1])
    # binary search for the bracketing interval
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x[mid] <= xq:
            lo = mid
        else:
            hi = mid
    h = x[hi] - x[lo]
    xl = (xq - x[lo]) / h
    xr = 1.0 - xl
    return (xr * v[lo] + xl * v[hi]
            + (h * h / 6.0) * ((xr ** 3 - xr) * m[lo] + (xl ** 3 - xl) * m[hi]))


@njit(cache=True, parallel=True)
def adi_event_static(u, agrid, g, surrender, kappa):
    """Static / surrender event action on the 2D mesh (per second-axis row)."""
    na = u.shape[0]
    nu = u.shape[1]
    mom = np.empty((nu, na))
    scratch = np.empty((nu, na))
    vv = np.empty((nu, na))
    for j in prange(nu):
        for i in range(na):
            vv[j, i] = u[i, j]
        spline_moments_nonuniform(agrid, vv[j], mom[j], scratch[j])
    for j in prange(nu):
        for i in range(na):
            ap = agrid[i] - g
            if ap <= 0.0:
                cont = vv[j, 0]
            else:
                cont = spline_eval_nonuniform(agrid, vv[j], mom[j], ap)
            val = g + cont
            if surrender:
                ex = g + (1.0 - kappa) * (ap if ap > 0.0 else 0.0)
                if ex > val:
                    val = ex
            u[i, j] = val
    return 0


@njit(cache=True, parallel=True)
def adi_event_dynamic(u, agrid, g, kappa, uout, record, wstar):
    """Optimal-withdrawal event action on the level stack of 2D meshes."""
    nb1 = u.shape[0]
    na = u.shape[1]
    nu = u.shape[2]
    mom = np.empty((nu, nb1, na))
    scratch = np.empty((nu, na))
    vv = np.empty((nu, nb1, na))
    for j in prange(nu):
        for nb in range(nb1):
            for i in range(na):
                vv[j, nb, i] = u[nb, i, j]
            spline_moments_nonuniform(agrid, vv[j, nb], mom[j, nb], scratch[j])
    for j in prange(nu):
        for nb in range(nb1):
            for i in range(na):
                a = agrid[i]
                best = -1.0e300
                kb = 0
                for k in range(nb + 1):
                    ap = a - k * g
                    lev = nb - k
                    if ap <= 0.0:
                        cont = vv[j, lev, 0]
                    else:
                        cont = spline_eval_nonuniform(agrid, vv[j, lev],
                                                      mom[j, lev], ap)
                    cand = cashflow_amount(k * g, g, kappa) + cont
                    if cand > best:
                        best = cand
                        kb = k
                uout[nb, i, j] = best
                if record:
                    wstar[nb, i, j] = kb
    return 0


# ---------------------------------------------------------------------------
# fused per-step path updates for the hybrid samplers
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def hybrid_step_heston(j, v, ln_s, u01, z, coin, lo, next_lo, vals_next,
                       tgt, prb, drift0, ck_half_dt, c, var_coef):
    """One lattice move plus the split log-fund update, all paths."""
    n = j.shape[0]
    for i in prange(n):
        row = j[i] - lo
        p0 = prb[row, 0]
        p1 = p0 + prb[row, 1]
        p2 = p1 + prb[row, 2]
        u = u01[i]
        br = 0
        if u > p0:
            br = 1
        if u > p1:
            br = 2
        if u > p2:
            br = 3
        jn = tgt[row, br]
        vn = vals_next[jn - next_lo]
        vi = v[i]
        v_bar = vi if coin[i] else vn
        ln_s[i] += (drift0 + ck_half_dt * (vi + vn) + c * (vn - vi)
                    + np.sqrt(var_coef * v_bar) * z[i])
        v[i] = vn
        j[i] = jn
    return 0


@njit(cache=True, parallel=True)
def hybrid_step_hw(j, x, ln_s, acc, u01, z, lo, next_lo, vals_next,
                   tgt, prb, beta_now, beta_next, omega, sigma, rho,
                   rho_bar_sqdt, k_dt, half_dt, drift_sigma):
    """One lattice move plus the log-fund update and rate accumulation."""
    n = j.shape[0]
    for i in prange(n):
        row = j[i] - lo
        p0 = prb[row, 0]
        p1 = p0 + prb[row, 1]
        p2 = p1 + prb[row, 2]
        u = u01[i]
        br = 0
        if u > p0:
            br = 1
        if u > p1:
            br = 2
        if u > p2:
            br = 3
        jn = tgt[row, br]
        xn = vals_next[jn - next_lo]
        xi = x[i]
        r_now = omega * xi + beta_now
        r_next = omega * xn + beta_next
        ln_s[i] += ((r_next + r_now) * half_dt + drift_sigma
                    + sigma * ((xn + xi * (k_dt - 1.0)) * rho
                               + rho_bar_sqdt * z[i]))
        acc[i] += (r_now + r_next) * half_dt
        x[i] = xn
        j[i] = jn
    return 0
