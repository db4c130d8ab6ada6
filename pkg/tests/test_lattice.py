import math
import os

import numpy as np
import pytest

from _oracles import cir_exact_sample
from gmwb.lattice import (HestonMoments, build_chain_lattice,
                          build_heston_lattice, build_hw_lattice, curtail,
                          dump_lattice_csv, fallback_two_moment,
                          heston_moments, heston_node_value,
                          match_three_moments, select_heston_transition)
from gmwb.models import HestonParams


def moment_residuals(lat, params):
    """Worst relative residual of the matched raw moments over all nodes."""
    worst = 0.0
    for n in range(lat.n_levels):
        lo, hi = int(lat.lo[n]), int(lat.hi[n])
        tgt, prb = lat.transitions(n, lo, hi)
        vals_next = lat.values(n + 1)
        v = lat.values(n, lo, hi)
        xt = vals_next[tgt]
        for row in range(v.shape[0]):
            mom = heston_moments(params, v[row], lat.dt)
            p = prb[row]
            x = xt[row]
            worst = max(
                worst,
                abs((p * x).sum() - mom.m1) / abs(mom.m1),
                abs((p * x ** 2).sum() - mom.m2) / abs(mom.m2),
                abs((p * x ** 3).sum() - mom.m3) / abs(mom.m3))
    return worst


class TestNodeValues:
    def test_root(self, heston_cf_params):
        assert heston_node_value(heston_cf_params, 0.25, 0, 0) == \
            pytest.approx(0.04, abs=1e-15)

    def test_hand_computed(self, heston_cf_params):
        # n=1, j=3: sqrt grid offset +1.5 steps of omega*sqrt(h)/2 = 0.05
        got = heston_node_value(heston_cf_params, 0.25, 1, 3)
        assert got == pytest.approx((0.2 + 1.5 * 0.05) ** 2, rel=1e-14)

    def test_clamped_zero(self, heston_cf_params):
        # at a deep level the shifted bottom node sits exactly at zero
        lat = build_heston_lattice(heston_cf_params, 10.0, 40)
        n = 20
        assert lat.j_shift[n] > 0
        assert heston_node_value(heston_cf_params, 0.25, n, 0) == 0.0
        assert heston_node_value(heston_cf_params, 0.25, n, 1) > 0.0

    def test_out_of_range(self, heston_cf_params):
        with pytest.raises(IndexError):
            heston_node_value(heston_cf_params, 0.25, 1, 4)


class TestMoments:
    def test_fast_reversion_mean(self):
        p = HestonParams(s0=100, v0=0.04, theta=0.04, k=5e4, omega=0.2,
                         rho=0.0, r=0.05)
        mom = heston_moments(p, 0.04, 1.0)
        assert mom.m1 == pytest.approx(0.04, rel=1e-4)

    def test_deterministic_limit(self):
        p = HestonParams(s0=100, v0=0.04, theta=0.04, k=1.0, omega=1e-14,
                         rho=0.0, r=0.05)
        mom = heston_moments(p, 0.04, 1.0)
        assert mom.m2 == pytest.approx(mom.m1 ** 2, rel=1e-12)
        assert mom.m3 == pytest.approx(mom.m1 ** 3, rel=1e-12)

    def test_exact_transition_sampler_oracle(self, heston_cf_params):
        # moments of 2e6 exact CIR draws must bracket the closed forms
        p = heston_cf_params
        rng = np.random.default_rng(2024)
        n = 2_000_000
        draws = cir_exact_sample(rng, 0.04, p.k, p.theta, p.omega, 0.1, n)
        mom = heston_moments(p, 0.04, 0.1)
        for order, ref in ((1, mom.m1), (2, mom.m2), (3, mom.m3)):
            x = draws ** order
            se = x.std() / math.sqrt(n)
            assert abs(x.mean() - ref) < 3.0 * se


class TestMatchThreeMoments:
    def test_symmetric_uniform(self):
        m1, s = 0.04, 0.01
        vals = m1 + s * np.array([-3.0, -1.0, 1.0, 3.0])
        m2 = m1 ** 2 + 5.0 * s ** 2
        m3 = m1 ** 3 + 3.0 * m1 * 5.0 * s ** 2   # zero third central moment
        probs = match_three_moments(vals, HestonMoments(m1, m2, m3, 0.0))
        assert probs == pytest.approx([0.25] * 4, abs=1e-12)

    def test_residuals_of_solutions(self, heston_cf_params):
        rng = np.random.default_rng(3)
        hits = 0
        for _ in range(500):
            v = rng.uniform(0.0, 0.3)
            mom = heston_moments(heston_cf_params, v, 0.05)
            vals = np.sort(mom.m1 * rng.uniform(0.2, 2.0, size=4))
            probs = match_three_moments(vals, mom)
            if probs is None:
                continue
            hits += 1
            assert (probs * vals).sum() == pytest.approx(mom.m1, rel=1e-10)
            assert (probs * vals ** 2).sum() == pytest.approx(mom.m2, rel=1e-10)
            assert (probs * vals ** 3).sum() == pytest.approx(mom.m3, rel=1e-10)
        assert hits > 20

    def test_unsupported_candidates_fail(self):
        # a mean midway between nodes forces variance >= 0.25 on this
        # support; demanding less makes some probability negative
        mom = HestonMoments(m1=0.5, m2=0.26, m3=0.155, psi=0.0)
        probs = match_three_moments([0.0, 1.0, 2.0, 3.0], mom)
        assert probs is None

    def test_duplicate_candidates_fail(self):
        mom = HestonMoments(0.02, 0.02 ** 2 + 1e-6, 0.02 ** 3 + 6e-8, 0.0)
        assert match_three_moments([0.01, 0.01, 0.02, 0.03], mom) is None


class TestFallbackTwoMoment:
    def test_midway(self):
        probs = fallback_two_moment([0.03, 0.01, 0.04, 0.0], 0.02)
        assert probs == pytest.approx([5 / 16, 5 / 16, 3 / 16, 3 / 16])

    def test_boundary(self):
        probs = fallback_two_moment([0.03, 0.01, 0.03, 0.0], 0.03)
        assert probs == pytest.approx([0.625, 0.0, 0.375, 0.0])

    def test_first_moment_property(self):
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            b, a = np.sort(rng.uniform(0.0, 1.0, 2))
            d = b - rng.uniform(0.0, 0.5)
            c = a + rng.uniform(0.0, 0.5)
            lo, hi = max(b, d), min(a, c)
            if hi <= lo:
                continue
            m1 = rng.uniform(lo, hi)
            p = fallback_two_moment([a, b, c, d], m1)
            assert p.sum() == pytest.approx(1.0, abs=1e-14)
            assert (p * np.array([a, b, c, d])).sum() == \
                pytest.approx(m1, abs=1e-12)

    def test_outside_bracket_raises(self):
        with pytest.raises(ValueError):
            fallback_two_moment([0.03, 0.01, 0.04, 0.0], 0.05)


class TestSelectTransition:
    def test_root_transition_residuals(self, heston_cf_params):
        p = heston_cf_params
        h = 0.25
        mom = heston_moments(p, p.v0, h)
        nxt = np.array([heston_node_value(p, h, 1, j) for j in range(4)])
        idx, probs, code = select_heston_transition(nxt, p.v0, mom)
        assert code == 0
        x = nxt[idx]
        assert (probs * x).sum() == pytest.approx(mom.m1, rel=1e-10)
        assert (probs * x ** 2).sum() == pytest.approx(mom.m2, rel=1e-10)
        assert (probs * x ** 3).sum() == pytest.approx(mom.m3, rel=1e-10)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_clamped_bottom_level(self, heston_cf_params):
        # only a clamped zero below: the bottom straddle must be repaired
        p = heston_cf_params
        mom = heston_moments(p, 0.0, 0.25)
        vals = np.array([0.0, 0.0025, 0.01, 0.0225, 0.04, 0.0625, 0.09])
        idx, probs, code = select_heston_transition(vals, 0.0, mom)
        assert code == 0
        assert probs.min() >= 0.0 and probs.sum() == pytest.approx(1.0)


class TestHwLattice:
    def test_root_symmetry(self, bshw_cf_params):
        lat = build_hw_lattice(bshw_cf_params, 10.0, 40)
        tgt, prb = lat.transitions(0, 0, 0)
        # A node lands at ceil(3/2) = 2 with B, C, D around it
        assert sorted(tgt[0]) == [0, 1, 2, 3]
        xt = lat.values(1)[tgt[0]]
        assert (prb[0] * xt).sum() == pytest.approx(0.0, abs=1e-14)

    def test_moment_exactness_all_nodes(self, bshw_cf_params):
        lat = build_hw_lattice(bshw_cf_params, 10.0, 60)
        kk, hh = lat.K, lat.H
        for n in range(lat.n_levels):
            lo, hi = int(lat.lo[n]), int(lat.hi[n])
            tgt, prb = lat.transitions(n, lo, hi)
            x = lat.values(n, lo, hi)
            xt = lat.values(n + 1)[tgt]
            m1 = (prb * xt).sum(axis=1)
            np.testing.assert_allclose(m1, x * hh, atol=1e-12)
            var = (prb * (xt - m1[:, None]) ** 2).sum(axis=1)
            np.testing.assert_allclose(var, kk * kk, atol=1e-10)
            m3c = (prb * (xt - m1[:, None]) ** 3).sum(axis=1)
            np.testing.assert_allclose(m3c, 0.0, atol=1e-10)
            assert np.all(prb >= 0.0) and np.all(prb <= 1.0)
            np.testing.assert_allclose(prb.sum(axis=1), 1.0, atol=1e-12)


class TestHestonLattice:
    def test_benchmark_tree_all_three_moment(self, heston_cf_params):
        lat = build_heston_lattice(heston_cf_params, 10.0, 40)
        assert lat.n_two_moment == 0
        assert lat.n_degenerate == 0
        assert moment_residuals(lat, heston_cf_params) < 1e-10

    def test_probability_conservation(self, heston_cf_params):
        lat = build_heston_lattice(heston_cf_params, 10.0, 40)
        for n in range(lat.n_levels):
            _, prb = lat.transitions(n, int(lat.lo[n]), int(lat.hi[n]))
            np.testing.assert_allclose(prb.sum(axis=1), 1.0, atol=1e-12)
            assert prb.min() >= 0.0

    def test_visit_probabilities_sum_to_one(self, heston_cf_params):
        lat = build_heston_lattice(heston_cf_params, 10.0, 40)
        for n in (0, 1, 7, 25, 40):
            assert lat.visit_probs(n).sum() == pytest.approx(1.0, abs=1e-10)

    def test_large_omega_fuzz(self):
        p = HestonParams(s0=100, v0=0.04, theta=0.04, k=1.0, omega=2.5,
                         rho=-0.5, r=0.05)
        lat = build_heston_lattice(p, 2.0, 24)
        for n in range(lat.n_levels):
            lo, hi = int(lat.lo[n]), int(lat.hi[n])
            tgt, prb = lat.transitions(n, lo, hi)
            np.testing.assert_allclose(prb.sum(axis=1), 1.0, atol=1e-12)
            assert prb.min() >= 0.0
            assert lat.values(n, lo, hi).min() >= 0.0
            size_next = lat.level_size(n + 1)
            assert tgt.min() >= 0 and tgt.max() < size_next


class TestCurtail:
    def test_root_active_and_level_one(self, heston_cf_params):
        lat = build_heston_lattice(heston_cf_params, 10.0, 40)
        lo, hi = curtail(lat)
        assert lo[0] == hi[0] == 0
        assert hi[1] - lo[1] + 1 <= 4

    def test_windows_match_nonzero_visits(self, bshw_cf_params):
        lat = build_hw_lattice(bshw_cf_params, 5.0, 30)
        lo, hi = curtail(lat)
        for n in range(lat.n_levels + 1):
            vis = lat.visit_probs(n)
            nz = np.nonzero(vis)[0]
            assert lo[n] == nz[0] and hi[n] == nz[-1]

    def test_pricing_bit_identical(self, heston_cf_params):
        from gmwb.contract import CFContractSpec
        from gmwb.hybrid_pde import price_hybrid
        from gmwb.models import FeeStructure
        lat = build_heston_lattice(heston_cf_params, 5.0, 20)
        c = CFContractSpec(premium=100.0, t2=5.0, wf=1, kappa=0.1,
                           fees=FeeStructure(alpha_g=0.01))
        on = price_hybrid(lat, heston_cf_params, c, "static", 101,
                          use_curtail=True)
        offp = price_hybrid(lat, heston_cf_params, c, "static", 101,
                            use_curtail=False)
        assert on.value == offp.value


class TestDump:
    def test_csv_roundtrip(self, heston_cf_params, tmp_path):
        lat = build_heston_lattice(heston_cf_params, 1.0, 4)
        path = os.path.join(tmp_path, "lat.csv")
        dump_lattice_csv(lat, path)
        lines = open(path).read().strip().splitlines()
        assert lines[0].startswith("level,index,value")
        # header plus one row per stored node
        n_nodes = sum(int(lat.hi[n] - lat.lo[n]) + 1 for n in range(5))
        assert len(lines) == 1 + n_nodes

    def test_chain(self):
        lat = build_chain_lattice(1.0, 10)
        tgt, prb = lat.transitions(3, 0, 0)
        assert prb[0, 0] == 1.0 and tgt[0, 0] == 0
