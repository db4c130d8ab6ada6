import math
import warnings

import numpy as np
import pytest

from _oracles import bs_static_value
from gmwb.contract import CFContractSpec, YDContractSpec, final_value_cf
from gmwb.mc_pricer import (chebyshev_nodes, fit_region_polynomial,
                            price_optimal_surrender_yd,
                            price_optimal_withdrawal_by_lines,
                            price_optimal_withdrawal_full, price_static)
from gmwb.models import FeeStructure, HullWhiteParams, YieldCurve
from gmwb.scenario import standard_heston_paths, standard_hw_paths


def cf(t2=5.0, wf=1, alpha_g=0.02, kappa=0.1):
    return CFContractSpec(premium=100.0, t2=t2, wf=wf, kappa=kappa,
                          fees=FeeStructure(alpha_g=alpha_g))


def bs_scen(params, t2=5.0, wf=1, n=100_000, seed=17):
    times = np.concatenate(([0.0], np.arange(1, int(t2 * wf) + 1) / wf))
    return standard_hw_paths(params, n, times, seed=seed)


class TestRegionPolynomial:
    def test_exact_recovery(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(0.0, 300.0, 4000)
        b = rng.uniform(0.0, 100.0, 4000)
        u = rng.uniform(0.0, 0.1, 4000)
        y = 2.0 + 0.5 * a - 0.01 * b * u + 3.0 * u ** 2 + 1e-4 * a * b
        poly = fit_region_polynomial([a, b, u], y, 2)
        np.testing.assert_allclose(poly(a, b, u), y, rtol=1e-8)

    def test_constant_data(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.0, 300.0, 500)
        u = rng.uniform(0.0, 0.1, 500)
        poly = fit_region_polynomial([a, u], np.full(500, 7.25), 4)
        np.testing.assert_allclose(poly(a, u), 7.25, rtol=1e-10)

    def test_scaling_improves_conditioning(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.0, 300.0, 2000)
        deg = 4
        scaled = fit_region_polynomial([a], a.copy(), deg)
        z = scaled._scale([a])[0]
        design_scaled = np.column_stack([z ** k for k in range(deg + 1)])
        design_raw = np.column_stack([a ** k for k in range(deg + 1)])
        assert np.linalg.cond(design_scaled) <= np.linalg.cond(design_raw)

    def test_degenerate_coordinate_dropped(self):
        # a constant input carries no information; the fit must not lose
        # the informative coordinate alongside it
        rng = np.random.default_rng(3)
        a = rng.uniform(0.0, 10.0, 400)
        u = np.full(400, 0.05)
        y = 1.0 + 2.0 * a
        poly = fit_region_polynomial([a, u], y, 2)
        np.testing.assert_allclose(poly(a, u), y, rtol=1e-9)

    def test_rank_deficiency_reduces_degree(self):
        # perfectly collinear inputs leave duplicate design columns
        x = np.linspace(0.0, 1.0, 50)
        y = 3.0 + x
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            poly = fit_region_polynomial([x, 2.0 * x], y, 1)
        assert any("degree" in str(w.message) for w in rec)
        assert len(poly.powers) == 1

    def test_chebyshev_nodes_shared_endpoints(self):
        nodes = chebyshev_nodes(2.0, 10.0, 5)
        assert nodes[0] == pytest.approx(2.0)
        assert nodes[-1] == pytest.approx(10.0)
        assert np.all(np.diff(nodes) > 0)


class TestStatic:
    def test_matches_independent_oracle(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, n=400_000)
        got = price_static(scen, cf())
        ref, ref_se = bs_static_value(100.0, 5.0, 1, 0.1, 0.05, 0.2, 0.02,
                                      400_000, seed=99)
        err = math.hypot(got.std_error, ref_se)
        assert abs(got.value - ref) < 3.5 * err

    def test_degenerate_deterministic_cash(self):
        # no volatility, no rate, no fees: the value is the premium itself
        p = HullWhiteParams(s0=100.0, sigma=1e-12, k=1.0, omega=0.0, rho=0.0,
                            curve=YieldCurve.flat(0.0))
        times = np.concatenate(([0.0], np.arange(1.0, 6.0)))
        scen = standard_hw_paths(p, 100, times, seed=1)
        got = price_static(scen, cf(alpha_g=0.0, kappa=0.1))
        assert got.value == pytest.approx(100.0, abs=1e-9)
        assert got.std_error == pytest.approx(0.0, abs=1e-9)

    def test_decreasing_in_fee(self, bs_cf_params):
        scen = bs_scen(bs_cf_params)
        vals = [price_static(scen, cf(alpha_g=a)).value
                for a in (0.0, 0.01, 0.02)]
        assert vals[0] > vals[1] > vals[2]

    def test_streaming_matches_materialised(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, n=130_000)
        whole = price_static(scen, cf())

        def chunks():
            yield bs_scen(bs_cf_params, n=65_536)
            times = scen.times
            yield standard_hw_paths(bs_cf_params, 130_000 - 65_536, times,
                                    seed=17, first_path=65_536)
        streamed = price_static(chunks(), cf())
        assert streamed.value == whole.value

    def test_deferred_yd_benchmark(self, heston_cf_params):
        params = HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.0,
                                 rho=0.0, curve=YieldCurve.flat(0.0325))
        times = np.concatenate(([0.0, 10.0], np.arange(11.0, 26.0)))
        scen = standard_hw_paths(params, 400_000, times, seed=31)
        c = YDContractSpec(premium=100.0, t1=10.0, t2=25.0, m=1, kappa=0.1,
                           fees=FeeStructure(alpha_g=254.01e-4))
        got = price_static(scen, c)
        assert abs(got.value - 100.0) < 3.5 * got.std_error


class TestOptimalWithdrawal:
    def test_dynamic_dominates_static(self, bs_cf_params):
        # by-lines regression: the realised optimal policy beats always-G
        scen = bs_scen(bs_cf_params, n=60_000)
        c = cf(alpha_g=0.02)
        stat = price_static(scen, c)
        dyn = price_optimal_withdrawal_by_lines(scen, c, degree=3)
        assert dyn.value >= stat.value - stat.std_error
        # the fast full-regression route sits close but may lag slightly
        full = price_optimal_withdrawal_full(scen, c, degree=2)
        assert full.value >= stat.value - 3.0 * stat.std_error

    def test_full_confiscation_reduces_to_static(self, bs_cf_params):
        # kappa = 1: any excess withdrawal is fully confiscated, so the
        # optimal interior policy never exceeds G
        scen = bs_scen(bs_cf_params, t2=2.0, n=60_000)
        c = cf(t2=2.0, alpha_g=0.02, kappa=1.0)
        stat = price_static(scen, c)
        dyn = price_optimal_withdrawal_full(scen, c, degree=2)
        err = math.hypot(stat.std_error, dyn.std_error)
        assert abs(dyn.value - stat.value) < 3 * err

    def test_single_event_contract_closed_form(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, t2=1.0, n=60_000)
        c = cf(t2=1.0, alpha_g=0.01)
        dyn = price_optimal_withdrawal_full(scen, c, degree=2)
        ratios = scen.s[:, 1] / scen.s[:, 0] * math.exp(-0.01)
        ref = (np.exp(-scen.disc[:, 0])
               * final_value_cf(100.0 * ratios, 100.0, 100.0, 0.1)).mean()
        assert dyn.value == pytest.approx(ref, rel=1e-12)

    def test_by_lines_beats_full_regression(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, t2=5.0, n=60_000, seed=23)
        c = cf(t2=5.0, alpha_g=248.33e-4)
        full = price_optimal_withdrawal_full(scen, c, degree=3)
        lines = price_optimal_withdrawal_by_lines(scen, c, degree=3)
        err = math.hypot(full.std_error, lines.std_error)
        assert lines.value >= full.value - err

    def test_determinism(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, t2=3.0, n=30_000)
        c = cf(t2=3.0)
        a = price_optimal_withdrawal_full(scen, c, degree=2)
        b = price_optimal_withdrawal_full(scen, c, degree=2)
        assert a.value == b.value


class TestOptimalSurrender:
    def test_full_penalty_never_surrenders(self, bs_cf_params):
        scen = bs_scen(bs_cf_params, t2=5.0, n=60_000)
        c = YDContractSpec(premium=100.0, t1=0.0, t2=5.0, m=1, kappa=1.0,
                           fees=FeeStructure(alpha_g=0.01))
        stat = price_static(scen, c)
        sur = price_optimal_surrender_yd(scen, c, degree=3)
        err = math.hypot(stat.std_error, sur.std_error)
        assert abs(sur.value - stat.value) <= 3 * err

    def test_surrender_dominates_static(self, bs_cf_params):
        params = HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.0,
                                 rho=0.0, curve=YieldCurve.flat(0.0325))
        times = np.concatenate(([0.0], np.arange(1.0, 26.0)))
        scen = standard_hw_paths(params, 100_000, times, seed=29)
        c = YDContractSpec(premium=100.0, t1=0.0, t2=25.0, m=1, kappa=0.1,
                           fees=FeeStructure(alpha_g=0.0150))
        stat = price_static(scen, c)
        sur = price_optimal_surrender_yd(scen, c, degree=4)
        assert sur.value >= stat.value - stat.std_error

    def test_constant_regression_still_dominates(self, bs_cf_params):
        params = HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.0,
                                 rho=0.0, curve=YieldCurve.flat(0.0325))
        times = np.concatenate(([0.0], np.arange(1.0, 26.0)))
        scen = standard_hw_paths(params, 100_000, times, seed=29)
        c = YDContractSpec(premium=100.0, t1=0.0, t2=25.0, m=1, kappa=0.1,
                           fees=FeeStructure(alpha_g=0.0150))
        stat = price_static(scen, c)
        sur = price_optimal_surrender_yd(scen, c, degree=0)
        assert sur.value >= stat.value - stat.std_error

    def test_benchmark_fee_bs(self):
        # immediate YD with the surrender option under plain Black-Scholes
        params = HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.0,
                                 rho=0.0, curve=YieldCurve.flat(0.0325))
        times = np.concatenate(([0.0], np.arange(1.0, 26.0)))
        scen = standard_hw_paths(params, 200_000, times, seed=37)

        def value(ag):
            c = YDContractSpec(premium=100.0, t1=0.0, t2=25.0, m=1,
                               kappa=0.1, fees=FeeStructure(alpha_g=ag))
            return price_optimal_surrender_yd(scen, c, degree=4)
        a0, a1 = 0.0, 0.02
        v0, v1 = value(a0).value, value(a1).value
        res = None
        for _ in range(8):
            a2 = a1 - (v1 - 100.0) * (a1 - a0) / (v1 - v0)
            a0, v0 = a1, v1
            a1 = a2
            res = value(a1)
            v1 = res.value
            if abs(v1 - 100.0) < 0.01:
                break
        slope = abs((v1 - v0) / (a1 - a0)) / 1e4
        fee_se = res.std_error / slope
        assert abs(a1 * 1e4 - 158.28) < 3.0 * fee_se + 1.0
