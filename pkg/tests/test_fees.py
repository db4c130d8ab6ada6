import math

import numpy as np
import pytest

from gmwb.engine import Engine, RunSpec
from gmwb.fees import FeeSearchError, SecantConfig, fair_fee
from gmwb.results import PricingResult


class TestFairFee:
    def test_bs_static_reference(self):
        eng = Engine(RunSpec(model="bs", product="cf", mode="static",
                             method="hpde", t2=5, wf=1, config="C"))
        fee = eng.fair_fee()
        assert abs(fee.alpha_bp - 235.24) < 0.5
        assert fee.converged

    def test_start_pair_insensitive(self):
        spec = RunSpec(model="bs", product="cf", mode="static",
                       method="hpde", t2=10, wf=1, config="B")
        f1 = Engine(spec).fair_fee(SecantConfig(alpha0=0.0, alpha1=0.02))
        f2 = Engine(spec).fair_fee(SecantConfig(alpha0=0.005, alpha1=0.015))
        assert abs(f1.alpha_bp - f2.alpha_bp) < 0.1

    def test_value_monotone_in_fee(self):
        eng = Engine(RunSpec(model="bshw", product="cf", mode="static",
                             method="smc", t2=5, wf=1, config="A", seed=5))
        vals = [eng.price(bp * 1e-4, "A").value
                for bp in (0.0, 100.0, 200.0, 300.0, 400.0)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_superlinear_on_pde(self):
        eng = Engine(RunSpec(model="bs", product="cf", mode="static",
                             method="hpde", t2=10, wf=1, config="A"))
        resid = []

        def value_at(alpha, rung):
            res = eng.price(alpha, "A")
            resid.append(abs(res.value - 100.0))
            return res

        fair_fee(value_at, 100.0, 1, SecantConfig(tol=1e-6, max_iter=10))
        # after the bracketing pair, each secant step shrinks the residual
        assert all(b <= a for a, b in zip(resid[2:], resid[3:]))

    def test_divergence_raises_with_iterate(self):
        def value_at(alpha, rung):
            return PricingResult(value=100.0 + 10.0 * math.sin(500.0 * alpha))

        with pytest.raises(FeeSearchError) as exc:
            fair_fee(value_at, 105.0, 1, SecantConfig(max_iter=6))
        assert exc.value.result.evaluations >= 6


class TestDelta:
    def test_bshw_static_grid_read(self):
        eng = Engine(RunSpec(model="bshw", product="cf", mode="static",
                             method="hpde", t2=5, wf=1, config="B"))
        delta = eng.delta(200e-4)
        assert abs(delta - 0.6213) < 0.0015

    def test_heston_static_grid_read(self):
        eng = Engine(RunSpec(model="heston", product="cf", mode="static",
                             method="hpde", t2=10, wf=1, config="B"))
        delta = eng.delta(100e-4)
        assert abs(delta - 0.7285) < 0.0015

    def test_bump_route_matches_grid(self):
        eng = Engine(RunSpec(model="bshw", product="cf", mode="static",
                             method="hpde", t2=5, wf=1, config="B"))
        grid = eng.delta(200e-4, route="grid")
        bump = eng.delta(200e-4, route="bump")
        assert abs(grid - bump) < 5e-4

    def test_mc_delta_common_random_numbers(self):
        eng = Engine(RunSpec(model="bshw", product="cf", mode="static",
                             method="smc", t2=5, wf=1, config="A", seed=3,
                             resolution=(1, 200_000)))
        delta = eng.delta(200e-4)
        assert abs(delta - 0.6213) < 0.003

    def test_crn_variance_reduction(self, bshw_cf_params):
        # batch deltas: common random numbers vs independent shocks
        import numpy as np
        from gmwb.contract import CFContractSpec
        from gmwb.mc_pricer import price_static
        from gmwb.models import FeeStructure
        from gmwb.scenario import standard_hw_paths
        times = np.concatenate(([0.0], np.arange(1.0, 6.0)))
        c = CFContractSpec(100.0, 5.0, 1, 0.1, FeeStructure(alpha_g=0.02))
        eps = 1e-3
        crn, indep = [], []
        for b in range(10):
            s1 = standard_hw_paths(bshw_cf_params, 20_000, times, seed=100 + b)
            up = price_static(s1, c, a0_scale=1 + eps).value
            dn = price_static(s1, c, a0_scale=1 - eps).value
            crn.append((up - dn) / (2 * eps * 100.0))
            s2 = standard_hw_paths(bshw_cf_params, 20_000, times, seed=500 + b)
            up = price_static(s1, c, a0_scale=1 + eps).value
            dn = price_static(s2, c, a0_scale=1 - eps).value
            indep.append((up - dn) / (2 * eps * 100.0))
        assert np.std(indep) > 10.0 * np.std(crn)

    def test_zero_volatility_analytic_slope(self):
        # deterministic fund: the terminal account is linear in the
        # initial account, so delta has a closed form
        from gmwb.models import HullWhiteParams, YieldCurve
        p = HullWhiteParams(s0=100.0, sigma=1e-8, k=1.0, omega=0.0, rho=0.0,
                            curve=YieldCurve.flat(0.05))
        spec = RunSpec(model="bs", product="cf", mode="static", method="smc",
                       t2=5, wf=1, config="A", params=p, seed=1,
                       resolution=(1, 1000))
        eng = Engine(spec)
        alpha = 100e-4
        delta = eng.delta(alpha)
        growth = math.exp((0.05 - alpha) * 1.0)
        # account stays above the withdrawal drain throughout
        ref = math.exp(-0.05 * 5.0) * growth ** 5
        assert abs(delta - ref) < 1e-6
