import math

import mpmath
import numpy as np
import pytest

from gmwb.models import FeeStructure, HestonParams, HullWhiteParams, YieldCurve


def hw(omega=0.2, k=1.0, r0=0.05, sigma=0.2, rho=-0.5, curve=None):
    return HullWhiteParams(s0=100.0, sigma=sigma, k=k, omega=omega, rho=rho,
                           curve=curve or YieldCurve.flat(r0))


class TestBeta:
    def test_at_zero(self):
        assert hw().beta(0.0) == pytest.approx(0.05, abs=1e-15)

    def test_omega_limit(self):
        p = hw(omega=1e-12)
        for t in (0.5, 3.0, 40.0):
            assert p.beta(t) == pytest.approx(0.05, abs=1e-12)

    def test_closed_form_high_precision(self):
        # oracle: 50-digit evaluation of r0 + omega^2/(2k^2) (1-e^{-kt})^2
        mpmath.mp.dps = 50
        expected = float(mpmath.mpf("0.05")
                         + mpmath.mpf("0.02") * (1 - mpmath.e ** -1) ** 2)
        assert hw().beta(1.0) == pytest.approx(expected, rel=1e-14)

    def test_monotone_floor_and_limit(self):
        p = hw()
        ts = np.linspace(0.0, 60.0, 200)
        vals = p.beta(ts)
        assert np.all(vals >= 0.05 - 1e-15)
        assert vals[-1] == pytest.approx(0.05 + 0.2 ** 2 / 2.0, rel=1e-8)

    def test_beta_integral_matches_quadrature(self):
        p = hw()
        mpmath.mp.dps = 50
        ref = float(mpmath.quad(
            lambda t: mpmath.mpf("0.05")
            + mpmath.mpf("0.02") * (1 - mpmath.e ** (-t)) ** 2,
            [mpmath.mpf("0.5"), mpmath.mpf("7.25")]))
        assert p.beta_integral(0.5, 7.25) == pytest.approx(ref, rel=1e-13)


class TestThetaT:
    def test_at_zero_and_omega_limit(self):
        assert hw().theta_t(0.0) == pytest.approx(0.05, abs=1e-15)
        assert hw(omega=1e-12).theta_t(9.0) == pytest.approx(0.05, abs=1e-12)

    def test_closed_form(self):
        mpmath.mp.dps = 50
        expected = float(mpmath.mpf("0.0325")
                         + mpmath.mpf("0.02") * (1 - mpmath.e ** -4))
        assert hw(r0=0.0325).theta_t(2.0) == pytest.approx(expected, rel=1e-14)

    def test_rejects_tabulated_curves(self):
        curve = YieldCurve.tabulated([(0.0, 0.03), (10.0, 0.05)])
        with pytest.raises(ValueError):
            hw(curve=curve).theta_t(1.0)


class TestZcb:
    def test_flat(self):
        c = YieldCurve.flat(0.05)
        assert c.zcb_price(0.0) == 1.0
        assert c.zcb_price(10.0) == pytest.approx(math.exp(-0.5), rel=1e-14)

    def test_tabulated_trapezoid(self):
        c = YieldCurve.tabulated([(0.0, 0.03), (10.0, 0.05)])
        assert c.zcb_price(10.0) == pytest.approx(math.exp(-0.4), rel=1e-12)
        # piecewise-linear forward: integral over [0, 5] is 0.03*5 + 0.001*25
        assert c.forward_integral(0.0, 5.0) == pytest.approx(0.175, rel=1e-12)

    def test_constant_extrapolation(self):
        c = YieldCurve.tabulated([(0.0, 0.03), (10.0, 0.05)])
        assert c.forward(15.0) == pytest.approx(0.05)

    def test_strictly_decreasing(self):
        c = YieldCurve.tabulated([(0.0, 0.01), (5.0, 0.04), (7.0, 0.02)])
        ts = np.linspace(0.0, 12.0, 60)
        prices = [c.zcb_price(t) for t in ts]
        assert all(b < a for a, b in zip(prices, prices[1:]))


class TestValidation:
    def test_heston_bounds(self):
        with pytest.raises(ValueError):
            HestonParams(s0=-1, v0=0.04, theta=0.04, k=1, omega=0.2,
                         rho=-0.5, r=0.05)
        with pytest.raises(ValueError):
            HestonParams(s0=100, v0=0.04, theta=0.04, k=1, omega=0.2,
                         rho=-1.5, r=0.05)

    def test_curve_validation(self):
        with pytest.raises(ValueError):
            YieldCurve.tabulated([(1.0, 0.03), (10.0, 0.05)])
        with pytest.raises(ValueError):
            YieldCurve.tabulated([(0.0, 0.03), (0.0, 0.05)])

    def test_fee_structure(self):
        with pytest.raises(ValueError):
            FeeStructure(alpha_m=-0.01)
        # negative guarantee fees occur transiently during the root search
        assert FeeStructure(alpha_g=-0.005).total == pytest.approx(-0.005)
