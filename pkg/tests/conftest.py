import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from gmwb.models import FeeStructure, HestonParams, HullWhiteParams, YieldCurve


@pytest.fixture(scope="session")
def heston_cf_params():
    """Stochastic-volatility parameters of the CF benchmark set."""
    return HestonParams(s0=100.0, v0=0.04, theta=0.04, k=1.0, omega=0.2,
                        rho=-0.5, r=0.05)


@pytest.fixture(scope="session")
def bshw_cf_params():
    """Stochastic-rate parameters of the CF benchmark set."""
    return HullWhiteParams(s0=100.0, sigma=0.2, k=1.0, omega=0.2, rho=-0.5,
                           curve=YieldCurve.flat(0.05))


@pytest.fixture(scope="session")
def bs_cf_params():
    """Plain Black-Scholes via the degenerate rate model."""
    return HullWhiteParams(s0=100.0, sigma=0.2, k=1.0, omega=0.0, rho=0.0,
                           curve=YieldCurve.flat(0.05))


def secant_fee(value_fn, premium=100.0, tol=0.003, a0=0.0, a1=0.02,
               max_iter=10):
    """Small local secant helper for tests that price directly."""
    v0, v1 = value_fn(a0), value_fn(a1)
    for _ in range(max_iter):
        a2 = a1 - (v1 - premium) * (a1 - a0) / (v1 - v0)
        a0, v0 = a1, v1
        a1 = a2
        v1 = value_fn(a1)
        if abs(v1 - premium) < tol:
            break
    return a1 * 1e4
