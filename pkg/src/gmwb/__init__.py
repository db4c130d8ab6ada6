"""GMWB variable-annuity pricing engine.

Four pricing methods for Guaranteed Minimum Withdrawal Benefit riders under
the Heston and Black-Scholes Hull-White models: hybrid tree Monte Carlo,
standard Monte Carlo, a hybrid tree / 1D finite-difference solver and a 2D
ADI (Douglas) finite-difference solver, plus a fair-fee secant driver and
bump-and-reprice deltas.
"""

from .models import FeeStructure, HestonParams, HullWhiteParams, YieldCurve
from .contract import CFContractSpec, YDContractSpec
from .results import PricingResult

__version__ = "0.1.0"

__all__ = [
    "FeeStructure",
    "HestonParams",
    "HullWhiteParams",
    "YieldCurve",
    "CFContractSpec",
    "YDContractSpec",
    "PricingResult",
    "__version__",
]
