"""Reference values and resolution configurations for the test harness.

``REFERENCE`` holds the published benchmark numbers this engine is
validated against (fair guarantee fees in basis points with Monte Carlo
half-widths where available, and deltas); ``LADDERS`` holds the A-D
resolution configurations per (model, product, mode, method), read as

    HMC / SMC : (fine steps per year, paths[, polynomial degree])
    HPDE      : (steps per year, space nodes)
    APDE      : (steps per year, account nodes, factor nodes)

Two entries of the published configuration table are internally
inconsistent (a coarser rung with more nodes/paths than the next finer
one); they are replaced here by the values the surrounding ladder implies:
the A-rung APDE factor-node count (505 -> 50) and the B-rung dynamic
Heston MC path counts (1.2e4/1.3e4 -> 1.2e5/1.3e5).
"""

from __future__ import annotations

from .models import FeeStructure, HestonParams, HullWhiteParams, YieldCurve
from .contract import CFContractSpec, YDContractSpec

__all__ = ["MODELS", "CONTRACTS", "LADDERS", "REFERENCE", "DELTA_FEES_BP"]


def model_params(name: str):
    """Named parameter sets used by the benchmark tables."""
    if name == "bs-cf":
        return HullWhiteParams(s0=100.0, sigma=0.2, k=1.0, omega=0.0,
                               rho=0.0, curve=YieldCurve.flat(0.05))
    if name == "bs-yd":
        return HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.0,
                               rho=0.0, curve=YieldCurve.flat(0.0325))
    if name == "bshw-cf":
        return HullWhiteParams(s0=100.0, sigma=0.2, k=1.0, omega=0.2,
                               rho=-0.5, curve=YieldCurve.flat(0.05))
    if name == "bshw-yd":
        return HullWhiteParams(s0=100.0, sigma=0.3, k=1.0, omega=0.2,
                               rho=-0.5, curve=YieldCurve.flat(0.0325))
    if name == "heston-cf":
        return HestonParams(s0=100.0, v0=0.04, theta=0.04, k=1.0, omega=0.2,
                            rho=-0.5, r=0.05)
    if name == "heston-yd":
        return HestonParams(s0=100.0, v0=0.09, theta=0.09, k=1.0, omega=0.2,
                            rho=-0.5, r=0.0325)
    raise KeyError(name)


MODELS = ("bs", "bshw", "heston")
CONTRACTS = ("cf", "yd")

# (model, product, mode, method) -> {config letter: tuple}
LADDERS = {
    ("bshw", "cf", "static", "hmc"): {
        "A": (4, 920_000), "B": (8, 1_800_000),
        "C": (12, 6_300_000), "D": (16, 19_000_000)},
    ("bshw", "cf", "static", "smc"): {
        "A": (1, 1_700_000), "B": (1, 5_700_000),
        "C": (1, 29_000_000), "D": (1, 120_000_000)},
    ("bshw", "cf", "static", "hpde"): {
        "A": (260, 250), "B": (420, 500), "C": (780, 1000), "D": (1200, 2000)},
    ("bshw", "cf", "static", "apde"): {
        "A": (25, 250, 50), "B": (40, 400, 85),
        "C": (60, 620, 125), "D": (100, 1000, 215)},
    ("heston", "cf", "static", "hmc"): {
        "A": (4, 580_000), "B": (8, 1_200_000),
        "C": (12, 3_900_000), "D": (16, 12_000_000)},
    ("heston", "cf", "static", "smc"): {
        "A": (4, 520_000), "B": (8, 1_200_000),
        "C": (12, 3_400_000), "D": (16, 11_000_000)},
    ("heston", "cf", "static", "hpde"): {
        "A": (270, 250), "B": (520, 500), "C": (850, 1000), "D": (1400, 2000)},
    ("heston", "cf", "static", "apde"): {
        "A": (25, 250, 50), "B": (40, 400, 80),
        "C": (60, 620, 120), "D": (100, 1000, 200)},
    ("bshw", "cf", "dynamic", "hmc"): {
        "A": (4, 60_000, 1), "B": (8, 87_000, 2),
        "C": (12, 180_000, 3), "D": (16, 350_000, 4)},
    ("bshw", "cf", "dynamic", "smc"): {
        "A": (1, 65_000, 1), "B": (1, 95_000, 2),
        "C": (1, 190_000, 3), "D": (1, 350_000, 4)},
    ("bshw", "cf", "dynamic", "hpde"): {
        "A": (70, 250), "B": (160, 500), "C": (270, 1000), "D": (360, 2000)},
    ("bshw", "cf", "dynamic", "apde"): {
        "A": (8, 95, 30), "B": (14, 150, 48),
        "C": (22, 250, 75), "D": (35, 400, 120)},
    ("heston", "cf", "dynamic", "hmc"): {
        "A": (4, 51_000, 1), "B": (8, 120_000, 2),
        "C": (12, 230_000, 3), "D": (16, 420_000, 4)},
    ("heston", "cf", "dynamic", "smc"): {
        "A": (4, 55_000, 1), "B": (8, 130_000, 2),
        "C": (12, 250_000, 3), "D": (16, 500_000, 4)},
    ("heston", "cf", "dynamic", "hpde"): {
        "A": (88, 250), "B": (160, 500), "C": (266, 1000), "D": (350, 2000)},
    ("heston", "cf", "dynamic", "apde"): {
        "A": (10, 125, 25), "B": (15, 200, 40),
        "C": (25, 320, 60), "D": (40, 500, 90)},
    ("bshw", "yd", "static", "hmc"): {
        "A": (4, 320_000), "B": (8, 640_000),
        "C": (12, 2_200_000), "D": (16, 6_800_000)},
    ("bshw", "yd", "static", "smc"): {
        "A": (1, 600_000), "B": (1, 2_300_000),
        "C": (1, 12_000_000), "D": (1, 45_000_000)},
    ("bshw", "yd", "static", "hpde"): {
        "A": (130, 250), "B": (215, 500), "C": (415, 1000), "D": (480, 2000)},
    ("bshw", "yd", "static", "apde"): {
        "A": (10, 245, 50), "B": (15, 375, 80),
        "C": (35, 520, 110), "D": (55, 880, 180)},
    ("heston", "yd", "static", "hmc"): {
        "A": (4, 230_000), "B": (8, 460_000),
        "C": (12, 1_600_000), "D": (16, 4_800_000)},
    ("heston", "yd", "static", "smc"): {
        "A": (4, 200_000), "B": (8, 380_000),
        "C": (12, 1_300_000), "D": (16, 4_000_000)},
    ("heston", "yd", "static", "hpde"): {
        "A": (120, 250), "B": (220, 500), "C": (425, 1000), "D": (480, 2000)},
    ("heston", "yd", "static", "apde"): {
        "A": (10, 250, 50), "B": (15, 380, 80),
        "C": (36, 530, 110), "D": (55, 890, 180)},
    ("bshw", "yd", "surrender", "hmc"): {
        "A": (4, 68_000, 1), "B": (8, 250_000, 2),
        "C": (12, 690_000, 3), "D": (16, 1_800_000, 4)},
    ("bshw", "yd", "surrender", "smc"): {
        "A": (1, 81_000, 1), "B": (1, 340_000, 2),
        "C": (1, 970_000, 3), "D": (1, 1_800_000, 4)},
    ("heston", "yd", "surrender", "hmc"): {
        "A": (4, 55_000, 2), "B": (8, 220_000, 3),
        "C": (12, 590_000, 4), "D": (16, 1_500_000, 5)},
    ("heston", "yd", "surrender", "smc"): {
        "A": (4, 58_000, 2), "B": (8, 200_000, 3),
        "C": (12, 560_000, 4), "D": (16, 1_500_000, 5)},
}
# YD PDE ladders are shared between static and surrender modes
for _model in ("bshw", "heston"):
    for _meth in ("hpde", "apde"):
        LADDERS[(_model, "yd", "surrender", _meth)] = \
            LADDERS[(_model, "yd", "static", _meth)]
# plain BS runs reuse the BSHW ladders (degenerate factor)
for (_m, _p, _mo, _me), _v in list(LADDERS.items()):
    if _m == "bshw":
        LADDERS[("bs", _p, _mo, _me)] = _v


# fair guarantee fees in bp; (value, half_width) where a CI was published
REFERENCE = {
    "bs_static": {(1, 5): 235.24, (1, 10): 92.41, (1, 20): 27.64,
                  (2, 5): 243.96, (2, 10): 94.62, (2, 20): 28.09},
    "bs_static_mc": {(1, 5): (235.11, 0.42), (1, 10): (92.28, 0.30),
                     (1, 20): (27.79, 0.24), (2, 5): (243.80, 0.42),
                     (2, 10): (94.84, 0.30), (2, 20): (28.39, 0.24)},
    "bs_dynamic": {(1, 5): 248.33, (1, 10): 129.18, (1, 20): 66.42,
                   (2, 5): 258.20, (2, 10): 133.60, (2, 20): 68.59},
    "bs_dynamic_mc": {(1, 5): (247.75, 1.39), (1, 10): (128.58, 1.08),
                      (1, 20): (66.20, 0.89), (2, 5): (257.32, 1.42),
                      (2, 10): (133.09, 1.11), (2, 20): (68.52, 1.29)},
    "bshw_static": {(1, 5): (191.34, 0.11), (1, 10): (79.44, 0.08),
                    (1, 20): (24.81, 0.07), (2, 5): (196.77, 0.11),
                    (2, 10): (80.97, 0.08), (2, 20): (25.16, 0.07)},
    "heston_static": {(1, 5): (231.38, 0.10), (1, 10): (95.81, 0.08),
                      (1, 20): (30.57, 0.06), (2, 5): (239.54, 0.11),
                      (2, 10): (97.98, 0.09), (2, 20): (31.05, 0.07)},
    "bshw_dynamic": {(1, 5): (282.00, 1.54), (1, 10): (162.51, 1.23),
                     (1, 20): (84.01, 1.03), (2, 5): (319.00, 1.69),
                     (2, 10): (186.42, 1.39), (2, 20): (98.96, 1.64)},
    "heston_dynamic": {(1, 5): (246.45, 1.07), (1, 10): (133.72, 0.86),
                       (1, 20): (69.35, 0.72), (2, 5): (255.20, 1.10),
                       (2, 10): (137.00, 0.87), (2, 20): (71.82, 1.05)},
    # deltas (dimensionless), WF=1 and WF=2 rows
    "bshw_delta_static": {(1, 5): 0.6213, (1, 10): 0.7154, (1, 20): 0.8016,
                          (2, 5): 0.6180, (2, 10): 0.7132, (2, 20): 0.8004},
    "heston_delta_static": {(1, 5): 0.6131, (1, 10): 0.7285, (1, 20): 0.8056,
                            (2, 5): 0.6098, (2, 10): 0.7262, (2, 20): 0.8047},
    "bshw_delta_dynamic": {(1, 5): 0.4514, (1, 10): 0.4593, (1, 20): 0.4083,
                           (2, 5): 0.4181, (2, 10): 0.4291, (2, 20): 0.3857},
    "heston_delta_dynamic": {(1, 5): 0.5637, (1, 10): 0.5983, (1, 20): 0.5635,
                             (2, 5): 0.5599, (2, 10): 0.5914, (2, 20): 0.5343},
    # YD products, keyed by (t1, t2)
    "yd_bs_static": {(0, 25): 102.02, (10, 25): 254.01},
    "yd_bs_static_mc": {(0, 25): (101.95, 0.21), (10, 25): (253.99, 0.16)},
    "yd_bs_surrender": {(0, 25): 158.28, (10, 25): 305.35},
    "yd_bs_surrender_mc": {(0, 25): (157.33, 0.41), (10, 25): (305.26, 0.50)},
    "yd_bshw_static": {(0, 25): (80.65, 0.20), (10, 25): (210.76, 0.17)},
    "yd_bshw_surrender": {(0, 25): (92.95, 0.78), (10, 25): (241.41, 0.93)},
    "yd_heston_static": {(0, 25): (100.71, 0.52), (10, 25): (244.52, 0.41)},
    "yd_heston_surrender": {(0, 25): (143.71, 0.57), (10, 25): (286.39, 0.65)},
}

# fee levels (bp) at which the benchmark deltas are computed
DELTA_FEES_BP = {
    ("bshw", "static"): {5: 200.0, 10: 100.0, 20: 50.0},
    ("heston", "static"): {5: 250.0, 10: 100.0, 20: 50.0},
    ("bshw", "dynamic"): {5: 350.0, 10: 200.0, 20: 150.0},
    ("heston", "dynamic"): {5: 300.0, 10: 150.0, 20: 100.0},
}
