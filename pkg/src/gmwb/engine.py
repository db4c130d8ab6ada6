"""High-level runner: one entry point per (model, contract, method, mode).

``Engine`` owns the expensive shared state of a pricing task (lattices and
scenario sets, cached per resolution rung) so that fee searches reprice
under common random numbers, and maps resolution letters A-D onto the
benchmark configuration ladders.  Static Monte Carlo at very large path
counts streams scenario chunks instead of materialising them; chunk seeds
depend only on the absolute path index, so streamed and materialised runs
agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np

from . import benchmarks
from .contract import CFContractSpec, YDContractSpec
from .fees import FeeResult, SecantConfig, fair_fee
from .lattice import (Lattice, build_chain_lattice, build_heston_lattice,
                      build_hw_lattice)
from .mc_pricer import (price_optimal_surrender_yd,
                        price_optimal_withdrawal_by_lines,
                        price_optimal_withdrawal_full, price_static)
from .models import FeeStructure, HestonParams, HullWhiteParams
from .adi_pde import price_adi
from .hybrid_pde import price_hybrid
from .results import PricingResult
from .scenario import (CHUNK_PATHS, hybrid_heston_paths, hybrid_hw_paths,
                       standard_heston_paths, standard_hw_paths)

__all__ = ["RunSpec", "Engine"]

_LETTERS = ("A", "B", "C", "D")
# above this many stored samples, static MC streams chunks per evaluation
_MATERIALISE_LIMIT = 100_000_000


@dataclass(frozen=True)
class RunSpec:
    """One pricing task; everything an Engine needs to price it."""

    model: str                       # "bs" | "bshw" | "heston"
    product: str                     # "cf" | "yd"
    mode: str                        # "static" | "dynamic" | "surrender"
    method: str                      # "hmc" | "smc" | "hpde" | "apde"
    t2: float = 10.0
    wf: int = 1
    t1: float = 0.0
    m: int = 1
    kappa: float = 0.1
    premium: float = 100.0
    alpha_m: float = 0.0
    rollup: float = 0.0
    config: str = "B"
    degree: Optional[int] = None
    algorithm: str = "full"          # MC dynamic: "full" | "lines"
    seed: int = 20240901
    antithetic: bool = False
    params: object = None            # explicit model parameters (optional)
    resolution: Optional[Tuple] = None   # explicit numbers instead of a letter

    def __post_init__(self):
        if self.model not in ("bs", "bshw", "heston"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.product not in ("cf", "yd"):
            raise ValueError(f"unknown product {self.product!r}")
        if self.mode not in ("static", "dynamic", "surrender"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in ("hmc", "smc", "hpde", "apde"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode == "dynamic" and self.product != "cf":
            raise ValueError("dynamic withdrawal needs the cf product")
        if self.mode == "surrender" and self.product != "yd":
            raise ValueError("surrender needs the yd product")
        if self.config not in _LETTERS:
            raise ValueError("config letter must be one of A, B, C, D")


class Engine:
    """Caches lattices/scenarios for a RunSpec and prices at given fees."""

    def __init__(self, spec: RunSpec):
        self.spec = spec
        self.params = spec.params if spec.params is not None else \
            benchmarks.model_params(f"{spec.model}-{spec.product}")
        self._lattices = {}
        self._scenarios = {}

    # -- structure ----------------------------------------------------------
    def contract(self, alpha_g: float):
        s = self.spec
        fees = FeeStructure(alpha_m=s.alpha_m, alpha_g=alpha_g)
        if s.product == "cf":
            return CFContractSpec(premium=s.premium, t2=s.t2, wf=s.wf,
                                  kappa=s.kappa, fees=fees)
        return YDContractSpec(premium=s.premium, t1=s.t1, t2=s.t2, m=s.m,
                              kappa=s.kappa, rollup=s.rollup, fees=fees)

    def ladder(self):
        """Resolution letters used by the fee search, coarse to target."""
        if self.spec.resolution is not None:
            return [self.spec.config]
        return list(_LETTERS[:_LETTERS.index(self.spec.config) + 1])

    def resolution(self, letter: str) -> Tuple:
        if self.spec.resolution is not None:
            return self.spec.resolution
        s = self.spec
        return benchmarks.LADDERS[(s.model, s.product, s.mode, s.method)][letter]

    def degree(self, letter: str) -> int:
        if self.spec.degree is not None:
            return self.spec.degree
        res = self.resolution(letter)
        if len(res) >= 3 and self.spec.method in ("hmc", "smc"):
            return int(res[2])
        return 4

    # -- grids and scenarios --------------------------------------------------
    def _report_times(self) -> np.ndarray:
        c = self.contract(0.0)
        times = [0.0]
        if self.spec.product == "yd" and self.spec.t1 > 0:
            times.append(self.spec.t1)
        return np.concatenate((times, c.event_times()))

    def _lattice(self, steps_per_year: int) -> Lattice:
        s = self.spec
        key = steps_per_year
        if key not in self._lattices:
            n = int(round(s.t2 * steps_per_year))
            if s.model == "bs":
                lat = build_chain_lattice(s.t2, n)
            elif s.model == "bshw":
                lat = build_hw_lattice(self.params, s.t2, n)
            else:
                lat = build_heston_lattice(self.params, s.t2, n)
            self._lattices[key] = lat
        return self._lattices[key]

    def _scenarios_for(self, letter: str):
        """Materialised ScenarioSet for MC pricing at this rung."""
        if letter in self._scenarios:
            return self._scenarios[letter]
        res = self.resolution(letter)
        spy, n_paths = int(res[0]), int(res[1])
        scen = self._sample(spy, n_paths, 0)
        self._scenarios[letter] = scen
        return scen

    def _sample(self, spy: int, n_paths: int, first_path: int):
        s = self.spec
        times = self._report_times()
        if s.method == "hmc":
            lat = self._lattice(max(spy, s.wf))
            if s.model == "heston":
                return hybrid_heston_paths(lat, self.params, n_paths, times,
                                           s.seed, s.antithetic, first_path)
            return hybrid_hw_paths(lat, self.params, n_paths, times,
                                   s.seed, s.antithetic, first_path)
        if s.model == "heston":
            return standard_heston_paths(self.params, n_paths, times, spy,
                                         s.seed, s.antithetic, first_path)
        return standard_hw_paths(self.params, n_paths, times, s.seed,
                                 s.antithetic, spy, first_path)

    # -- pricing --------------------------------------------------------------
    def price(self, alpha_g: float, letter: Optional[str] = None,
              a0_scale: float = 1.0, readout_scales: Tuple[float, ...] = (),
              capture_level: Optional[int] = None) -> PricingResult:
        s = self.spec
        letter = letter or s.config
        contract = self.contract(alpha_g)
        res = self.resolution(letter)
        if s.method == "hpde":
            spy, ny = int(res[0]), int(res[1])
            lat = self._lattice(spy)
            return price_hybrid(lat, self.params, contract, s.mode, ny,
                                capture_level=capture_level,
                                readout_scales=(a0_scale,) if a0_scale != 1.0
                                else readout_scales or ())
        if s.method == "apde":
            spy, na, nu = int(res[0]), int(res[1]), int(res[2])
            return price_adi(self.params, contract, s.mode, na, nu, spy,
                             readout_scales=(a0_scale,) if a0_scale != 1.0
                             else readout_scales or ())
        # Monte Carlo routes
        spy, n_paths = int(res[0]), int(res[1])
        n_times = len(self._report_times())
        if s.mode == "static" and n_paths * n_times * 3 > _MATERIALISE_LIMIT:
            def chunks():
                start = 0
                block = 2 ** 19
                while start < n_paths:
                    n = min(block, n_paths - start)
                    yield self._sample(spy, n, start)
                    start += n
            out = price_static(chunks(), contract, a0_scale)
        else:
            scen = self._scenarios_for(letter)
            if s.mode == "static":
                out = price_static(scen, contract, a0_scale)
            elif s.mode == "surrender":
                out = price_optimal_surrender_yd(scen, contract,
                                                 self.degree(letter), a0_scale)
            elif s.algorithm == "lines":
                out = price_optimal_withdrawal_by_lines(
                    scen, contract, self.degree(letter), a0_scale)
            else:
                out = price_optimal_withdrawal_full(
                    scen, contract, self.degree(letter), a0_scale=a0_scale)
        out.method = s.method
        return out

    def value_result(self, alpha_g: float, letter: Optional[str] = None,
                     a0_scale: float = 1.0) -> PricingResult:
        res = self.price(alpha_g, letter, a0_scale=a0_scale)
        if a0_scale != 1.0 and "values_at_scales" in res.diagnostics:
            res.value = res.diagnostics["values_at_scales"][a0_scale]
        return res

    def fair_fee(self, secant: SecantConfig = SecantConfig()) -> FeeResult:
        ladder = self.ladder()

        def value_at(alpha: float, rung: int) -> PricingResult:
            return self.price(alpha, ladder[rung])

        return fair_fee(value_at, self.spec.premium, len(ladder), secant)

    def delta(self, alpha_g: float, shock: Optional[float] = None,
              route: str = "grid") -> float:
        """Delta at the given fee; PDE methods default to the grid read."""
        s = self.spec
        if shock is None:
            shock = 1e-3 if s.mode == "static" else 1e-2
        if s.method in ("hpde", "apde") and route == "grid":
            return self.price(alpha_g).diagnostics["delta"]
        if s.method in ("hpde", "apde"):
            res = self.price(alpha_g,
                             readout_scales=(1.0 + shock, 1.0 - shock))
            vals = res.diagnostics["values_at_scales"]
            return (vals[1.0 + shock] - vals[1.0 - shock]) \
                / (2.0 * shock * self.params.s0)
        v_up = self.value_result(alpha_g, a0_scale=1.0 + shock).value
        v_dn = self.value_result(alpha_g, a0_scale=1.0 - shock).value
        return (v_up - v_dn) / (2.0 * shock * self.params.s0)
