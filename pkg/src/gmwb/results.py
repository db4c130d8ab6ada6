"""Result container shared by all pricing methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional


@dataclass
class PricingResult:
    """Policy value plus method metadata.

    ``std_error`` is populated by the Monte Carlo pricers only.
    ``diagnostics`` carries method-specific extras such as grid sizes,
    secant iterations or regression degrees.
    """

    value: float
    std_error: Optional[float] = None
    method: str = ""
    mode: str = ""
    n_paths: Optional[int] = None
    degree: Optional[int] = None
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "value": self.value,
            "std_error": self.std_error,
            "method": self.method,
            "mode": self.mode,
            "n_paths": self.n_paths,
            "degree": self.degree,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload, sort_keys=True)
