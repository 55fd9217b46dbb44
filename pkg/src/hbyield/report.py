"""Yield report container shared by the model and the simulator."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field


@dataclass
class YieldReport:
    """Per-component and overall yields with provenance.

    ``stderr`` holds the standard error of each simulated component yield,
    estimated from the spread of independent batches (wafers or die chunks).
    """

    y_ovl: float
    y_cr: float
    y_df: float
    y_total: float
    source: str
    mode: str
    runtime_s: float = 0.0
    seed: int | None = None
    sample_counts: dict = field(default_factory=dict)
    cv: float | None = None
    stderr: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source == "model":
            prod = self.y_ovl * self.y_cr * self.y_df
            if not math.isclose(self.y_total, prod, rel_tol=0, abs_tol=1e-12):
                raise ValueError("model total yield must equal the product of its components")

    def component(self, name: str) -> float:
        return {"ovl": self.y_ovl, "cr": self.y_cr, "df": self.y_df, "total": self.y_total}[name]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "YieldReport":
        return cls(**json.loads(text))
