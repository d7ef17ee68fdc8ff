"""Small record type for measured constants and exponents."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


@dataclass
class EstimateReport:
    """Named measurements plus boolean checks; ``passed`` is the conjunction of the checks."""

    name: str
    values: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def passed(self):
        return all(bool(v) for v in self.checks.values())

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        return {
            "name": self.name,
            "values": _plain(self.values),
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "passed": self.passed,
            "notes": self.notes,
        }
