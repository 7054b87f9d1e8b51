"""Residual statistics and verdicts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Channel:
    residuals: np.ndarray
    tolerance: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.residuals)) if self.residuals.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.passed else "fail",
        }


@dataclass
class ConservationReport:
    """Per-condition residual channels, trajectory drifts and sample provenance.

    ``verdict`` covers the channels listed in ``required`` (all channels when
    it is empty) together with every drift entry.  Informational channels
    that are expected to be nonzero are kept out of ``required``.
    """

    channels: dict[str, Channel] = field(default_factory=dict)
    drifts: dict[str, Channel] = field(default_factory=dict)
    flags: dict[str, object] = field(default_factory=dict)
    provenance: dict[str, object] = field(default_factory=dict)
    required: list[str] = field(default_factory=list)

    def add(self, name: str, residuals, tolerance: float) -> Channel:
        ch = Channel(np.abs(np.asarray(residuals, dtype=float)).reshape(-1), float(tolerance))
        self.channels[name] = ch
        return ch

    def add_drift(self, name: str, drift: float, tolerance: float) -> Channel:
        ch = Channel(np.array([abs(float(drift))]), float(tolerance))
        self.drifts[name] = ch
        return ch

    def __getitem__(self, name: str) -> Channel:
        return self.channels[name]

    @property
    def verdict(self) -> bool:
        names = self.required or list(self.channels)
        return all(self.channels[k].passed for k in names) and all(d.passed for d in self.drifts.values())

    def to_dict(self) -> dict:
        return {
            "conditions": {k: v.to_dict() for k, v in self.channels.items()},
            "drifts": {k: v.to_dict() for k, v in self.drifts.items()},
            "flags": self.flags,
            "required": list(self.required or self.channels),
            "samples": self.provenance,
            "verdict": "pass" if self.verdict else "fail",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def two_imply_third(r1: float, r2: float, r3: float, tol: float) -> bool:
    """Whenever two of the maxima are within tol, the third must be within 3 tol."""
    rs = [r1, r2, r3]
    for i in range(3):
        others = [rs[j] for j in range(3) if j != i]
        if all(r <= tol for r in others) and rs[i] > 3 * tol:
            return False
    return True
