"""Structured results shared by every module."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

STATUSES = ("pass", "fail", "hypothesis-violated", "divergent")


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class VerificationReport:
    property_name: str
    status: str
    worst_residual: float
    witness: dict | None = None
    runtime_ms: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "property_name": self.property_name,
            "status": self.status,
            "worst_residual": _plain(self.worst_residual),
            "witness": _plain(self.witness),
            "details": _plain(self.details),
        }
        if timings:
            out["runtime_ms"] = float(self.runtime_ms)
        return out


def judge(name, residual, tol, witness=None, **details) -> VerificationReport:
    """Pass/fail report from a scaled residual and its tolerance."""
    residual = float(residual)
    status = "pass" if residual <= tol else "fail"
    if status == "fail" and witness is None:
        witness = {}
    details = {"tolerance": tol, **details}
    return VerificationReport(name, status, residual, witness, details=details)


@dataclass
class ConvergenceStudy:
    grids: list[int]
    metric: str
    values: list[float]
    fitted_order: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.grids, self.grids[1:])):
            raise ValueError("grids must be strictly increasing")
        if not all(np.isfinite(self.values)):
            raise ValueError("convergence values must be finite")

    def to_dict(self) -> dict:
        return _plain(
            {"metric": self.metric, "grids": self.grids, "values": self.values,
             "fitted_order": self.fitted_order}
        )


def loglog_slope(grids, values) -> float:
    x = np.log(np.asarray(grids, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
