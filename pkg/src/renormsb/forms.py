"""Hermitian form matrices that remember which metric they are paired with."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricMismatchError(ValueError):
    """Two forms (or a form and a metric) belong to different inner products."""


PROVENANCES = {"W", "A", "SB", "regular", "dressed_regular", "observable", "sum"}


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    matrix: np.ndarray
    metric_key: str
    provenance: str
    terms: dict = field(default_factory=dict, repr=False)
    tail: np.ndarray | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("a form matrix must be square")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def check_metric(self, key: str):
        if key != self.metric_key:
            raise MetricMismatchError(
                f"form ({self.provenance}) lives in metric {self.metric_key}, not {key}")

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        if not isinstance(other, QuadraticForm):
            return NotImplemented
        other.check_metric(self.metric_key)
        prov = "SB" if {self.provenance, other.provenance} == {"W", "A"} else "sum"
        return QuadraticForm(self.matrix + other.matrix, self.metric_key, prov)

    def __call__(self, theta, xi) -> complex:
        return complex(np.vdot(np.asarray(theta, complex), self.matrix @ np.asarray(xi, complex)))

    def hermiticity_residual(self) -> float:
        m = self.matrix
        scale = max(float(np.abs(m).max()), 1e-300)
        return float(np.abs(m - m.conj().T).max() / scale)
