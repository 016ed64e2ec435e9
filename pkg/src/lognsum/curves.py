"""Container for several CDF estimates on a common gamma grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class DistributionCurve:
    """CDF values per method on one gamma grid, with optional Monte-Carlo stderr."""

    gammas: np.ndarray
    cdf: dict[str, np.ndarray] = field(default_factory=dict)
    stderr: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        for name, values in self.cdf.items():
            if np.shape(values) != g.shape:
                raise InvalidParameterError(f"column {name!r} does not match the gamma grid")
        for name in self.stderr:
            if name not in self.cdf:
                raise InvalidParameterError(f"stderr given for unknown column {name!r}")

    def with_method(self, name: str, cdf, stderr=None) -> "DistributionCurve":
        cols = dict(self.cdf)
        cols[name] = np.asarray(cdf, dtype=float)
        errs = dict(self.stderr)
        if stderr is not None:
            errs[name] = np.asarray(stderr, dtype=float)
        return DistributionCurve(self.gammas, cols, errs)

    def ccdf(self, name: str) -> np.ndarray:
        return 1.0 - self.cdf[name]

    def confidence_interval(self, name: str, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
        """Normal-approximation interval cdf +- z*stderr, clipped to [0, 1]."""
        c, e = self.cdf[name], self.stderr[name]
        return np.clip(c - z * e, 0.0, 1.0), np.clip(c + z * e, 0.0, 1.0)
