"""Shared rectangular histogram grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# half-width given to a dimension whose samples all coincide
DEGENERATE_HALF_WIDTH = 1e-9


@dataclass(frozen=True)
class HistogramGrid:
    """Axis-aligned grid with ``bins[d]`` equal cells over ``[lower[d], upper[d]]``."""

    lower: np.ndarray
    upper: np.ndarray
    bins: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        k = np.broadcast_to(np.atleast_1d(np.asarray(self.bins, dtype=np.int64)), lo.shape).copy()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(k < 2):
            raise ValueError("every dimension needs at least 2 bins")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
            raise ValueError("grid bounds must be finite with positive width")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "bins", k)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def total_bins(self) -> int:
        return int(np.prod(self.bins))

    @property
    def bin_volume(self) -> float:
        return float(np.prod((self.upper - self.lower) / self.bins))

    @classmethod
    def from_samples(cls, *sample_sets, bins=5, expand: float = 0.01) -> "HistogramGrid":
        """Bounds from the union of the sample sets, widened by ``expand`` of the range on each side."""
        data = np.vstack([np.atleast_2d(np.asarray(s, dtype=float).reshape(len(s), -1)) for s in sample_sets])
        lo, hi = data.min(axis=0), data.max(axis=0)
        width = hi - lo
        pad = np.where(width > 0, expand * width, DEGENERATE_HALF_WIDTH)
        return cls(lo - pad, hi + pad, bins)

    def indices(self, samples) -> np.ndarray:
        """Flat bin index per sample; points outside the grid go to the edge cells."""
        x = np.asarray(samples, dtype=float).reshape(-1, self.dim)
        cell = np.floor((x - self.lower) / (self.upper - self.lower) * self.bins).astype(np.int64)
        np.clip(cell, 0, self.bins - 1, out=cell)
        return np.ravel_multi_index(cell.T, self.bins)

    def counts(self, samples) -> np.ndarray:
        return np.bincount(self.indices(samples), minlength=self.total_bins)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "bins": self.bins.tolist()}
