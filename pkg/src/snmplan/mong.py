"""Measure of non-Gaussianity: negentropy against a moment-matched Gaussian."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .histogram import HistogramGrid

log = logging.getLogger(__name__)

# relative eigenvalue below which a direction counts as deterministic
DEGENERATE_TOL = 1e-10


class InvalidCovariance(ValueError):
    pass


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    n: int
    grid: dict | None = None


def gaussian_entropy(cov) -> float:
    """Differential entropy in nats; ``-inf`` for a singular covariance."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    vals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if vals.min() < -1e-9:
        raise InvalidCovariance(f"covariance has eigenvalue {vals.min():.3g}")
    n = cov.shape[0]
    if vals.min() <= 0.0:
        log.debug("singular covariance, entropy is -inf")
        return -math.inf
    return 0.5 * (n * math.log(2 * math.pi * math.e) + float(np.sum(np.log(vals))))


def entropy_histogram(samples, grid: HistogramGrid | None = None, bins=None, miller_madow: bool = False) -> float:
    """Plug-in estimate ``-sum p_i ln(p_i / vol_i)`` over occupied cells.

    ``miller_madow`` adds ``(m - 1) / 2n`` for ``m`` occupied cells, which
    removes most of the small-sample bias on fine grids.
    """
    x = np.asarray(samples, dtype=float)
    x = x.reshape(x.shape[0], -1)
    if grid is None:
        grid = HistogramGrid.from_samples(x, bins=default_bins(x.shape[0], x.shape[1]) if bins is None else bins)
    counts = grid.counts(x)
    p = counts[counts > 0] / x.shape[0]
    h = float(-np.sum(p * np.log(p / grid.bin_volume)))
    if miller_madow:
        h += (p.size - 1) / (2.0 * x.shape[0])
    return h


def default_bins(n: int, dim: int) -> int:
    """Bins per dimension for an unwhitened grid, about ``n^(1/(dim+2))``."""
    return int(max(2, round(n ** (1.0 / (dim + 2)))))


def whitened_bin_width(n: int, dim: int) -> float:
    """Cell width, in standard deviations, used on whitened samples."""
    return 2.0 * n ** (-1.0 / (dim + 4))


def _whiten(x):
    """Project onto the non-degenerate principal axes with unit variance.

    Returns whitened samples and the log-determinant of the retained
    covariance block.
    """
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    keep = vals > DEGENERATE_TOL * max(vals.max(), 1e-300)
    if not np.any(keep):
        return np.zeros((x.shape[0], 0)), 0.0
    proj = (x - mu) @ vecs[:, keep] / np.sqrt(vals[keep])
    return proj, float(np.sum(np.log(vals[keep])))


def negentropy(samples, grid: HistogramGrid | None = None, bins=None) -> float:
    """``H(gaussian fit) - H(samples)`` in nats, unclamped.

    With no explicit grid, the samples are whitened first and deterministic
    directions are dropped; both entropies then refer to the same
    subspace, so the log-determinant terms cancel.
    """
    x = np.asarray(samples, dtype=float)
    x = x.reshape(x.shape[0], -1)
    if grid is not None:
        return gaussian_entropy(np.atleast_2d(np.cov(x, rowvar=False))) - entropy_histogram(x, grid)
    z, _ = _whiten(x)
    d = z.shape[1]
    if d == 0:
        return 0.0
    if bins is None:
        span = z.max(axis=0) - z.min(axis=0)
        bins = np.maximum(2, np.ceil(span / whitened_bin_width(z.shape[0], d))).astype(int)
    h_hist = entropy_histogram(z, bins=bins, miller_madow=True)
    return 0.5 * d * math.log(2 * math.pi * math.e) - h_hist


def mong_at(model, s, actions, n: int, rng, bins=None) -> tuple[float, float]:
    """Raw (unclamped) transition and observation MoNG at state ``s``.

    The transition value is the maximum over ``actions``.
    """
    s = np.asarray(s, dtype=float)
    reps = np.repeat(s[None, :], n, axis=0)
    mong_t = -math.inf
    for a in np.atleast_2d(actions):
        nxt = model.sample_transition(reps, a, rng)
        mong_t = max(mong_t, negentropy(nxt, bins=bins))
    mong_z = negentropy(model.sample_observation(reps, None, rng), bins=bins)
    return float(mong_t), float(mong_z)


def clamp(value: float) -> float:
    """Reporting-layer clamp of small negative estimates."""
    return max(0.0, float(value))
