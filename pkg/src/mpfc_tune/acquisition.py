"""Acquisition functions and their random-search maximisation.

All functions accept scalars or equally shaped arrays of predictive means and
standard deviations so that a whole candidate batch is scored at once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
DEFAULT_BUDGET = 10_000


def _as_out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def expected_improvement(mean, std, best):
    """Expected amount by which a Gaussian prediction falls below ``best``.

    A zero standard deviation gives the deterministic limit ``max(best - mean, 0)``.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("standard deviation must be non-negative")
    diff = best - mean
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        z = diff / np.where(std > 0, std, 1.0)
        ei = std * (z * ndtr(z) + INV_SQRT_2PI * np.exp(-0.5 * z * z))
    # vanishing (or subnormal) spread: deterministic limit
    ei = np.where((std > 0) & np.isfinite(ei), ei, np.maximum(diff, 0.0))
    return _as_out(np.maximum(ei, 0.0), diff)


def probability_of_feasibility(mean, std, threshold=0.0):
    """Probability that the feasibility prediction exceeds ``threshold``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("standard deviation must be non-negative")
    pos = std > 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        pr = ndtr((mean - threshold) / np.where(pos, std, 1.0))
    pr = np.where(pos & np.isfinite(pr), pr, (mean > threshold).astype(float))
    return _as_out(pr, mean)


def eic(mean_b, std_b, best_b, mean_g, std_g, threshold=0.0):
    """Constrained expected improvement.

    ``best_b=None`` means no feasible point has been seen yet, in which case
    only the probability of feasibility is returned.
    """
    pr = probability_of_feasibility(mean_g, std_g, threshold)
    if best_b is None:
        return pr
    return expected_improvement(mean_b, std_b, best_b) * pr


def _nondominated_rows(front):
    keep = np.ones(len(front), dtype=bool)
    for i, p in enumerate(front):
        others = np.delete(front, i, axis=0)
        if others.size and np.any(np.all(others <= p, axis=1) & np.any(others < p, axis=1)):
            keep[i] = False
    return front[keep]


def eim_euclidean(means, stds, front, scale=None):
    """Euclidean expected-improvement-matrix criterion against a front.

    ``means`` and ``stds`` have shape ``(3,)`` for one candidate or
    ``(n, 3)`` for a batch; ``front`` has shape ``(J, 3)``. Optional ``scale``
    divides every objective (means, stds and front) before aggregation.
    """
    front = np.atleast_2d(np.asarray(front, dtype=float))
    if front.size == 0:
        raise ValueError("expected-improvement matrix needs a non-empty front")
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    single = means.ndim == 1
    means = np.atleast_2d(means)
    stds = np.atleast_2d(stds)
    if scale is not None:
        scale = np.asarray(scale, dtype=float)
        means, stds, front = means / scale, stds / scale, front / scale
    front = _nondominated_rows(front)
    # (n, J, k) matrix of single-objective improvements
    ei = expected_improvement(means[:, None, :], stds[:, None, :], front[None, :, :])
    val = np.sqrt(np.sum(ei * ei, axis=2)).min(axis=1)
    return float(val[0]) if single else val


def ceim(means, stds, front, mean_g, std_g, threshold=0.0, scale=None):
    """Expected-improvement matrix weighted by the probability of feasibility."""
    return eim_euclidean(means, stds, front, scale) * probability_of_feasibility(
        mean_g, std_g, threshold)


def maximize_acquisition(score, box=None, budget: int = DEFAULT_BUDGET, seed: int = 0,
                         dim: int = 7) -> np.ndarray:
    """Random search: score ``budget`` uniform candidates, return the best.

    ``score`` maps an ``(n, dim)`` array to ``n`` values. Ties go to the first
    candidate; if every score is zero (or none is finite) a fresh uniform point
    is returned instead.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if box is None:
        lo, hi = np.zeros(dim), np.ones(dim)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    rng = np.random.default_rng(seed)
    cand = lo + (hi - lo) * rng.random((budget, lo.size))
    vals = np.asarray(score(cand), dtype=float).ravel()
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    if not np.any(np.isfinite(vals)) or np.all(vals[np.isfinite(vals)] == 0.0):
        return lo + (hi - lo) * rng.random(lo.size)
    return cand[int(np.argmax(vals))]
