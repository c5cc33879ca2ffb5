"""Pareto dominance, nondominated filtering and the hypervolume indicator.

All objectives are minimised.
"""

from __future__ import annotations

import numpy as np


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_mask(points) -> np.ndarray:
    """Boolean mask of rows not dominated by any other row.

    Exact duplicates are kept once (the first occurrence).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        le = np.all(pts <= pts[i], axis=1)
        lt = np.any(pts < pts[i], axis=1)
        if np.any(le & lt):
            mask[i] = False
        elif i and np.any(np.all(pts[:i] == pts[i], axis=1)):
            mask[i] = False
    return mask


def nondominated(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
    return pts[nondominated_mask(pts)]


def _hv2d(pts, ref):
    # staircase area; pts need not be nondominated
    order = np.argsort(pts[:, 0], kind="stable")
    area, y_bound = 0.0, ref[1]
    for x, y in pts[order]:
        if y < y_bound:
            area += (ref[0] - x) * (y_bound - y)
            y_bound = y
    return area


def hypervolume(front, ref, clip: bool = False) -> float:
    """Measure of the region dominated by ``front`` and bounded by ``ref``.

    Works for two or three objectives. Points beyond the reference point
    raise unless ``clip`` is set, in which case they are ignored.
    """
    ref = np.asarray(ref, dtype=float)
    pts = np.asarray(front, dtype=float).reshape(-1, ref.size)
    if ref.size not in (2, 3):
        raise ValueError("hypervolume supports two or three objectives")
    beyond = np.any(pts > ref, axis=1)
    if np.any(beyond):
        if not clip:
            raise ValueError("front point lies beyond the reference point")
        pts = pts[~beyond]
    if len(pts) == 0:
        return 0.0
    if ref.size == 2:
        return float(_hv2d(pts, ref))
    # sweep along the third objective, integrating 2-D slices
    order = np.argsort(pts[:, 2], kind="stable")
    pts = pts[order]
    vol = 0.0
    for i in range(len(pts)):
        z_next = pts[i + 1, 2] if i + 1 < len(pts) else ref[2]
        dz = z_next - pts[i, 2]
        if dz > 0:
            vol += _hv2d(pts[: i + 1, :2], ref[:2]) * dz
    return float(vol)


def normalize_front(front, baseline) -> np.ndarray:
    baseline = np.asarray(baseline, dtype=float)
    if np.any(baseline == 0):
        raise ValueError("baseline objectives must be non-zero")
    if np.any(baseline < 0):
        raise ValueError("baseline objectives must be positive")
    return np.asarray(front, dtype=float) / baseline


def reference_point(*fronts, factor: float = 1.1) -> np.ndarray:
    """Component-wise maximum over all fronts, scaled by ``factor``."""
    stacked = [np.atleast_2d(np.asarray(f, dtype=float)) for f in fronts]
    stacked = [f for f in stacked if f.size]
    if not stacked:
        raise ValueError("need at least one non-empty front")
    return factor * np.max(np.vstack(stacked), axis=0)


def hypervolume_curve(points, ref, order=None) -> np.ndarray:
    """Hypervolume of the running nondominated set after each point.

    ``points`` may contain ``nan`` rows for infeasible evaluations; those
    leave the curve flat. Points beyond ``ref`` are ignored.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, np.size(ref))
    ref = np.asarray(ref, dtype=float)
    out = np.zeros(len(pts))
    front = np.empty((0, ref.size))
    hv = 0.0
    for i, p in enumerate(pts):
        if np.all(np.isfinite(p)) and np.all(p <= ref):
            if not np.any(np.all(front <= p, axis=1)):
                keep = ~(np.all(p <= front, axis=1) & np.any(p < front, axis=1))
                front = np.vstack([front[keep], p])
                hv = hypervolume(front, ref)
        out[i] = hv
    return out
