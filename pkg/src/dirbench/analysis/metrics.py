"""Comparison metrics: neighbor-difference DVF magnitude, reference points, run and highlight selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..imaging import DeformationField
from ..pareto import hypervolume, non_dominated_mask


def common_def_magnitude(dvf: DeformationField) -> float:
    """Sum over voxels of the mean squared difference to each face-adjacent neighbor's vector."""
    v = dvf.vectors
    d = dvf.ndim
    total = np.zeros(dvf.dims)
    count = np.zeros(dvf.dims)
    for k in range(d):
        diff = np.sum((np.diff(v, axis=k)) ** 2, axis=-1)
        lead = [slice(None)] * d
        lag = [slice(None)] * d
        lead[k] = slice(1, None)
        lag[k] = slice(None, -1)
        total[tuple(lag)] += diff
        total[tuple(lead)] += diff
        count[tuple(lag)] += 1
        count[tuple(lead)] += 1
    return float(np.sum(total / count))


def dominated_flags(objs) -> np.ndarray:
    """True for members dominated by another member (strict Pareto dominance)."""
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    return ~non_dominated_mask(f)


def reference_point(fronts, factor: float = 1.1) -> np.ndarray:
    """``factor`` times the per-objective maximum over all fronts' non-dominated members.

    An objective whose maximum is not positive gets reference 1.
    """
    pts = [np.asarray(f, dtype=float).reshape(-1, 2) for f in fronts]
    pts = [f[np.all(np.isfinite(f), axis=1)] for f in pts]
    pts = [f[non_dominated_mask(f)] for f in pts if len(f)]
    if not pts:
        return np.ones(2)
    peak = np.concatenate(pts).max(axis=0)
    return np.where(peak > 0, factor * peak, 1.0)


def front_hypervolume(objs, reference) -> float:
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    f = f[np.all(np.isfinite(f), axis=1)]
    return hypervolume(f[non_dominated_mask(f)], reference)


def median_index(values) -> int:
    """Index of the (lower) median value; ties resolved to the lowest index."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        raise ValueError("need at least one value")
    target = np.sort(v)[(len(v) - 1) // 2]
    return int(np.nonzero(v == target)[0][0])


def select_median_run(fronts, reference=None) -> int:
    """Index of the run with the median hypervolume under a common reference point."""
    if reference is None:
        reference = reference_point(fronts)
    return median_index([front_hypervolume(f, reference) for f in fronts])


@dataclass(frozen=True)
class HighlightTriple:
    best_magnitude: int
    best_similarity: int
    trade_off: int

    def roles(self) -> dict:
        out: dict[int, list[str]] = {}
        for role in ("best_magnitude", "best_similarity", "trade_off"):
            out.setdefault(getattr(self, role), []).append(role)
        return out


def trade_off_angles(objs) -> np.ndarray:
    """Angle (degrees) of each point after min-max normalization, measured from the similarity axis."""
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    lo, hi = f.min(axis=0), f.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    z = (f - lo) / span
    return np.degrees(np.arctan2(z[:, 1], z[:, 0]))


def select_highlights(objs, valid=None) -> HighlightTriple:
    """Best-magnitude, best-similarity and 45-degree trade-off members of the non-dominated subset."""
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    ok = np.all(np.isfinite(f), axis=1) if valid is None else np.asarray(valid, dtype=bool) & np.all(np.isfinite(f), axis=1)
    cand = np.nonzero(ok)[0]
    if len(cand) == 0:
        raise ValueError("no valid members to highlight")
    cand = cand[non_dominated_mask(f[cand])]
    g = f[cand]
    best_mag = cand[np.lexsort((cand, g[:, 0], g[:, 1]))[0]]
    best_sim = cand[np.lexsort((cand, g[:, 1], g[:, 0]))[0]]
    if len(cand) == 1:
        return HighlightTriple(int(cand[0]), int(cand[0]), int(cand[0]))
    off = np.abs(trade_off_angles(g) - 45.0)
    trade = cand[np.lexsort((cand, off))[0]]
    return HighlightTriple(int(best_mag), int(best_sim), int(trade))


def locality_probe(dvf: DeformationField, center, radius: float) -> float:
    """Mean displacement magnitude over voxels farther than ``radius`` from ``center``."""
    axes = [o + s * np.arange(n) for o, s, n in zip(dvf.origin, dvf.spacing, dvf.dims)]
    grids = np.meshgrid(*axes, indexing="ij")
    dist2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    outside = dist2 > radius * radius
    if not np.any(outside):
        return 0.0
    return float(np.mean(dvf.magnitudes()[outside]))


def similarity_range(objs) -> float:
    """Spread (max - min) of the first objective over the non-dominated finite members."""
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    f = f[np.all(np.isfinite(f), axis=1)]
    if len(f) == 0:
        return 0.0
    nd = f[non_dominated_mask(f)]
    return float(nd[:, 0].max() - nd[:, 0].min())


__all__ = [
    "HighlightTriple",
    "common_def_magnitude",
    "dominated_flags",
    "front_hypervolume",
    "hypervolume",
    "locality_probe",
    "median_index",
    "reference_point",
    "select_highlights",
    "select_median_run",
    "similarity_range",
    "trade_off_angles",
]
