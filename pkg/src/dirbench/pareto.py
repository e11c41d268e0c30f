"""Pareto dominance, ranking, crowding and exact two-objective hypervolume (minimization)."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


def dominates(a, b) -> bool:
    """True when ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def constrained_dominates(obj_a, feas_a, viol_a, obj_b, feas_b, viol_b) -> bool:
    """Feasible beats infeasible; two infeasible compare by violation; else Pareto dominance."""
    if feas_a != feas_b:
        return bool(feas_a)
    if not feas_a:
        return viol_a < viol_b
    return dominates(obj_a, obj_b)


def domination_matrix(objs) -> np.ndarray:
    """``M[i, j]`` is True when point ``i`` dominates point ``j``."""
    f = np.asarray(objs, dtype=float)
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    return le & lt


def non_dominated_mask(objs) -> np.ndarray:
    f = np.asarray(objs, dtype=float)
    if len(f) == 0:
        return np.zeros(0, dtype=bool)
    return ~np.any(domination_matrix(f), axis=0)


def pareto_ranks(objs, feasible=None, violation=None) -> np.ndarray:
    """Non-dominated sorting ranks (0 = best) under constraint domination."""
    f = np.asarray(objs, dtype=float)
    n = len(f)
    feasible = np.ones(n, dtype=bool) if feasible is None else np.asarray(feasible, dtype=bool)
    violation = np.zeros(n) if violation is None else np.asarray(violation, dtype=float)
    dom = domination_matrix(np.where(np.isfinite(f), f, np.finfo(float).max))
    dom &= feasible[:, None] & feasible[None, :]
    dom |= feasible[:, None] & ~feasible[None, :]
    both_bad = ~feasible[:, None] & ~feasible[None, :]
    dom |= both_bad & (violation[:, None] < violation[None, :])
    ranks = np.full(n, -1, dtype=int)
    counts = dom.sum(axis=0)
    current = np.nonzero(counts == 0)[0]
    r = 0
    while len(current):
        ranks[current] = r
        counts = counts - dom[current].sum(axis=0)
        counts[ranks >= 0] = -1
        current = np.nonzero(counts == 0)[0]
        r += 1
    return ranks


def crowding_distance(objs) -> np.ndarray:
    """NSGA-II crowding distance of points within one front (boundary points get inf)."""
    f = np.asarray(objs, dtype=float)
    n, m = f.shape if f.ndim == 2 else (0, 0)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(f[:, k], kind="stable")
        span = f[order[-1], k] - f[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (f[order[2:], k] - f[order[:-2], k]) / span
    return dist


def hypervolume(objs, reference) -> float:
    """Exact area dominated by the points and bounded by ``reference``.

    Points that do not strictly dominate the reference contribute nothing
    and are logged.
    """
    f = np.asarray(objs, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    beyond = ~np.all(f < ref, axis=1)
    if np.any(beyond):
        log.info("hypervolume: %d point(s) beyond the reference %s ignored", int(beyond.sum()), ref)
        f = f[~beyond]
    if len(f) == 0:
        return 0.0
    f = f[np.lexsort((f[:, 1], f[:, 0]))]
    area, best = 0.0, ref[1]
    for x, y in f:
        if y < best:
            area += (ref[0] - x) * (best - y)
            best = y
    return float(area)
