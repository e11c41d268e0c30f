"""Objective-space discretized elitist archive."""

from __future__ import annotations

import numpy as np

from ..pareto import hypervolume, non_dominated_mask
from .solution import Solution


def snapshot(sol: Solution) -> Solution:
    """Copy of a solution without its evaluation cache (safe to store)."""
    return Solution(sol.genotype.copy(), np.array(sol.objectives, dtype=float), sol.feasible,
                    sol.violation, None, sol.payload)


class ElitistArchive:
    """Non-dominated feasible solutions, at most one per objective-space grid cell.

    The grid is off until the archive first grows past ``4/3 * capacity``;
    then cells start at ``range / capacity`` per objective and are coarsened
    (doubling by default) whenever the archive overflows again.
    """

    def __init__(self, capacity: int = 1000):
        if capacity < 1:
            raise ValueError("archive capacity must be positive")
        self.capacity = int(capacity)
        self.cell_size: np.ndarray | None = None
        self.members: list[Solution] = []
        self._objs = np.zeros((0, 2))
        self.adaptations = 0
        self.reached_capacity = False

    def __len__(self) -> int:
        return len(self.members)

    @property
    def objectives(self) -> np.ndarray:
        return self._objs.copy()

    def _cell(self, objs):
        return np.floor(np.asarray(objs) / self.cell_size).astype(np.int64)

    def would_accept(self, objectives) -> bool:
        f = np.asarray(objectives, dtype=float)
        if not np.all(np.isfinite(f)):
            return False
        a = self._objs
        if len(a) == 0:
            return True
        weakly_better = np.all(a <= f, axis=1)
        if np.any(weakly_better):
            return False
        if self.cell_size is not None:
            same = np.all(self._cell(a) == self._cell(f), axis=1)
            dominated_by_new = np.all(f <= a, axis=1) & np.any(f < a, axis=1)
            if np.any(same & ~dominated_by_new):
                return False
        return True

    def insert(self, sol: Solution) -> bool:
        """Try to archive a copy of ``sol``; returns whether it was accepted."""
        if not sol.feasible or not self.would_accept(sol.objectives):
            return False
        f = np.asarray(sol.objectives, dtype=float)
        a = self._objs
        keep = ~(np.all(f <= a, axis=1) & np.any(f < a, axis=1))
        self.members = [m for m, k in zip(self.members, keep) if k] + [snapshot(sol)]
        self._objs = np.vstack([a[keep], f[None, :]])
        if len(self.members) > 4 * self.capacity / 3:
            self.reached_capacity = True
            self._adapt()
        elif len(self.members) >= self.capacity:
            self.reached_capacity = True
        return True

    def _filtered(self, cell_size) -> np.ndarray:
        """Indices kept when re-binning: per cell, the member with the lowest first objective."""
        cells = np.floor(self._objs / cell_size).astype(np.int64)
        order = np.lexsort((np.arange(len(cells)), self._objs[:, 1], self._objs[:, 0]))
        seen, keep = set(), []
        for i in order:
            key = tuple(cells[i])
            if key not in seen:
                seen.add(key)
                keep.append(i)
        return np.sort(np.asarray(keep, dtype=np.intp))

    def _adapt(self) -> None:
        lo_size = self.capacity / 2
        hi_size = 4 * self.capacity / 3
        if self.cell_size is None:
            span = np.ptp(self._objs, axis=0)
            base = np.where(span > 0, span, 1.0) / self.capacity
            keep = self._filtered(base)
            if lo_size <= len(keep) <= hi_size:
                self._apply(base, keep)
                return
            self.cell_size = base
        for factor in (2.0, 1.5, 1.25, 1.1, 1.05):
            size = self.cell_size * factor
            keep = self._filtered(size)
            if lo_size <= len(keep) <= hi_size:
                self._apply(size, keep)
                return
        # no single coarsening lands in range: grow until compliant, never below half capacity
        size = self.cell_size
        for _ in range(64):
            size = size * 1.02
            keep = self._filtered(size)
            if len(keep) <= hi_size:
                break
        self._apply(size, keep)

    def _apply(self, cell_size, keep) -> None:
        self.cell_size = np.asarray(cell_size, dtype=float)
        self.members = [self.members[i] for i in keep]
        self._objs = self._objs[keep]
        self.adaptations += 1

    def hypervolume(self, reference) -> float:
        return hypervolume(self._objs, reference)

    def check_invariants(self) -> list[str]:
        """Problems found by an exhaustive check (empty when the archive is consistent)."""
        problems = []
        if len(self._objs) and not np.all(non_dominated_mask(self._objs)):
            problems.append("archive contains a dominated member")
        if len(np.unique(self._objs, axis=0)) != len(self._objs):
            problems.append("archive contains duplicate objective vectors")
        if self.reached_capacity and not (self.capacity / 2 <= len(self) <= 4 * self.capacity / 3):
            problems.append(f"archive size {len(self)} outside [{self.capacity / 2}, {4 * self.capacity / 3}]")
        if any(not m.feasible for m in self.members):
            problems.append("archive contains an infeasible member")
        return problems
