"""Approximation sets and their re-evaluation in a common objective pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..bspline import BSplineGrid
from ..imaging import rasterize_dvf
from ..mesh import DualMesh
from ..objectives import RegistrationProblem, SamplePointSet, draw_samples, ssd
from ..storage import read_archive
from .metrics import common_def_magnitude, dominated_flags

log = logging.getLogger(__name__)

REEVAL_SEED = 918_273


@dataclass(eq=False)
class ApproximationSet:
    """One run's archive with original and (optionally) re-evaluated objectives."""

    approach: str
    repetition: int
    seed: int
    model: object
    params: list
    original: np.ndarray
    reevaluated: np.ndarray | None = None
    dominated: np.ndarray | None = None
    valid: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.params)

    def transform(self, i: int):
        p = np.asarray(self.params[i], dtype=float)
        if isinstance(self.model, BSplineGrid):
            return self.model.with_coefficients(p)
        if isinstance(self.model, DualMesh):
            return self.model.from_genotype(p)
        raise TypeError(f"unsupported model {type(self.model).__name__}")

    def front(self) -> np.ndarray:
        """Re-evaluated objectives of valid members (original ones before re-evaluation)."""
        objs = self.original if self.reevaluated is None else self.reevaluated
        ok = np.ones(len(self), dtype=bool) if self.valid is None else self.valid
        return objs[ok]

    @classmethod
    def from_archive(cls, directory) -> "ApproximationSet":
        manifest, model, params, objs = read_archive(directory)
        return cls(manifest["approach"], int(manifest.get("repetition", 0)), int(manifest.get("seed", 0)),
                   model, params, objs, extra={"path": str(directory)})

    @classmethod
    def from_members(cls, approach, repetition, seed, model, members) -> "ApproximationSet":
        params = [m.payload if approach == "bspline-baseline" else m.genotype for m in members]
        objs = np.array([m.objectives for m in members], dtype=float).reshape(-1, 2)
        return cls(approach, repetition, seed, model, [np.array(p, dtype=float) for p in params], objs)


def common_samples(problem: RegistrationProblem, count=None, seed: int = REEVAL_SEED) -> SamplePointSet:
    return draw_samples(problem.target, count, seed)


def reevaluate_set(aset: ApproximationSet, problem: RegistrationProblem,
                   samples: SamplePointSet | None = None) -> ApproximationSet:
    """Recompute (SSD, neighbor-difference DVF magnitude) and dominated flags for every member."""
    if samples is None:
        samples = common_samples(problem)
    n = len(aset)
    objs = np.full((n, 2), np.nan)
    valid = np.zeros(n, dtype=bool)
    for i in range(n):
        try:
            transform = aset.transform(i)
            dvf = rasterize_dvf(transform, problem.target)
            objs[i] = ssd(problem.source, problem.target, transform, samples), common_def_magnitude(dvf)
            valid[i] = bool(np.all(np.isfinite(objs[i])))
        except Exception as exc:  # a broken genotype must not abort the whole comparison
            log.warning("%s repetition %d solution %d could not be re-evaluated: %s",
                        aset.approach, aset.repetition, i, exc)
    dominated = np.zeros(n, dtype=bool)
    dominated[valid] = dominated_flags(objs[valid])
    aset.reevaluated, aset.valid, aset.dominated = objs, valid, dominated
    return aset
