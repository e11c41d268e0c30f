"""Sampling, the SSD similarity objective and model-independent evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .imaging import ScalarImage, interpolate_many


@dataclass(frozen=True, eq=False)
class SamplePointSet:
    """Fixed target-space sample positions ``P_t``, reproducible from ``seed``."""

    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ObjectiveVector:
    similarity: float
    magnitude: float

    def as_array(self) -> np.ndarray:
        return np.array([self.similarity, self.magnitude])


def draw_samples(image: ScalarImage, count: int | None = None, seed: int = 0) -> SamplePointSet:
    """Uniform random positions over the continuous domain of ``image``.

    ``count`` defaults to the voxel count of the image.
    """
    if count is None:
        count = image.voxel_count
    if count < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    lo, hi = image.domain_min, image.domain_max
    points = lo + rng.random((int(count), image.ndim)) * (hi - lo)
    return SamplePointSet(points, seed)


def ssd(source: ScalarImage, target: ScalarImage, transform, samples: SamplePointSet) -> float:
    """Mean squared difference between ``I_t(p)`` and ``I_s(T'(p))`` over the samples."""
    pts = samples.points
    fixed = interpolate_many(target, pts)
    moved = interpolate_many(source, transform.transform_points(pts))
    return float(np.mean((fixed - moved) ** 2))


@dataclass(eq=False)
class RegistrationProblem:
    """A source/target pair with the run's fixed sample set and cached target intensities."""

    source: ScalarImage
    target: ScalarImage
    samples: SamplePointSet
    name: str = "problem"
    target_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.source.ndim != self.target.ndim:
            raise ValueError("source and target must have the same dimensionality")
        self.target_values = interpolate_many(self.target, self.samples.points)
        self.target_values.setflags(write=False)

    @classmethod
    def from_images(cls, source, target, sample_count=None, seed=0, name="problem"):
        return cls(source, target, draw_samples(target, sample_count, seed), name)

    @property
    def ndim(self) -> int:
        return self.target.ndim

    def with_samples(self, samples: SamplePointSet) -> "RegistrationProblem":
        return RegistrationProblem(self.source, self.target, samples, self.name)

    def similarity_terms(self, moved_points: np.ndarray, sample_ids=None) -> np.ndarray:
        """Per-sample squared differences for already transformed sample positions."""
        fixed = self.target_values if sample_ids is None else self.target_values[sample_ids]
        return (fixed - interpolate_many(self.source, moved_points)) ** 2


def check_finite(values, what: str = "objective") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite {what}: {arr}")
    return arr


def evaluate(model, genotype, problem: RegistrationProblem):
    """Full evaluation of ``genotype`` under ``model`` (a BSplineGrid or DualMesh template).

    Returns ``(ObjectiveVector, feasible, violation)``.  Mesh genotypes that
    fold are reported infeasible with violation = number of bad simplices.
    """
    from .bspline import BSplineGrid, BSplineEvaluator
    from .mesh import DualMesh, MeshEvaluator

    if isinstance(model, BSplineGrid):
        sol = BSplineEvaluator(problem, model).evaluate(genotype)
    elif isinstance(model, DualMesh):
        sol = MeshEvaluator(problem, model).evaluate(genotype)
    else:
        raise TypeError(f"cannot evaluate model of type {type(model).__name__}")
    check_finite(sol.objectives)
    return ObjectiveVector(*map(float, sol.objectives)), sol.feasible, sol.violation
