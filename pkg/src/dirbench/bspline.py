"""Cubic B-spline free-form deformation on a uniform control-point lattice.

The lattice carries one control layer beyond each image edge, so with
``n`` points per axis the image domain is split into ``n - 3`` cells and
every domain point has a full ``4**d`` stencil.  Control point ``j`` sits at
``domain_min + (j - 1) * spacing``.

Cells are indexed ``0 .. n - 4`` per axis; the interpolating stencil of cell
``c`` is control points ``c .. c + 3``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ArchiveFormatError, DomainError
from .gomea.solution import FOSElement, Solution
from .objectives import RegistrationProblem, SamplePointSet

_DOMAIN_TOL = 1e-9


def basis_weights(u):
    """Uniform cubic B-spline weights ``(B0, B1, B2, B3)`` at fraction ``u``."""
    u = np.asarray(u, dtype=float)
    u2, u3 = u * u, u * u * u
    return np.stack(
        [
            (1 - u) ** 3 / 6,
            (3 * u3 - 6 * u2 + 4) / 6,
            (-3 * u3 + 3 * u2 + 3 * u + 1) / 6,
            u3 / 6,
        ],
        axis=-1,
    )


def basis_first_derivatives(u):
    u = np.asarray(u, dtype=float)
    u2 = u * u
    return np.stack([-0.5 * (1 - u) ** 2, 1.5 * u2 - 2 * u, -1.5 * u2 + u + 0.5, 0.5 * u2], axis=-1)


def basis_second_derivatives(u):
    u = np.asarray(u, dtype=float)
    return np.stack([1 - u, 3 * u - 2, 1 - 3 * u, u], axis=-1)


def derivative_pairs(ndim: int):
    """Upper-triangle axis pairs of the Hessian and their multiplicity in a Frobenius norm."""
    pairs = [(a, b) for a in range(ndim) for b in range(a, ndim)]
    mult = np.array([1.0 if a == b else 2.0 for a, b in pairs])
    return pairs, mult


@dataclass(frozen=True)
class PatchRegion:
    """Half-open cell-index ranges ``[lo, hi)`` per axis."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]
    cell_dims: tuple[int, ...]

    @property
    def n_cells(self) -> int:
        return int(np.prod(np.subtract(self.hi, self.lo)))

    def cells(self) -> np.ndarray:
        """Flat (row-major) indices of the cells in the region."""
        ranges = [np.arange(a, b) for a, b in zip(self.lo, self.hi)]
        grid = np.meshgrid(*ranges, indexing="ij")
        return np.ravel_multi_index([g.ravel() for g in grid], self.cell_dims)

    def spanned_points(self) -> list[tuple[int, ...]]:
        """Control points on the corners of the region's cells (25 for a full 2D region)."""
        ranges = [range(a + 1, b + 2) for a, b in zip(self.lo, self.hi)]
        return list(itertools.product(*ranges))

    def stencil_points(self) -> list[tuple[int, ...]]:
        """All control points whose coefficients enter the region's interpolation."""
        ranges = [range(a, b + 3) for a, b in zip(self.lo, self.hi)]
        return list(itertools.product(*ranges))


class BSplineGrid:
    """Control lattice with one displacement vector (mm) per control point."""

    def __init__(self, control_dims, spacing, domain_min, domain_max, coefficients=None):
        self.control_dims = tuple(int(n) for n in control_dims)
        self.ndim = len(self.control_dims)
        if self.ndim not in (2, 3) or min(self.control_dims) < 4:
            raise ValueError(f"control dims must be >= 4 per axis in 2D/3D, got {self.control_dims}")
        self.spacing = np.asarray(spacing, dtype=float).reshape(self.ndim)
        self.domain_min = np.asarray(domain_min, dtype=float).reshape(self.ndim)
        self.domain_max = np.asarray(domain_max, dtype=float).reshape(self.ndim)
        self.origin = self.domain_min - self.spacing
        self.cell_dims = tuple(n - 3 for n in self.control_dims)
        n = self.n_points
        if coefficients is None:
            coefficients = np.zeros((n, self.ndim))
        coef = np.array(coefficients, dtype=float).reshape(n, self.ndim)
        if not np.all(np.isfinite(coef)):
            raise ValueError("B-spline coefficients must be finite")
        self.coefficients = coef

    @classmethod
    def for_image(cls, image, control_dims) -> "BSplineGrid":
        """A zero (identity) grid whose inner lattice spans the image domain exactly."""
        dims = np.broadcast_to(np.asarray(control_dims, dtype=int), (image.ndim,))
        lo, hi = image.domain_min, image.domain_max
        spacing = (hi - lo) / (dims - 3)
        return cls(dims, spacing, lo, hi)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.control_dims))

    @property
    def n_vars(self) -> int:
        return self.n_points * self.ndim

    def genotype(self) -> np.ndarray:
        return self.coefficients.ravel().copy()

    def with_coefficients(self, coefficients) -> "BSplineGrid":
        return BSplineGrid(self.control_dims, self.spacing, self.domain_min, self.domain_max, coefficients)

    def control_positions(self) -> np.ndarray:
        axes = [self.origin[k] + self.spacing[k] * np.arange(n) for k, n in enumerate(self.control_dims)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def flat_index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.control_dims))

    def multi_index(self, flat) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(int(flat), self.control_dims))

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        tol = _DOMAIN_TOL * self.spacing
        return np.all((pts >= self.domain_min - tol) & (pts <= self.domain_max + tol), axis=1)

    # evaluation -------------------------------------------------------------

    def stencils(self, points, order: int = 0) -> "Stencils":
        return Stencils.build(self, points, order)

    def displacements(self, points) -> np.ndarray:
        """``T'(p) - p``; points outside the domain use the polynomial of the nearest cell."""
        st = self.stencils(points)
        return np.einsum("sk,skm->sm", st.w0, self.coefficients[st.idx])

    def transform_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts + self.displacements(pts)

    def transform_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if not self.contains(p)[0]:
            raise DomainError(f"point {p} outside the grid domain [{self.domain_min}, {self.domain_max}]")
        return self.transform_points(p[None, :])[0]

    def jacobians(self, points) -> np.ndarray:
        """Spatial Jacobian of ``T'`` at each point, shape ``(N, d, d)`` indexed [component, axis]."""
        st = self.stencils(points, order=1)
        grad = np.einsum("sak,skm->sma", st.w1, self.coefficients[st.idx])
        return grad + np.eye(self.ndim)

    def hessians(self, points) -> np.ndarray:
        """Second derivatives ``d2 T'_m / dx_a dx_b`` for the upper-triangle pairs, shape (N, P, d)."""
        st = self.stencils(points, order=2)
        return np.einsum("spk,skm->spm", st.w2, self.coefficients[st.idx])


@dataclass(eq=False)
class Stencils:
    """Per-point interpolation stencils: control indices plus weight tensors."""

    idx: np.ndarray  # (N, 4**d) flat control-point indices
    cell: np.ndarray  # (N,) flat cell index
    offsets: np.ndarray  # (4**d, d) stencil offsets
    w0: np.ndarray  # (N, K)
    w1: np.ndarray | None = None  # (N, d, K) first derivatives per axis
    w2: np.ndarray | None = None  # (N, P, K) second derivatives per upper-triangle pair

    @classmethod
    def build(cls, grid: BSplineGrid, points, order: int = 0) -> "Stencils":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = grid.ndim
        t = (pts - grid.domain_min) / grid.spacing
        cell = np.clip(np.floor(t).astype(np.intp), 0, np.asarray(grid.cell_dims) - 1)
        u = t - cell
        offsets = np.array(list(itertools.product(range(4), repeat=d)), dtype=np.intp)
        ctrl = cell[:, None, :] + offsets[None, :, :]
        idx = np.ravel_multi_index(tuple(ctrl[..., k] for k in range(d)), grid.control_dims)
        flat_cell = np.ravel_multi_index(tuple(cell[:, k] for k in range(d)), grid.cell_dims)
        b = [basis_weights(u[:, k]) for k in range(d)]
        axes = np.arange(d)

        def tensor(per_axis):
            w = np.ones((len(pts), len(offsets)))
            for k in range(d):
                w *= per_axis[k][:, offsets[:, k]]
            return w

        w0 = tensor(b)
        w1 = w2 = None
        if order >= 1:
            db = [basis_first_derivatives(u[:, k]) / grid.spacing[k] for k in range(d)]
            w1 = np.stack([tensor([db[k] if k == a else b[k] for k in axes]) for a in axes], axis=1)
        if order >= 2:
            db = [basis_first_derivatives(u[:, k]) / grid.spacing[k] for k in range(d)]
            d2b = [basis_second_derivatives(u[:, k]) / grid.spacing[k] ** 2 for k in range(d)]
            planes = []
            for a, c in derivative_pairs(d)[0]:
                if a == c:
                    factors = [d2b[k] if k == a else b[k] for k in axes]
                else:
                    factors = [db[k] if k in (a, c) else b[k] for k in axes]
                planes.append(tensor(factors))
            w2 = np.stack(planes, axis=1)
        return cls(idx, flat_cell, offsets, w0, w1, w2)


def affected_region(grid: BSplineGrid, control_index) -> PatchRegion:
    """Cells whose interpolation stencil contains the given control point."""
    if np.isscalar(control_index) or np.ndim(control_index) == 0:
        control_index = grid.multi_index(control_index)
    i = np.asarray(control_index, dtype=int)
    if np.any(i < 0) or np.any(i >= np.asarray(grid.control_dims)):
        raise IndexError(f"control index {tuple(i)} outside lattice {grid.control_dims}")
    lo = np.maximum(i - 3, 0)
    hi = np.minimum(i, np.asarray(grid.cell_dims) - 1) + 1
    return PatchRegion(tuple(int(v) for v in lo), tuple(int(v) for v in hi), grid.cell_dims)


def whole_region(grid: BSplineGrid) -> PatchRegion:
    return PatchRegion((0,) * grid.ndim, grid.cell_dims, grid.cell_dims)


def bending_energy(grid: BSplineGrid, samples) -> float:
    """Mean over samples of the squared Frobenius norm of the Hessian tensor of ``T'``."""
    pts = samples.points if isinstance(samples, SamplePointSet) else np.atleast_2d(samples)
    h = grid.hessians(pts)
    _, mult = derivative_pairs(grid.ndim)
    return float(np.mean(np.einsum("spm,p->s", h * h, mult)))


def min_jacobian_determinant(grid: BSplineGrid, samples) -> float:
    """Fold diagnostic: smallest ``det(dT'/dx)`` over the samples (negative means folded)."""
    pts = samples.points if isinstance(samples, SamplePointSet) else np.atleast_2d(samples)
    return float(np.min(np.linalg.det(grid.jacobians(pts))))


class SampleBuckets:
    """Samples grouped by grid cell so a region's samples are contiguous ranges."""

    def __init__(self, grid: BSplineGrid, points):
        cell = Stencils.build(grid, points).cell
        n_cells = int(np.prod(grid.cell_dims))
        self.order = np.argsort(cell, kind="stable")
        counts = np.bincount(cell, minlength=n_cells)
        self.starts = np.concatenate([[0], np.cumsum(counts)])

    def samples_in(self, region: PatchRegion) -> np.ndarray:
        parts = [self.order[self.starts[c]:self.starts[c + 1]] for c in region.cells()]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)


def partial_contribution(grid: BSplineGrid, region: PatchRegion, problem: RegistrationProblem,
                         buckets: SampleBuckets | None = None):
    """Similarity and bending contributions of the samples inside ``region``.

    Contributions are already divided by ``|P_t|`` so that summing them over
    a partition of the cells gives the full objectives.
    """
    if buckets is None:
        buckets = SampleBuckets(grid, problem.samples.points)
    sids = buckets.samples_in(region)
    n = len(problem.samples)
    if len(sids) == 0:
        return 0.0, 0.0
    pts = problem.samples.points[sids]
    st = Stencils.build(grid, pts, order=2)
    coef = grid.coefficients[st.idx]
    moved = pts + np.einsum("sk,skm->sm", st.w0, coef)
    sim = problem.similarity_terms(moved, sids).sum() / n
    h = np.einsum("spk,skm->spm", st.w2, coef)
    _, mult = derivative_pairs(grid.ndim)
    bend = np.einsum("spm,p->", h * h, mult) / n
    return float(sim), float(bend)


# partial evaluation engine ------------------------------------------------------


@dataclass(eq=False)
class _PointSupport:
    sids: np.ndarray
    w0: np.ndarray
    w2: np.ndarray  # (|sids|, P)


@dataclass(eq=False)
class _BSplineCache:
    disp: np.ndarray
    hess: np.ndarray
    sim_terms: np.ndarray
    bend_terms: np.ndarray


class BSplineEvaluator:
    """Full and per-control-point incremental objective evaluation on a fixed sample set."""

    kind = "bspline"

    def __init__(self, problem: RegistrationProblem, grid: BSplineGrid, init_scale: float = 0.3):
        self.problem = problem
        self.grid = grid
        self.init_scale = init_scale
        self.n_vars = grid.n_vars
        pts = problem.samples.points
        self.n_samples = len(pts)
        self.stencils = Stencils.build(grid, pts, order=2)
        self.pair_mult = derivative_pairs(grid.ndim)[1]
        self.buckets = SampleBuckets(grid, pts)
        self.supports = [self._support(i) for i in range(grid.n_points)]

    def _support(self, flat: int) -> _PointSupport:
        region = affected_region(self.grid, flat)
        sids = self.buckets.samples_in(region)
        st = self.stencils
        slot = np.nonzero(st.idx[sids] == flat)[1] if len(sids) else np.zeros(0, dtype=np.intp)
        return _PointSupport(
            sids.astype(np.int64),
            np.ascontiguousarray(st.w0[sids, slot]),
            np.ascontiguousarray(st.w2[sids, :, slot]),
        )

    def fos(self) -> list[FOSElement]:
        """One element per control point holding its ``d`` coefficients."""
        d = self.grid.ndim
        return [
            FOSElement(np.arange(i * d, (i + 1) * d), affected_region(self.grid, i))
            for i in range(self.grid.n_points)
        ]

    def random_genotype(self, rng) -> np.ndarray:
        s = self.init_scale * self.grid.spacing
        return (rng.uniform(-1.0, 1.0, size=(self.grid.n_points, self.grid.ndim)) * s).ravel()

    def decode(self, genotype) -> BSplineGrid:
        return self.grid.with_coefficients(genotype)

    def _objectives(self, cache: _BSplineCache) -> np.ndarray:
        n = self.n_samples
        return np.array([cache.sim_terms.sum() / n, cache.bend_terms.sum() / n])

    def evaluate(self, genotype) -> Solution:
        genotype = np.array(genotype, dtype=float).reshape(self.n_vars)
        coef = genotype.reshape(-1, self.grid.ndim)[self.stencils.idx]
        disp = np.einsum("sk,skm->sm", self.stencils.w0, coef)
        hess = np.einsum("spk,skm->spm", self.stencils.w2, coef)
        cache = _BSplineCache(
            disp,
            hess,
            self.problem.similarity_terms(self.problem.samples.points + disp),
            np.einsum("spm,p->s", hess * hess, self.pair_mult),
        )
        return Solution(genotype, self._objectives(cache), cache=cache)

    def apply(self, sol: Solution, element: FOSElement, values):
        """Set the element's coefficients to ``values`` and update objectives in place."""
        flat = int(element.indices[0]) // self.grid.ndim
        values = np.asarray(values, dtype=float)
        old_values = sol.genotype[element.indices].copy()
        sup = self.supports[flat]
        c = sol.cache
        sids = sup.sids
        undo = (
            element, old_values, sol.objectives.copy(), sids,
            _kernels.gather_rows(c.disp, sids), _kernels.gather_rows(c.hess, sids),
            c.sim_terms[sids], c.bend_terms[sids],
        )
        sol.genotype[element.indices] = values
        _kernels.bspline_move(
            sids, sup.w0, sup.w2, values - old_values, c.disp, c.hess, c.sim_terms, c.bend_terms,
            self.problem.samples.points, self.problem.target_values, *self.problem.source.kernel_data(),
            self.pair_mult,
        )
        sol.objectives = self._objectives(c)
        return undo

    def revert(self, sol: Solution, undo) -> None:
        element, old_values, objectives, sids, disp, hess, sim, bend = undo
        sol.genotype[element.indices] = old_values
        c = sol.cache
        _kernels.scatter_rows(c.disp, sids, disp)
        _kernels.scatter_rows(c.hess, sids, hess)
        c.sim_terms[sids] = sim
        c.bend_terms[sids] = bend
        sol.objectives = objectives

    def min_jacobian(self, genotype) -> float:
        return min_jacobian_determinant(self.decode(genotype), self.problem.samples)


# serialization ------------------------------------------------------------------


def write_grid(path, grid: BSplineGrid) -> None:
    lines = [
        "bspline-grid 1",
        "control_dims " + " ".join(str(n) for n in grid.control_dims),
        "spacing " + " ".join(repr(float(v)) for v in grid.spacing),
        "domain_min " + " ".join(repr(float(v)) for v in grid.domain_min),
        "domain_max " + " ".join(repr(float(v)) for v in grid.domain_max),
    ]
    lines += [" ".join(repr(float(v)) for v in row) for row in grid.coefficients]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path) -> BSplineGrid:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "bspline-grid 1":
        raise ArchiveFormatError(f"{path}: not a B-spline grid file")
    fields = {}
    for line in lines[1:5]:
        key, *vals = line.split()
        fields[key] = vals
    dims = [int(v) for v in fields["control_dims"]]
    coef = np.array([[float(v) for v in line.split()] for line in lines[5:] if line.strip()])
    return BSplineGrid(dims, [float(v) for v in fields["spacing"]], [float(v) for v in fields["domain_min"]],
                       [float(v) for v in fields["domain_max"]], coef.reshape(-1, len(dims)))
