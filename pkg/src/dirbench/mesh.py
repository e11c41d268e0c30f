"""Dual-dynamic simplex meshes: paired target/source meshes sharing connectivity.

The target mesh tiles the target image domain; each simplex has a partner
in the source mesh with the same vertex indices, and ``T'`` maps a target
point to the source simplex using its target barycentric coordinates.
Both point sets are optimization variables.

Genotype layout is ``[target.ravel(), source.ravel()]``.  Points on the
image border keep the coordinates that put them on the border (corners are
fully fixed), so both meshes always tile the same box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ArchiveFormatError, LocationError, MeshInitError
from .gomea.solution import FOSElement, Solution
from .objectives import RegistrationProblem

LOCATE_TOL = -1e-12
EPS_VOL_FACTOR = 1e-4


def edge_pattern(ndim: int):
    """Local vertex pairs of simplex edges and spokes.

    Returns ``(edges, spokes)``: edges are ``(i, j)`` vertex pairs, spokes are
    ``(i, others)`` from vertex ``i`` to the centroid of the opposite face.
    """
    verts = range(ndim + 1)
    edges = list(itertools.combinations(verts, 2))
    spokes = [(i, tuple(j for j in verts if j != i)) for i in verts]
    return edges, spokes


def edges_per_simplex(ndim: int) -> int:
    edges, spokes = edge_pattern(ndim)
    return len(edges) + len(spokes)


def signed_volumes(points, simplices) -> np.ndarray:
    """Signed area/volume of each simplex (positive for counter-clockwise / right-handed order)."""
    v = np.asarray(points, dtype=float)[np.asarray(simplices)]
    return _signed_volumes_of(v)


def _signed_volumes_of(v: np.ndarray) -> np.ndarray:
    d = v.shape[-1]
    return np.linalg.det(v[:, 1:, :] - v[:, :1, :]) / math.factorial(d)


def edge_operator(ndim: int) -> np.ndarray:
    """``(k, d + 1)`` matrix mapping simplex vertices to its edge and spoke vectors."""
    edges, spokes = edge_pattern(ndim)
    rows = []
    for i, j in edges:
        r = np.zeros(ndim + 1)
        r[i], r[j] = -1.0, 1.0
        rows.append(r)
    for i, others in spokes:
        r = np.zeros(ndim + 1)
        r[list(others)] = 1.0 / len(others)
        r[i] = -1.0
        rows.append(r)
    return np.array(rows)


_EDGE_OPS = {d: edge_operator(d) for d in (2, 3)}


def _edge_lengths_of(v: np.ndarray) -> np.ndarray:
    """Lengths of the simplex edges followed by the spokes, shape ``(m, k)``."""
    vecs = np.einsum("ka,mad->mkd", _EDGE_OPS[v.shape[-1]], v)
    return np.sqrt(np.einsum("mkd,mkd->mk", vecs, vecs))


def _affine_frames(v: np.ndarray):
    """``(v0, inv)`` such that barycentrics 1..d of ``p`` are ``inv @ (p - v0)``."""
    m = np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))
    inv = np.empty_like(m)
    ok = np.abs(np.linalg.det(m)) > 0
    inv[ok] = np.linalg.inv(m[ok])
    inv[~ok] = 0.0
    return np.ascontiguousarray(v[:, 0, :]), inv


class DualMesh:
    """Target and source point sets over one shared simplex list."""

    def __init__(self, target, simplices, source=None, domain_min=None, domain_max=None,
                 orientation=None, reference_volume=None):
        self.target = np.array(target, dtype=float)
        self.simplices = np.array(simplices, dtype=np.int64)
        self.source = self.target.copy() if source is None else np.array(source, dtype=float)
        n, d = self.target.shape
        if d not in (2, 3) or self.simplices.ndim != 2 or self.simplices.shape[1] != d + 1:
            raise MeshInitError(f"simplices must have {d + 1} vertices in {d}D")
        if self.source.shape != self.target.shape:
            raise MeshInitError("source and target meshes need the same number of points")
        if len(self.simplices) == 0 or self.simplices.min() < 0 or self.simplices.max() >= n:
            raise MeshInitError("simplex indices out of range")
        if np.setdiff1d(np.arange(n), self.simplices).size:
            raise MeshInitError("every point must belong to at least one simplex")
        self.domain_min = self.target.min(axis=0) if domain_min is None else np.asarray(domain_min, dtype=float)
        self.domain_max = self.target.max(axis=0) if domain_max is None else np.asarray(domain_max, dtype=float)
        if orientation is None or reference_volume is None:
            vol = signed_volumes(self.target, self.simplices)
            if np.any(vol == 0):
                raise MeshInitError("initial target mesh contains degenerate simplices")
            orientation = np.sign(vol) if orientation is None else orientation
            reference_volume = np.abs(vol) if reference_volume is None else reference_volume
        self.orientation = np.asarray(orientation, dtype=float)
        self.reference_volume = np.asarray(reference_volume, dtype=float)
        self.eps_vol = EPS_VOL_FACTOR * self.reference_volume
        self._incidence = None

    @property
    def n_points(self) -> int:
        return len(self.target)

    @property
    def ndim(self) -> int:
        return self.target.shape[1]

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @property
    def n_vars(self) -> int:
        return 2 * self.target.size

    def genotype(self) -> np.ndarray:
        return np.concatenate([self.target.ravel(), self.source.ravel()])

    def with_points(self, target, source) -> "DualMesh":
        return DualMesh(target, self.simplices, source, self.domain_min, self.domain_max,
                        self.orientation, self.reference_volume)

    def from_genotype(self, genotype) -> "DualMesh":
        g = np.asarray(genotype, dtype=float)
        half = self.target.size
        return self.with_points(g[:half].reshape(self.target.shape), g[half:].reshape(self.target.shape))

    def incidence(self):
        """CSR ``(ptr, idx)`` of simplices incident to each point, ascending."""
        if self._incidence is None:
            owner = np.repeat(np.arange(self.n_simplices), self.ndim + 1)
            verts = self.simplices.ravel()
            order = np.lexsort((owner, verts))
            counts = np.bincount(verts, minlength=self.n_points)
            ptr = np.concatenate([[0], np.cumsum(counts)])
            self._incidence = (ptr, owner[order])
        return self._incidence

    def edges(self) -> np.ndarray:
        """Unique mesh edges ``(u, v)`` with ``u < v`` in lexicographic order."""
        pairs = np.concatenate([self.simplices[:, [i, j]] for i, j in edge_pattern(self.ndim)[0]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def border_mask(self, tol: float = 1e-9) -> np.ndarray:
        """``(n, d)`` booleans: coordinate ``k`` of point ``i`` lies on a domain face normal to ``k``."""
        scale = tol * np.maximum(self.domain_max - self.domain_min, 1.0)
        return (np.abs(self.target - self.domain_min) <= scale) | (np.abs(self.target - self.domain_max) <= scale)

    def transform_points(self, points) -> np.ndarray:
        """``T'`` at many target points; points outside the hull use the nearest simplex's affine map."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        owner, bary, _ = MeshLocator(self).assign(pts)
        return np.einsum("sa,sam->sm", bary, self.source[self.simplices[owner]])

    def transform_point(self, p) -> np.ndarray:
        loc = locate(self, p)
        return loc.coords @ self.source[self.simplices[loc.simplex]]


@dataclass(frozen=True)
class BarycentricLocation:
    simplex: int
    coords: np.ndarray


class MeshLocator:
    """Uniform bucket grid over target-simplex bounding boxes."""

    def __init__(self, mesh: DualMesh, buckets_per_axis: int | None = None):
        self.mesh = mesh
        d, m = mesh.ndim, mesh.n_simplices
        v = mesh.target[mesh.simplices]
        self.v0, self.inv = _affine_frames(v)
        nb = buckets_per_axis or max(1, int(round(m ** (1.0 / d) / 1.5)))
        self.nb = np.full(d, nb, dtype=np.int64)
        self.lo = np.minimum(mesh.domain_min, v.min(axis=(0, 1)))
        hi = np.maximum(mesh.domain_max, v.max(axis=(0, 1)))
        self.size = np.maximum((hi - self.lo) / self.nb, 1e-12)
        pad = 1e-9 * self.size
        blo = self._bucket_coords(v.min(axis=1) - pad)
        bhi = self._bucket_coords(v.max(axis=1) + pad)
        lists = [[] for _ in range(int(np.prod(self.nb)))]
        for t in range(m):
            ranges = [range(a, b + 1) for a, b in zip(blo[t], bhi[t])]
            for cell in itertools.product(*ranges):
                lists[int(np.ravel_multi_index(cell, tuple(self.nb)))].append(t)
        self.ptr = np.concatenate([[0], np.cumsum([len(x) for x in lists])]).astype(np.int64)
        self.idx = np.array([t for x in lists for t in x], dtype=np.int64)

    def _bucket_coords(self, pts):
        b = np.floor((pts - self.lo) / self.size).astype(np.int64)
        return np.clip(b, 0, self.nb - 1)

    def groups(self, pts) -> np.ndarray:
        b = self._bucket_coords(pts)
        return np.ravel_multi_index(tuple(b.T), tuple(self.nb)).astype(np.int64)

    def assign(self, pts):
        """``(owner, barycentric, misses)`` for many points with the fallback rule."""
        pts = np.ascontiguousarray(pts, dtype=float)
        n = len(pts)
        owner = np.empty(n, dtype=np.int64)
        bary = np.empty((n, self.mesh.ndim + 1))
        misses = _kernels.locate_points(pts, np.arange(n, dtype=np.int64), self.groups(pts), self.ptr,
                                        self.idx, self.v0, self.inv, LOCATE_TOL, owner, bary)
        return owner, bary, misses

    def locate(self, p) -> BarycentricLocation:
        p = np.asarray(p, dtype=float).reshape(1, -1)
        owner, bary, misses = self.assign(p)
        if misses:
            return locate_brute_force(self.mesh, p[0])
        return BarycentricLocation(int(owner[0]), bary[0])


def _barycentrics(mesh: DualMesh, p: np.ndarray) -> np.ndarray:
    v = mesh.target[mesh.simplices]
    d = mesh.ndim
    m = np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))
    lam = np.linalg.solve(m, (p - v[:, 0, :])[:, :, None])[:, :, 0]
    return np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1).reshape(-1, d + 1)


def locate_brute_force(mesh: DualMesh, p) -> BarycentricLocation:
    """Exhaustive scan: lowest-index simplex whose barycentrics are all >= tolerance."""
    p = np.asarray(p, dtype=float)
    lam = _barycentrics(mesh, p)
    inside = np.nonzero(lam.min(axis=1) >= LOCATE_TOL)[0]
    if len(inside) == 0:
        raise LocationError(f"point {p} lies outside the target mesh hull")
    return BarycentricLocation(int(inside[0]), lam[inside[0]])


def locate(mesh: DualMesh, p) -> BarycentricLocation:
    return MeshLocator(mesh).locate(p)


def fold_mask(mesh: DualMesh) -> np.ndarray:
    """Per simplex: True when either mesh inverts it or shrinks it to ``eps_vol`` or below."""
    vt = mesh.orientation * signed_volumes(mesh.target, mesh.simplices)
    vs = mesh.orientation * signed_volumes(mesh.source, mesh.simplices)
    return (vt <= mesh.eps_vol) | (vs <= mesh.eps_vol)


def is_fold_free(mesh: DualMesh) -> bool:
    return not bool(np.any(fold_mask(mesh)))


def edge_energy(mesh: DualMesh) -> float:
    """Mean squared difference of corresponding edge and spoke lengths over all simplices."""
    lt = _edge_lengths_of(mesh.target[mesh.simplices])
    ls = _edge_lengths_of(mesh.source[mesh.simplices])
    return float(np.mean((ls - lt) ** 2))


def affected_simplices(mesh: DualMesh, point_index) -> np.ndarray:
    """Simplices incident to one point (or to any of several points), ascending."""
    ptr, idx = mesh.incidence()
    pts = np.atleast_1d(point_index)
    return np.unique(np.concatenate([idx[ptr[i]:ptr[i + 1]] for i in pts]))


def edge_cover(mesh: DualMesh) -> list[tuple[int, int]]:
    """Greedy edge cover: a maximal matching, then one edge for every unmatched point."""
    edges = mesh.edges()
    covered = np.zeros(mesh.n_points, dtype=bool)
    chosen = []
    for u, v in edges:
        if not covered[u] and not covered[v]:
            chosen.append((int(u), int(v)))
            covered[u] = covered[v] = True
    for p in np.nonzero(~covered)[0]:
        u, v = edges[np.nonzero((edges[:, 0] == p) | (edges[:, 1] == p))[0][0]]
        chosen.append((int(u), int(v)))
    return chosen


# mesh construction --------------------------------------------------------------


def farthest_point_sampling(candidates, k: int, existing=None) -> np.ndarray:
    """Indices of ``k`` candidates chosen greedily to maximize the distance to all chosen points."""
    cand = np.asarray(candidates, dtype=float)
    if k <= 0 or len(cand) == 0:
        return np.zeros(0, dtype=np.intp)
    if existing is not None and len(existing):
        dist = np.min(np.linalg.norm(cand[:, None, :] - np.asarray(existing)[None, :, :], axis=2), axis=1)
    else:
        dist = np.full(len(cand), np.inf)
    out = []
    for _ in range(min(k, len(cand))):
        i = int(np.argmax(dist))
        if dist[i] <= 0:
            break
        out.append(i)
        dist = np.minimum(dist, np.linalg.norm(cand - cand[i], axis=1))
    return np.asarray(out, dtype=np.intp)


def structure_threshold(image) -> float:
    """Midway between the background level (border median) and the mean structure intensity."""
    v = image.voxels.astype(float)
    border = np.concatenate([np.take(v, i, axis=k).ravel() for k in range(v.ndim) for i in (0, -1)])
    bg = float(np.median(border))
    dev = v - bg
    peak = float(np.max(np.abs(dev)))
    if peak <= 1e-9 * max(1.0, abs(bg)):
        raise MeshInitError("no structure boundary found: image is uniform")
    structure = dev[np.abs(dev) > 0.1 * peak]
    return bg + float(np.mean(structure)) / 2.0


def _contour_points_2d(image, level, count):
    from skimage.measure import find_contours

    origin, spacing = np.asarray(image.origin), np.asarray(image.spacing)
    lines = [origin + c * spacing for c in find_contours(image.voxels.astype(float), level) if len(c) > 2]
    if not lines:
        raise MeshInitError("no structure boundary found at the threshold level")
    lengths = np.array([np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1)) for c in lines])
    share = count * lengths / lengths.sum()
    alloc = np.floor(share).astype(int)
    for i in np.argsort(-(share - alloc), kind="stable")[: count - alloc.sum()]:
        alloc[i] += 1
    out = []
    for line, length, k in zip(lines, lengths, alloc):
        if k == 0:
            continue
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(line, axis=0), axis=1))])
        at = np.arange(k) * length / k
        out.append(np.stack([np.interp(at, arc, line[:, j]) for j in range(2)], axis=1))
    return np.concatenate(out)


def _contour_points_3d(image, level, count):
    from skimage.measure import marching_cubes

    try:
        verts, _, _, _ = marching_cubes(image.voxels.astype(float), level, spacing=tuple(image.spacing))
    except (ValueError, RuntimeError) as exc:
        raise MeshInitError(f"no structure boundary found: {exc}") from exc
    verts = verts + np.asarray(image.origin)
    return verts[farthest_point_sampling(verts, count)]


def build_mesh(image, n_points: int, contour_fraction: float = 0.4) -> DualMesh:
    """Boundary-aware Delaunay mesh with ``n_points`` points; source starts as a copy of target.

    About ``contour_fraction`` of the points sit on the thresholded structure
    boundary; the image corners are always included; the rest are spread
    over the image border and interior by farthest-point sampling.
    """
    from scipy.spatial import Delaunay

    d = image.ndim
    n_points = int(n_points)
    if n_points < d + 1:
        raise MeshInitError(f"need at least {d + 1} points to form a simplex, got {n_points}")
    if n_points < 2**d:
        raise MeshInitError(f"need at least {2**d} points to pin the image corners, got {n_points}")
    lo, hi = image.domain_min, image.domain_max
    level = structure_threshold(image)
    n_contour = min(int(round(contour_fraction * n_points)), n_points - 2**d)
    corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
    chosen = [corners]
    if n_contour > 0:
        contour = _contour_points_2d(image, level, n_contour) if d == 2 else _contour_points_3d(image, level, n_contour)
        chosen.append(contour)
    rest = n_points - sum(len(c) for c in chosen)
    centers = image.voxel_centers()
    on_border = np.any((np.abs(centers - lo) < 1e-9) | (np.abs(centers - hi) < 1e-9), axis=1)
    n_border = rest // 3
    for pool, k in ((centers[on_border], n_border), (centers[~on_border], None)):
        existing = np.concatenate(chosen)
        k = n_points - len(existing) if k is None else k
        chosen.append(pool[farthest_point_sampling(pool, k, existing)])
    target = np.concatenate(chosen)
    if len(target) != n_points:
        raise MeshInitError(f"could only place {len(target)} distinct points of {n_points}")
    tri = Delaunay(target)
    simplices = tri.simplices.astype(np.int64)
    vol = signed_volumes(target, simplices)
    keep = np.abs(vol) > 1e-9 * np.abs(vol).mean()
    simplices, vol = simplices[keep], vol[keep]
    flip = vol < 0
    simplices[flip, 0], simplices[flip, 1] = simplices[flip, 1].copy(), simplices[flip, 0].copy()
    if np.setdiff1d(np.arange(n_points), simplices).size:
        raise MeshInitError("triangulation left some points unused")
    return DualMesh(target, simplices, None, lo, hi)


# partial evaluation engine ------------------------------------------------------


@dataclass(frozen=True)
class MeshRegion:
    points: tuple[int, ...]
    simplices: np.ndarray


@dataclass(eq=False)
class _MeshCache:
    owner: np.ndarray
    bary: np.ndarray
    sim_terms: np.ndarray
    edge_terms: np.ndarray
    v0: np.ndarray
    inv: np.ndarray

    def copy(self):
        return _MeshCache(*(a.copy() for a in (self.owner, self.bary, self.sim_terms, self.edge_terms,
                                               self.v0, self.inv)))


class MeshEvaluator:
    """Full and per-edge incremental objective evaluation of dual meshes."""

    kind = "mesh"

    def __init__(self, problem: RegistrationProblem, template: DualMesh, jitter: float = 0.05,
                 max_tries: int = 200):
        self.problem = problem
        self.mesh = template
        self.jitter = jitter
        self.max_tries = max_tries
        self.n_vars = template.n_vars
        self.n_samples = len(problem.samples)
        self.k = edges_per_simplex(template.ndim)
        n, d = template.target.shape
        fixed = np.tile(template.border_mask().ravel(), 2)
        self.fixed = fixed
        self.fixed_values = np.tile(template.target.ravel(), 2)
        self.lo = np.tile(template.domain_min, 2 * n)
        self.hi = np.tile(template.domain_max, 2 * n)
        self.mean_edge = float(np.mean(np.linalg.norm(
            np.diff(template.target[template.edges()], axis=1)[:, 0], axis=1)))
        self._mark = np.zeros(template.n_simplices, dtype=bool)

    def fos(self) -> list[FOSElement]:
        """One element per cover edge: both endpoints' coordinates in both meshes."""
        n, d = self.mesh.target.shape
        out = []
        for u, v in edge_cover(self.mesh):
            t = np.concatenate([np.arange(u * d, (u + 1) * d), np.arange(v * d, (v + 1) * d)])
            out.append(FOSElement(np.concatenate([t, t + n * d]),
                                  MeshRegion((u, v), affected_simplices(self.mesh, [u, v]))))
        return out

    def project(self, indices, values) -> np.ndarray:
        """Clip to the domain and restore the coordinates pinned to the image border."""
        values = np.clip(np.asarray(values, dtype=float), self.lo[indices], self.hi[indices])
        pinned = self.fixed[indices]
        values[pinned] = self.fixed_values[indices][pinned]
        return values

    def random_genotype(self, rng) -> np.ndarray:
        """Both meshes jittered independently by up to ``jitter`` mean edge lengths, fold-free."""
        base = self.mesh.genotype()
        amp = self.jitter * self.mean_edge
        all_idx = np.arange(self.n_vars)
        for _ in range(self.max_tries):
            g = self.project(all_idx, base + rng.uniform(-amp, amp, size=base.shape))
            if is_fold_free(self.mesh.from_genotype(g)):
                return g
        raise MeshInitError(f"no fold-free jitter found in {self.max_tries} tries")

    def decode(self, genotype) -> DualMesh:
        return self.mesh.from_genotype(genotype)

    def _split(self, genotype):
        half = self.mesh.target.size
        shape = self.mesh.target.shape
        return genotype[:half].reshape(shape), genotype[half:].reshape(shape)

    def _objectives(self, cache: _MeshCache) -> np.ndarray:
        return np.array([cache.sim_terms.sum() / self.n_samples,
                         cache.edge_terms.sum() / (self.k * len(cache.edge_terms))])

    def evaluate(self, genotype) -> Solution:
        genotype = np.array(genotype, dtype=float).reshape(self.n_vars)
        mesh = self.decode(genotype)
        problem = self.problem
        pts = problem.samples.points
        locator = MeshLocator(mesh)
        owner, bary, _ = locator.assign(pts)
        sim_terms = np.empty(len(pts))
        sids = np.arange(len(pts), dtype=np.int64)
        _kernels.mesh_similarity(sids, owner, bary, mesh.simplices, mesh.source, problem.target_values,
                                 *problem.source.kernel_data(), sim_terms)
        vt, vs = mesh.target[mesh.simplices], mesh.source[mesh.simplices]
        edge_terms = np.sum((_edge_lengths_of(vs) - _edge_lengths_of(vt)) ** 2, axis=1)
        cache = _MeshCache(owner, bary, sim_terms, edge_terms, locator.v0, locator.inv)
        bad = int(np.count_nonzero(fold_mask(mesh)))
        return Solution(genotype, self._objectives(cache), feasible=bad == 0, violation=float(bad), cache=cache)

    def apply(self, sol: Solution, element: FOSElement, values):
        """Move one cover edge in both meshes; returns ``None`` (and changes nothing) on a fold."""
        idx = element.indices
        values = self.project(idx, values)
        simp = element.region.simplices
        g = sol.genotype
        old = g[idx].copy()
        g[idx] = values
        tgt, src = self._split(g)
        tri = self.mesh.simplices[simp]
        vt, vs = tgt[tri], src[tri]
        sign, eps = self.mesh.orientation[simp], self.mesh.eps_vol[simp]
        if np.any(sign * _signed_volumes_of(vt) <= eps) or np.any(sign * _signed_volumes_of(vs) <= eps):
            g[idx] = old
            return None
        c = sol.cache
        mark = self._mark
        mark[simp] = True
        sids = np.flatnonzero(mark[c.owner]).astype(np.int64)
        mark[simp] = False
        undo = (idx, old, sol.objectives.copy(), simp, c.v0[simp], c.inv[simp], c.edge_terms[simp],
                sids, c.owner[sids], c.bary[sids], c.sim_terms[sids])
        c.v0[simp], c.inv[simp] = _affine_frames(vt)
        c.edge_terms[simp] = np.sum((_edge_lengths_of(vs) - _edge_lengths_of(vt)) ** 2, axis=1)
        ptr = np.array([0, len(simp)], dtype=np.int64)
        pts = self.problem.samples.points
        _kernels.locate_points(pts, sids, np.zeros(len(sids), dtype=np.int64), ptr, simp.astype(np.int64),
                               c.v0, c.inv, LOCATE_TOL, c.owner, c.bary)
        _kernels.mesh_similarity(sids, c.owner, c.bary, self.mesh.simplices, src, self.problem.target_values,
                                 *self.problem.source.kernel_data(), c.sim_terms)
        sol.objectives = self._objectives(c)
        return undo

    def revert(self, sol: Solution, undo) -> None:
        idx, old, objectives, simp, v0, inv, edge_terms, sids, owner, bary, sim_terms = undo
        c = sol.cache
        sol.genotype[idx] = old
        c.v0[simp], c.inv[simp], c.edge_terms[simp] = v0, inv, edge_terms
        c.owner[sids], c.bary[sids], c.sim_terms[sids] = owner, bary, sim_terms
        sol.objectives = objectives

    def is_fold_free(self, genotype) -> bool:
        return is_fold_free(self.decode(genotype))


# serialization ------------------------------------------------------------------


def write_mesh(path, mesh: DualMesh) -> None:
    fmt = lambda row: " ".join(repr(float(v)) for v in row)  # noqa: E731
    lines = [
        "dual-mesh 1",
        f"ndim {mesh.ndim}",
        "domain_min " + fmt(mesh.domain_min),
        "domain_max " + fmt(mesh.domain_max),
        f"points {mesh.n_points}",
    ]
    lines += [fmt(p) for p in mesh.target]
    lines += [fmt(p) for p in mesh.source]
    lines.append(f"simplices {mesh.n_simplices}")
    lines += [" ".join(str(int(i)) for i in s) + " " + repr(float(o)) + " " + repr(float(v))
              for s, o, v in zip(mesh.simplices, mesh.orientation, mesh.reference_volume)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> DualMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "dual-mesh 1":
        raise ArchiveFormatError(f"{path}: not a dual-mesh file")
    d = int(lines[1].split()[1])
    lo = [float(v) for v in lines[2].split()[1:]]
    hi = [float(v) for v in lines[3].split()[1:]]
    n = int(lines[4].split()[1])
    rows = [[float(v) for v in line.split()] for line in lines[5:5 + 2 * n]]
    m = int(lines[5 + 2 * n].split()[1])
    srows = [line.split() for line in lines[6 + 2 * n:6 + 2 * n + m]]
    simplices = [[int(v) for v in r[: d + 1]] for r in srows]
    orientation = [float(r[d + 1]) for r in srows]
    ref = [float(r[d + 2]) for r in srows]
    return DualMesh(rows[:n], simplices, rows[n:], lo, hi, orientation, ref)
