"""Regular-grid images, multilinear sampling and deformation vector fields.

World geometry is axis-aligned: voxel ``(i0, i1, ...)`` has its center at
``origin + index * spacing`` and point coordinates are ordered like the
array axes.  The continuous image domain is the box spanned by the voxel
centers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


def _as_tuple(values, ndim: int, name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in np.broadcast_to(np.asarray(values, dtype=float), (ndim,)))
    if not all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite, got {out}")
    return out


@dataclass(frozen=True, eq=False)
class ScalarImage:
    """Scalar intensities on a regular 2D or 3D voxel grid (float32 storage)."""

    voxels: np.ndarray
    spacing: tuple[float, ...] = None
    origin: tuple[float, ...] = None

    def __post_init__(self):
        vox = np.ascontiguousarray(self.voxels, dtype=np.float32)
        if vox.ndim not in (2, 3):
            raise ValueError(f"images must be 2D or 3D, got {vox.ndim} axes")
        if min(vox.shape) < 2:
            raise ValueError(f"every axis needs at least 2 voxels, got {vox.shape}")
        if not np.all(np.isfinite(vox)):
            raise ValueError("image intensities must be finite")
        vox.setflags(write=False)
        ndim = vox.ndim
        spacing = _as_tuple(1.0 if self.spacing is None else self.spacing, ndim, "spacing")
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        origin = _as_tuple(0.0 if self.origin is None else self.origin, ndim, "origin")
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "_kernel_data", None)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.voxels.shape

    def kernel_data(self):
        """``(flat float64 voxels, dims, strides, origin, 1/spacing)`` for compiled samplers."""
        if self._kernel_data is None:
            dims = np.asarray(self.dims, dtype=np.int64)
            strides = np.array([int(np.prod(self.dims[k + 1:])) for k in range(self.ndim)], dtype=np.int64)
            data = (
                self.voxels.ravel().astype(np.float64),
                dims,
                strides,
                np.asarray(self.origin, dtype=float),
                1.0 / np.asarray(self.spacing, dtype=float),
            )
            object.__setattr__(self, "_kernel_data", data)
        return self._kernel_data

    @property
    def ndim(self) -> int:
        return self.voxels.ndim

    @property
    def voxel_count(self) -> int:
        return int(self.voxels.size)

    @property
    def domain_min(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def domain_max(self) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of all voxel centers, shape ``(voxel_count, ndim)``, row-major."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def same_geometry(self, other) -> bool:
        return (
            tuple(self.dims) == tuple(other.dims)
            and self.spacing == other.spacing
            and self.origin == other.origin
        )

    def with_voxels(self, voxels) -> "ScalarImage":
        return ScalarImage(voxels, self.spacing, self.origin)


@dataclass(frozen=True, eq=False)
class DeformationField:
    """One displacement vector per voxel of ``geometry``; target space, pointing to source."""

    vectors: np.ndarray
    spacing: tuple[float, ...]
    origin: tuple[float, ...]
    _dims: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        vec = np.ascontiguousarray(self.vectors, dtype=np.float64)
        ndim = vec.ndim - 1
        if ndim not in (2, 3) or vec.shape[-1] != ndim:
            raise ValueError(f"DVF must have shape dims + (ndim,), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("DVF components must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "spacing", _as_tuple(self.spacing, ndim, "spacing"))
        object.__setattr__(self, "origin", _as_tuple(self.origin, ndim, "origin"))
        object.__setattr__(self, "_dims", vec.shape[:-1])

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def ndim(self) -> int:
        return len(self._dims)

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=-1)


def _corner_offsets(ndim: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=ndim)), dtype=np.intp)


def _continuous_index(image: ScalarImage, points: np.ndarray):
    dims = np.asarray(image.dims)
    x = (points - np.asarray(image.origin)) / np.asarray(image.spacing)
    inside = (x >= 0) & (x <= dims - 1)
    x = np.clip(x, 0, dims - 1)
    base = np.minimum(np.floor(x).astype(np.intp), dims - 2)
    return base, x - base, inside


def interpolate_many(image: ScalarImage, points, gradient: bool = False):
    """Multilinear interpolation at many world points.

    Points outside the domain are clamped to the nearest boundary voxel
    center first.  With ``gradient=True`` also returns the spatial gradient
    of the interpolant (per mm); it is zero along clamped axes.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base, frac, inside = _continuous_index(image, pts)
    vox, _, strides, _, _ = image.kernel_data()
    flat0 = base @ strides
    corners = _corner_offsets(image.ndim)
    values = np.zeros(len(pts))
    grad = np.zeros_like(pts) if gradient else None
    for corner in corners:
        w_axes = np.where(corner == 1, frac, 1.0 - frac)
        sample = vox[flat0 + corner @ strides]
        values += np.prod(w_axes, axis=1) * sample
        if gradient:
            for k in range(image.ndim):
                others = np.prod(np.delete(w_axes, k, axis=1), axis=1)
                sign = 1.0 if corner[k] == 1 else -1.0
                grad[:, k] += sign * others * sample
    if gradient:
        grad /= np.asarray(image.spacing)
        grad[~inside] = 0.0
        return values, grad
    return values


def interpolate(image: ScalarImage, p) -> float:
    """Multilinear intensity at a single world point (clamped outside the image)."""
    return float(interpolate_many(image, np.asarray(p, dtype=float)[None, :])[0])


def rasterize_dvf(transform, geometry: ScalarImage) -> DeformationField:
    """Sample ``T'(p) - p`` at every voxel center of ``geometry``.

    ``transform`` is any object with a vectorized ``transform_points`` method.
    """
    centers = geometry.voxel_centers()
    moved = np.asarray(transform.transform_points(centers), dtype=float)
    vectors = (moved - centers).reshape(tuple(geometry.dims) + (geometry.ndim,))
    return DeformationField(vectors, geometry.spacing, geometry.origin)


class IdentityTransform:
    def transform_points(self, points):
        return np.array(points, dtype=float, copy=True)


class TranslationTransform:
    def __init__(self, offset):
        self.offset = np.asarray(offset, dtype=float)

    def transform_points(self, points):
        return np.asarray(points, dtype=float) + self.offset
