"""Synthetic "full vs. empty bladder" registration phantoms.

``isolated-blob`` renders a single ellipse/ellipsoid on a black background,
large in the source state and small in the target state.  ``multi-organ``
adds rigid bone-like discs (identical in both states) and two tube-like
structures that the blob pushes aside when it is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import PhantomSpecError
from .image import ScalarImage

KINDS = ("isolated-blob", "multi-organ")
STATES = ("source", "target")


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, ...]
    radii: tuple[float, ...]

    def mask(self, points: np.ndarray) -> np.ndarray:
        q = (points - np.asarray(self.center)) / np.asarray(self.radii)
        return np.sum(q * q, axis=1) <= 1.0

    def local(self, points: np.ndarray) -> np.ndarray:
        return (points - np.asarray(self.center)) / np.asarray(self.radii)

    def bounds(self):
        c, r = np.asarray(self.center), np.asarray(self.radii)
        return c - r, c + r


@dataclass(frozen=True)
class Capsule:
    start: tuple[float, ...]
    end: tuple[float, ...]
    radius: float

    def _projection(self, points):
        a, b = np.asarray(self.start), np.asarray(self.end)
        ab = b - a
        t = np.clip((points - a) @ ab / max(ab @ ab, 1e-12), 0.0, 1.0)
        return a + t[:, None] * ab, t

    def mask(self, points: np.ndarray) -> np.ndarray:
        closest, _ = self._projection(points)
        return np.sum((points - closest) ** 2, axis=1) <= self.radius**2

    def local(self, points: np.ndarray) -> np.ndarray:
        closest, t = self._projection(points)
        out = (points - closest) / self.radius
        out[:, 0] += 2.0 * t - 1.0
        return out

    def bounds(self):
        a, b = np.asarray(self.start), np.asarray(self.end)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and intensities of a phantom pair; lengths in mm (world units)."""

    kind: str = "isolated-blob"
    dims: tuple[int, ...] = (64, 64)
    spacing: tuple[float, ...] = (1.0, 1.0)
    source_center: tuple[float, ...] = (31.5, 31.5)
    source_radii: tuple[float, ...] = (20.0, 20.0)
    target_center: tuple[float, ...] = (34.5, 31.5)
    target_radii: tuple[float, ...] = (11.0, 12.0)
    background: float = 0.0
    blob_intensity: float = 10.0
    bone_intensity: float = 16.0
    tube_intensity: float = 6.0
    texture_amplitude: float = 0.05
    margin: float = 2.0
    seed: int = 0
    bones: tuple = field(default=None)
    source_tubes: tuple = field(default=None)
    target_tubes: tuple = field(default=None)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def extent(self) -> np.ndarray:
        return (np.asarray(self.dims) - 1) * np.asarray(self.spacing)


def blob_spec(dims=(64, 64), **overrides) -> PhantomSpec:
    """Isolated-blob spec whose blob geometry scales with ``dims`` (1 mm voxels by default)."""
    dims = tuple(int(n) for n in dims)
    ndim = len(dims)
    spacing = overrides.pop("spacing", (1.0,) * ndim)
    extent = (np.asarray(dims) - 1) * np.asarray(spacing)
    half = extent / 2.0
    base = dict(
        dims=dims,
        spacing=tuple(spacing),
        source_center=tuple(half),
        source_radii=tuple(0.3125 * extent.min() * np.ones(ndim)),
        target_center=tuple(half + np.eye(ndim)[0] * 0.05 * extent[0]),
        target_radii=tuple(0.17 * extent.min() * np.linspace(1.0, 1.09, ndim)),
    )
    base.update(overrides)
    return PhantomSpec(**base)


def _default_bones(spec: PhantomSpec):
    e = spec.extent()
    r = 0.08 * e.min()
    bones = []
    for side in (0.15, 0.85):
        center = np.full(spec.ndim, 0.5) * e
        center[0] = 0.85 * e[0]
        center[1] = side * e[1]
        bones.append(Ellipsoid(tuple(center), tuple(np.full(spec.ndim, r))))
    return tuple(bones)


def _default_tubes(spec: PhantomSpec, center, radii):
    """Two capsules hugging the blob: one past its far side on axis 1, one above it on axis 0."""
    e = spec.extent()
    r = 0.045 * e.min()
    gap = r + 0.04 * e.min()
    c, rad = np.asarray(center), np.asarray(radii)
    side = c.copy()
    side[1] = c[1] + rad[1] + gap
    a, b = side.copy(), side.copy()
    a[0] -= 0.5 * rad[0]
    b[0] += 0.5 * rad[0]
    top = c.copy()
    top[0] = c[0] - rad[0] - gap
    p, q = top.copy(), top.copy()
    p[1] -= 0.5 * rad[1]
    q[1] += 0.3 * rad[1]
    return (Capsule(tuple(a), tuple(b), r), Capsule(tuple(p), tuple(q), r))


def structures(spec: PhantomSpec, state: str):
    """Return ``[(shape, intensity, texture_direction_seed_offset), ...]`` in paint order."""
    if state not in STATES:
        raise PhantomSpecError(f"unknown state {state!r}")
    center = spec.source_center if state == "source" else spec.target_center
    radii = spec.source_radii if state == "source" else spec.target_radii
    blob = Ellipsoid(tuple(center), tuple(radii))
    if spec.kind == "isolated-blob":
        return [(blob, spec.blob_intensity, 0)]
    tubes = spec.source_tubes if state == "source" else spec.target_tubes
    if tubes is None:
        tubes = _default_tubes(spec, center, radii)
    bones = spec.bones if spec.bones is not None else _default_bones(spec)
    out = [(t, spec.tube_intensity, 10 + i) for i, t in enumerate(tubes)]
    out.append((blob, spec.blob_intensity, 0))
    out.extend((b, spec.bone_intensity, 20 + i) for i, b in enumerate(bones))
    return out


def validate(spec: PhantomSpec) -> None:
    if spec.kind not in KINDS:
        raise PhantomSpecError(f"unknown phantom kind {spec.kind!r}; expected one of {KINDS}")
    d = spec.ndim
    if d not in (2, 3) or min(spec.dims) < 2:
        raise PhantomSpecError(f"dims must give a 2D or 3D grid, got {spec.dims}")
    for name in ("spacing", "source_center", "source_radii", "target_center", "target_radii"):
        if len(getattr(spec, name)) != d:
            raise PhantomSpecError(f"{name} must have {d} entries")
    if min(spec.spacing) <= 0:
        raise PhantomSpecError("spacing must be positive")
    if min(spec.source_radii) <= 0 or min(spec.target_radii) <= 0:
        raise PhantomSpecError("blob radii must be positive")
    if not 0 <= spec.texture_amplitude < 1:
        raise PhantomSpecError("texture_amplitude must lie in [0, 1)")
    intensities = [spec.blob_intensity]
    if spec.kind == "multi-organ":
        intensities += [spec.bone_intensity, spec.tube_intensity]
    for value in intensities:
        if value * (1 - spec.texture_amplitude) <= spec.background:
            raise PhantomSpecError("structure intensities must exceed the background")
    lo, hi = spec.margin, spec.extent() - spec.margin
    for state in STATES:
        for shape, _, _ in structures(spec, state):
            smin, smax = shape.bounds()
            if np.any(smin < lo - 1e-9) or np.any(smax > hi + 1e-9):
                raise PhantomSpecError(
                    f"{type(shape).__name__} in {state} state exceeds the image bounds minus margin"
                )


def generate_phantom(spec: PhantomSpec, state: str) -> ScalarImage:
    """Render the source or target image of ``spec``; deterministic in (spec, seed)."""
    validate(spec)
    geometry = ScalarImage(np.zeros(spec.dims, dtype=np.float32), spec.spacing, (0.0,) * spec.ndim)
    points = geometry.voxel_centers()
    values = np.full(len(points), spec.background, dtype=np.float64)
    for shape, intensity, offset in structures(spec, state):
        rng = np.random.default_rng([spec.seed, offset])
        direction = rng.normal(size=spec.ndim)
        direction /= np.linalg.norm(direction)
        inside = shape.mask(points)
        texture = spec.texture_amplitude * np.clip(shape.local(points[inside]) @ direction, -1, 1)
        values[inside] = intensity * (1.0 + texture)
    return geometry.with_voxels(values.reshape(spec.dims))


def with_kind(spec: PhantomSpec, kind: str) -> PhantomSpec:
    return replace(spec, kind=kind)
