"""Reading and writing images and DVFs.

File layout: ``key: value`` header lines (NDims, DimSize, ElementSpacing,
Origin, ElementType, and Channels for DVFs), a ``DATA`` line, then the raw
little-endian row-major float32 payload.  DimSize is listed in array-axis
order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DimensionMismatchError, MalformedHeaderError, TruncatedPayloadError
from .image import DeformationField, ScalarImage

_REQUIRED = ("NDims", "DimSize", "ElementSpacing", "Origin", "ElementType")


def _format_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _write(path, dims, spacing, origin, payload: np.ndarray, channels: int) -> None:
    lines = [
        f"NDims: {len(dims)}",
        "DimSize: " + " ".join(str(int(n)) for n in dims),
        "ElementSpacing: " + _format_floats(spacing),
        "Origin: " + _format_floats(origin),
        "ElementType: float32",
    ]
    if channels > 1:
        lines.append(f"Channels: {channels}")
    header = "\n".join(lines) + "\nDATA\n"
    data = np.ascontiguousarray(payload, dtype="<f4").tobytes(order="C")
    Path(path).write_bytes(header.encode("ascii") + data)


def _read(path):
    raw = Path(path).read_bytes()
    marker = raw.find(b"DATA\n")
    if marker < 0:
        raise MalformedHeaderError(f"{path}: missing DATA line")
    try:
        text = raw[:marker].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeaderError(f"{path}: header is not ASCII") from exc
    header = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise MalformedHeaderError(f"{path}: bad header line {line!r}")
        header[key.strip()] = value.strip()
    missing = [k for k in _REQUIRED if k not in header]
    if missing:
        raise MalformedHeaderError(f"{path}: missing header keys {missing}")
    if header["ElementType"] != "float32":
        raise MalformedHeaderError(f"{path}: unknown element type {header['ElementType']!r}")
    try:
        ndim = int(header["NDims"])
        dims = tuple(int(v) for v in header["DimSize"].split())
        spacing = tuple(float(v) for v in header["ElementSpacing"].split())
        origin = tuple(float(v) for v in header["Origin"].split())
        channels = int(header.get("Channels", "1"))
    except ValueError as exc:
        raise MalformedHeaderError(f"{path}: unparsable header value ({exc})") from exc
    if not (len(dims) == len(spacing) == len(origin) == ndim):
        raise DimensionMismatchError(
            f"{path}: NDims={ndim} but DimSize/ElementSpacing/Origin have "
            f"{len(dims)}/{len(spacing)}/{len(origin)} entries"
        )
    if any(n <= 0 for n in dims) or channels <= 0:
        raise MalformedHeaderError(f"{path}: non-positive sizes in header")
    payload = raw[marker + len(b"DATA\n"):]
    expected = int(np.prod(dims)) * channels * 4
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} bytes, header needs {expected}")
    if len(payload) > expected:
        raise DimensionMismatchError(f"{path}: payload has {len(payload)} bytes, header declares {expected}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return dims, spacing, origin, channels, values


def write_image(path, image: ScalarImage) -> None:
    _write(path, image.dims, image.spacing, image.origin, image.voxels, 1)


def read_image(path) -> ScalarImage:
    dims, spacing, origin, channels, values = _read(path)
    if channels != 1:
        raise DimensionMismatchError(f"{path}: expected a scalar image, found {channels} channels")
    return ScalarImage(values.reshape(dims), spacing, origin)


def write_dvf(path, dvf: DeformationField) -> None:
    _write(path, dvf.dims, dvf.spacing, dvf.origin, dvf.vectors, dvf.ndim)


def read_dvf(path) -> DeformationField:
    dims, spacing, origin, channels, values = _read(path)
    if channels != len(dims):
        raise DimensionMismatchError(f"{path}: DVF needs {len(dims)} channels, found {channels}")
    return DeformationField(values.reshape(dims + (channels,)), spacing, origin)
