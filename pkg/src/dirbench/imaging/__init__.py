from .image import (
    DeformationField,
    IdentityTransform,
    ScalarImage,
    TranslationTransform,
    interpolate,
    interpolate_many,
    rasterize_dvf,
)
from .io import read_dvf, read_image, write_dvf, write_image
from .phantom import PhantomSpec, blob_spec, generate_phantom

__all__ = [
    "DeformationField",
    "IdentityTransform",
    "PhantomSpec",
    "ScalarImage",
    "TranslationTransform",
    "blob_spec",
    "generate_phantom",
    "interpolate",
    "interpolate_many",
    "rasterize_dvf",
    "read_dvf",
    "read_image",
    "write_dvf",
    "write_image",
]
