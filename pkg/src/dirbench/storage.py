"""Archive directories: a manifest, the model template, and one genotype + objective record per elite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bspline import BSplineGrid, read_grid, write_grid
from .errors import ArchiveFormatError
from .mesh import DualMesh, read_mesh, write_mesh

FORMAT = "dirbench-archive 1"
APPROACHES = ("bspline-mo", "mesh-mo", "bspline-baseline")


def write_vector(path, values) -> None:
    Path(path).write_text("".join(repr(float(v)) + "\n" for v in np.asarray(values).ravel()))


def read_vector(path) -> np.ndarray:
    return np.array([float(line) for line in Path(path).read_text().split()])


def _model_kind(model) -> str:
    if isinstance(model, BSplineGrid):
        return "bspline"
    if isinstance(model, DualMesh):
        return "mesh"
    raise TypeError(f"unsupported model {type(model).__name__}")


def write_archive(directory, approach: str, members, model, manifest_extra=None) -> Path:
    """Write elites (sorted by objectives) and return the manifest path.

    ``members`` are archive solutions.  For the weight-tuning baseline the
    genotype is the weight pair and the registered coefficients come from
    ``payload``; they are stored as a separate transform file.
    """
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    out = Path(directory)
    (out / "elites").mkdir(parents=True, exist_ok=True)
    kind = _model_kind(model)
    model_file = "model.grid" if kind == "bspline" else "model.mesh"
    template = model.with_coefficients(np.zeros_like(model.coefficients)) if kind == "bspline" else model
    (write_grid if kind == "bspline" else write_mesh)(out / model_file, template)
    order = sorted(range(len(members)), key=lambda i: (tuple(members[i].objectives), i))
    elites = []
    for rank, i in enumerate(order):
        sol = members[i]
        stem = f"elites/{rank:04d}"
        write_vector(out / f"{stem}.genotype", sol.genotype)
        record = {
            "similarity": float(sol.objectives[0]),
            "magnitude": float(sol.objectives[1]),
            "feasible": bool(sol.feasible),
            "violation": float(sol.violation),
        }
        entry = {"id": rank, "genotype": f"{stem}.genotype", "objectives": f"{stem}.json"}
        if approach == "bspline-baseline":
            write_vector(out / f"{stem}.transform", sol.payload)
            entry["transform"] = f"{stem}.transform"
            entry["weights"] = [float(v) for v in sol.genotype]
            record["weights"] = entry["weights"]
        (out / f"{stem}.json").write_text(json.dumps(record, sort_keys=True) + "\n")
        elites.append(entry)
    manifest = {"format": FORMAT, "approach": approach, "model_kind": kind, "model": model_file,
                "elites": elites}
    manifest.update(manifest_extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_archive(directory):
    """Return ``(manifest, model template, transform parameter vectors, objectives (n, 2))``."""
    root = Path(directory)
    path = root / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no manifest.json in {root}")
    manifest = json.loads(path.read_text())
    missing = [k for k in ("approach", "model_kind", "model", "elites") if k not in manifest]
    if manifest.get("format") != FORMAT:
        raise ArchiveFormatError(f"{path}: unsupported archive format {manifest.get('format')!r}")
    if missing:
        raise ArchiveFormatError(f"{path}: manifest lacks {missing}")
    model = (read_grid if manifest["model_kind"] == "bspline" else read_mesh)(root / manifest["model"])
    params, objs = [], []
    for entry in manifest["elites"]:
        params.append(read_vector(root / entry.get("transform", entry["genotype"])))
        rec = json.loads((root / entry["objectives"]).read_text())
        objs.append([rec["similarity"], rec["magnitude"]])
    return manifest, model, params, np.array(objs, dtype=float).reshape(-1, 2)
