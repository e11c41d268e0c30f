"""Command-line entry point: ``dirbench phantom|register|analyze|reevaluate|hv``."""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ArchiveFormatError,
    ConfigError,
    DirbenchError,
    DomainError,
    EvaluationError,
    ImageFormatError,
    InnerRunError,
    LocationError,
    MeshInitError,
    PhantomSpecError,
)

log = logging.getLogger("dirbench")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_EVAL = 0, 2, 3, 4
WORKERS_ENV = "DIRBENCH_WORKERS"


def worker_count(deterministic: bool = False) -> int:
    if deterministic:
        return 1
    text = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(text)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {text!r}") from exc
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


# ---------------------------------------------------------------- phantom

def cmd_phantom(spec_path, out_dir) -> list[Path]:
    """Write ``<kind>_source.img`` and ``<kind>_target.img`` for every kind in the spec file."""
    from .config import load_phantom_specs
    from .imaging import generate_phantom, write_image

    specs = load_phantom_specs(spec_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in specs:
        for state in ("source", "target"):
            path = out / f"{spec.kind}_{state}.img"
            write_image(path, generate_phantom(spec, state))
            written.append(path)
    return written


# ---------------------------------------------------------------- register

def _problem_images(cfg, run_dir: Path):
    """Load the configured images, or render the phantom pair into ``run_dir/problem``."""
    from .imaging import generate_phantom, read_image, write_image

    if cfg.source is not None:
        return read_image(cfg.source), read_image(cfg.target), Path(cfg.source), Path(cfg.target)
    spec = cfg.phantom_spec()
    pdir = run_dir / "problem"
    pdir.mkdir(parents=True, exist_ok=True)
    src, tgt = generate_phantom(spec, "source"), generate_phantom(spec, "target")
    write_image(pdir / "source.img", src)
    write_image(pdir / "target.img", tgt)
    return src, tgt, pdir / "source.img", pdir / "target.img"


def _problem_record(cfg, source_path, target_path) -> dict:
    record = {"source": str(source_path), "target": str(target_path)}
    if cfg.source is None:
        record["phantom"] = cfg.to_dict()["phantom"] or _spec_dict(cfg.phantom_spec())
    return record


def _spec_dict(spec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(spec).items() if v is not None}


def run_repetition(cfg, repetition: int, source_path, target_path, out_dir) -> Path:
    """Run one repetition and write its archive directory (with ``log.jsonl``)."""
    from .baseline import InnerRunConfig, outer_optimize
    from .bspline import BSplineEvaluator, BSplineGrid
    from .gomea import run
    from .imaging import read_image
    from .mesh import MeshEvaluator, build_mesh
    from .objectives import RegistrationProblem
    from .storage import write_archive

    seed = cfg.seed_of(repetition)
    source, target = read_image(source_path), read_image(target_path)
    problem = RegistrationProblem.from_images(source, target, cfg.samples, seed, name=Path(target_path).stem)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pop = cfg.population_size
    clusters = min(cfg.clusters, pop)
    with open(out / "log.jsonl", "w") as stream:
        if cfg.approach == "bspline-mo":
            grid = BSplineGrid.for_image(target, cfg.control_points)
            ev = BSplineEvaluator(problem, grid)
            result = run(ev, pop, cfg.generations, seed, clusters=clusters, capacity=cfg.capacity,
                         log_stream=stream)
            model = ev.grid
        elif cfg.approach == "mesh-mo":
            template = build_mesh(target, cfg.mesh_points)
            ev = MeshEvaluator(problem, template)
            result = run(ev, pop, cfg.generations, seed, clusters=clusters, capacity=cfg.capacity,
                         log_stream=stream)
            model = template
        else:
            inner = InnerRunConfig(cfg.inner_samples, cfg.inner_iterations, a=cfg.inner_gain)
            result = outer_optimize(problem, pop, cfg.generations, seed, inner, cfg.control_points, clusters,
                                    cfg.capacity, log_stream=stream)
            model = result.evaluator.grid
    last = result.history[-1]
    extra = {
        "repetition": repetition,
        "seed": seed,
        "config": cfg.to_dict(),
        "problem": _problem_record(cfg, source_path, target_path),
        "fos_size": result.fos_size,
        "hypervolume": last["hypervolume"],
        "hv_reference": [float(v) for v in result.reference],
        "version": __version__,
    }
    write_archive(out, cfg.approach, result.archive.members, model, extra)
    return out


def cmd_register(cfg, workers: int = 1) -> list[Path]:
    """Run every repetition (seed = base seed + repetition index); returns the archive directories."""
    run_dir = Path(cfg.output)
    base = run_dir / cfg.approach
    base.mkdir(parents=True, exist_ok=True)
    _, _, src_path, tgt_path = _problem_images(cfg, run_dir)
    (base / "run.json").write_text(json.dumps(
        {"config": cfg.to_dict(), "problem": _problem_record(cfg, src_path, tgt_path),
         "repetitions": [f"rep_{r:02d}" for r in range(cfg.repetitions)], "version": __version__},
        indent=2, sort_keys=True) + "\n")
    dirs = [base / f"rep_{r:02d}" for r in range(cfg.repetitions)]
    if workers <= 1 or cfg.repetitions == 1:
        for r, d in enumerate(dirs):
            log.info("%s repetition %d (seed %d)", cfg.approach, r, cfg.seed_of(r))
            run_repetition(cfg, r, src_path, tgt_path, d)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, cfg.repetitions)) as pool:
            futures = [pool.submit(run_repetition, cfg, r, src_path, tgt_path, d) for r, d in enumerate(dirs)]
            for f in futures:
                f.result()
    return dirs


# ---------------------------------------------------------------- analyze

def find_archives(paths) -> list[Path]:
    """Archive directories named directly or found below the given paths, in sorted order."""
    found = []
    for p in map(Path, paths):
        if (p / "manifest.json").is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(m.parent for m in p.rglob("manifest.json")))
        else:
            raise FileNotFoundError(f"no archive at {p}")
    if not found:
        raise FileNotFoundError(f"no archives found under {[str(p) for p in paths]}")
    return found


def load_sets(paths):
    from .analysis import ApproximationSet

    sets = [ApproximationSet.from_archive(d) for d in find_archives(paths)]
    sets.sort(key=lambda s: (s.approach, s.repetition))
    return sets


def _problem_for(sets, source=None, target=None):
    from .imaging import read_image
    from .objectives import RegistrationProblem

    if source is None or target is None:
        manifest = json.loads((Path(sets[0].extra["path"]) / "manifest.json").read_text())
        prob = manifest.get("problem")
        if not prob:
            raise ConfigError("archive manifest names no problem images; pass --source and --target")
        source, target = source or prob["source"], target or prob["target"]
    src, tgt = read_image(source), read_image(target)
    return RegistrationProblem.from_images(src, tgt, 1, 0, name=Path(target).stem)


def _default_probe(sets):
    """Disk of twice the target blob radius around the target blob, if the archives came from a phantom."""
    manifest = json.loads((Path(sets[0].extra["path"]) / "manifest.json").read_text())
    phantom = manifest.get("problem", {}).get("phantom")
    if not phantom:
        return None
    return tuple(phantom["target_center"]), 2.0 * float(np.mean(phantom["target_radii"]))


def cmd_analyze(archives, out_dir, source=None, target=None, samples=None, probe=None) -> dict:
    from .analysis import analyze, common_samples

    sets = load_sets(archives)
    problem = _problem_for(sets, source, target)
    if probe is None:
        probe = _default_probe(sets)
    return analyze(sets, problem, out_dir, probe=probe, samples=common_samples(problem, samples))


def cmd_reevaluate(archives, out_csv, source=None, target=None, samples=None) -> Path:
    from .analysis import common_samples, reevaluate_set, write_fronts_csv

    sets = load_sets(archives)
    problem = _problem_for(sets, source, target)
    pts = common_samples(problem, samples)
    for s in sets:
        reevaluate_set(s, problem, pts)
    out = Path(out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_fronts_csv(sets, out)
    return out


def cmd_hv(inputs, reference=None) -> list[tuple]:
    """Hypervolume per (approach, repetition) from a fronts CSV or from archives' original objectives."""
    from .analysis import front_hypervolume, hypervolumes_from_csv, read_fronts_csv, reference_point

    first = Path(inputs[0])
    if first.is_file() and first.suffix == ".csv":
        if reference is None:
            groups = {}
            for row in read_fronts_csv(first):
                if row["sim_reeval"] and row["dominated_flag"] != "invalid":
                    groups.setdefault((row["approach"], row["repetition"]), []).append(
                        [float(row["sim_reeval"]), float(row["mag_reeval"])])
            reference = reference_point([np.array(v) for v in groups.values()])
        table = hypervolumes_from_csv(first, reference)
        return [(a, r, hv) for (a, r), hv in table.items()], np.asarray(reference, dtype=float)
    sets = load_sets(inputs)
    if reference is None:
        reference = reference_point([s.front() for s in sets])
    ref = np.asarray(reference, dtype=float)
    return [(s.approach, s.repetition, front_hypervolume(s.front(), ref)) for s in sets], ref


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dirbench", description="Multi-objective deformable registration benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render phantom source/target images")
    p.add_argument("spec", help="INI file with a [phantom] section")
    p.add_argument("out", help="output directory")

    r = sub.add_parser("register", help="run repetitions of one approach")
    r.add_argument("--config", help="INI run configuration")
    r.add_argument("--approach", choices=("bspline-mo", "mesh-mo", "bspline-baseline"))
    r.add_argument("--preset", choices=("full", "desk"))
    r.add_argument("--source")
    r.add_argument("--target")
    r.add_argument("--control-points", type=int, dest="control_points")
    r.add_argument("--mesh-points", type=int, dest="mesh_points")
    r.add_argument("--population", type=int)
    r.add_argument("--generations", type=int)
    r.add_argument("--repetitions", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--output", "-o")
    r.add_argument("--samples", type=int, help="sample-count override (default: voxel count)")
    r.add_argument("--clusters", type=int)
    r.add_argument("--capacity", type=int)
    r.add_argument("--inner-samples", type=int, dest="inner_samples")
    r.add_argument("--inner-iterations", type=int, dest="inner_iterations")
    r.add_argument("--inner-gain", type=float, dest="inner_gain", help="SGD step gain a in a / (t + A) ** alpha")
    r.add_argument("--deterministic", action="store_true", help=f"single worker regardless of {WORKERS_ENV}")

    for name, helptext in (("analyze", "re-evaluate archives and write the report bundle"),
                           ("reevaluate", "re-evaluate archives into a fronts CSV")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("archives", nargs="+", help="archive directories or directories containing them")
        a.add_argument("--out", "-o", required=True, help="output directory" if name == "analyze" else "CSV path")
        a.add_argument("--source")
        a.add_argument("--target")
        a.add_argument("--samples", type=int, help="common sample count (default: voxel count)")
        a.add_argument("--deterministic", action="store_true")
        if name == "analyze":
            a.add_argument("--probe-center", type=float, nargs="+", dest="probe_center")
            a.add_argument("--probe-radius", type=float, dest="probe_radius")

    h = sub.add_parser("hv", help="hypervolume per approach and repetition")
    h.add_argument("inputs", nargs="+", help="a fronts CSV, or archive directories")
    h.add_argument("--reference", type=float, nargs=2)
    return parser


def _register_overrides(args) -> dict:
    keys = ("approach", "preset", "source", "target", "control_points", "mesh_points", "population", "generations",
            "repetitions", "seed", "output", "samples", "clusters", "capacity", "inner_samples", "inner_iterations",
            "inner_gain")
    return {k: getattr(args, k) for k in keys}


def dispatch(args) -> int:
    from .config import load_config

    if args.command == "phantom":
        for path in cmd_phantom(args.spec, args.out):
            print(path)
    elif args.command == "register":
        cfg = load_config(args.config, _register_overrides(args))
        for path in cmd_register(cfg, worker_count(args.deterministic)):
            print(path)
    elif args.command == "analyze":
        probe = None
        if args.probe_center is not None or args.probe_radius is not None:
            if args.probe_center is None or args.probe_radius is None:
                raise ConfigError("--probe-center and --probe-radius go together")
            probe = (tuple(args.probe_center), args.probe_radius)
        summary = cmd_analyze(args.archives, args.out, args.source, args.target, args.samples, probe)
        for approach, idx in summary["medians"].items():
            print(f"{approach}: median hypervolume {summary['hypervolumes'][idx]!r}")
    elif args.command == "reevaluate":
        print(cmd_reevaluate(args.archives, args.out, args.source, args.target, args.samples))
    elif args.command == "hv":
        rows, ref = cmd_hv(args.inputs, args.reference)
        print(f"# reference {float(ref[0])!r} {float(ref[1])!r}")
        print("approach,repetition,hypervolume")
        for approach, rep, hv in rows:
            print(f"{approach},{rep},{hv!r}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except (ConfigError, PhantomSpecError) as exc:
        print(f"dirbench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ImageFormatError, ArchiveFormatError, json.JSONDecodeError) as exc:
        print(f"dirbench: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EvaluationError, InnerRunError, MeshInitError, LocationError, DomainError) as exc:
        print(f"dirbench: evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except DirbenchError as exc:
        print(f"dirbench: error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
