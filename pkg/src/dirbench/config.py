"""Run configuration: INI files with ``[run]``, ``[problem]``, ``[phantom]``, ``[bspline]``, ``[mesh]`` and ``[baseline]`` sections."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .imaging.phantom import KINDS, PhantomSpec, blob_spec
from .storage import APPROACHES

DEFAULT_POPULATION = {"bspline-mo": 200, "mesh-mo": 700, "bspline-baseline": 100}
DESK_POPULATION = {"bspline-mo": 50, "mesh-mo": 100, "bspline-baseline": 24}

PRESETS = {
    "full": dict(generations=200, repetitions=10, control_points=7, mesh_points=170,
                 inner_samples=5000, inner_iterations=2000),
    "desk": dict(generations=100, repetitions=3, control_points=7, mesh_points=40,
                 inner_samples=256, inner_iterations=200, dims=(64, 64)),
}

_TUPLE_FIELDS = {"dims", "spacing", "source_center", "source_radii", "target_center", "target_radii"}


@dataclass
class RunConfig:
    """Everything needed to reproduce the repetitions of one approach."""

    approach: str = "bspline-mo"
    preset: str = "full"
    source: str | None = None
    target: str | None = None
    phantom: PhantomSpec | None = None
    control_points: int = 7
    mesh_points: int = 170
    population: int | None = None
    generations: int = 200
    repetitions: int = 10
    seed: int = 0
    output: str = "runs"
    samples: int | None = None
    clusters: int = 10
    capacity: int = 1000
    inner_samples: int = 5000
    inner_iterations: int = 2000
    inner_gain: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.approach not in APPROACHES:
            raise ConfigError(f"unknown approach {self.approach!r}; expected one of {APPROACHES}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.population is not None and self.population < 2:
            raise ConfigError("population must be >= 2")
        if (self.source is None) != (self.target is None):
            raise ConfigError("give both source and target images, or neither")
        if self.control_points < 4:
            raise ConfigError("control_points must be >= 4")
        if self.samples is not None and self.samples < 1:
            raise ConfigError("samples must be >= 1")
        for name in ("clusters", "capacity", "inner_samples", "mesh_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.inner_iterations < 0:
            raise ConfigError("inner_iterations must be >= 0")
        if not self.inner_gain > 0:
            raise ConfigError("inner_gain must be > 0")

    @property
    def population_size(self) -> int:
        if self.population is not None:
            return self.population
        table = DESK_POPULATION if self.preset == "desk" else DEFAULT_POPULATION
        return table[self.approach]

    def phantom_spec(self) -> PhantomSpec:
        if self.phantom is not None:
            return self.phantom
        return blob_spec(PRESETS.get(self.preset, {}).get("dims", (64, 64)))

    def seed_of(self, repetition: int) -> int:
        return self.seed + repetition

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, PhantomSpec):
                value = {k: _plain(v) for k, v in dataclasses.asdict(value).items() if v is not None}
            out[f.name] = _plain(value)
        out["population"] = self.population_size
        return out


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _tuple(text: str, cast):
    parts = text.replace(",", " ").split()
    if not parts:
        raise ConfigError(f"empty list value {text!r}")
    return tuple(cast(p) for p in parts)


def parse_phantom(section, preset: str = "full") -> PhantomSpec:
    """Build a PhantomSpec from key/value pairs; geometry defaults scale with ``dims``."""
    values = dict(section)
    dims = _tuple(values.pop("dims"), int) if "dims" in values else PRESETS.get(preset, {}).get("dims", (64, 64))
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(PhantomSpec)}
    for key, text in values.items():
        if key not in names or key in ("bones", "source_tubes", "target_tubes"):
            raise ConfigError(f"unknown phantom key {key!r}")
        try:
            if key in _TUPLE_FIELDS:
                kwargs[key] = _tuple(text, float)
            elif key == "kind":
                if text not in KINDS:
                    raise ConfigError(f"unknown phantom kind {text!r}")
                kwargs[key] = text
            elif key == "seed":
                kwargs[key] = int(text)
            else:
                kwargs[key] = float(text)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for phantom key {key!r}: {text!r}") from exc
    return blob_spec(dims, **kwargs)


_RUN_KEYS = {
    "run": {"approach": str, "preset": str, "population": int, "generations": int, "repetitions": int,
            "seed": int, "output": str, "samples": int, "clusters": int, "capacity": int},
    "problem": {"source": str, "target": str},
    "bspline": {"control_points": int},
    "mesh": {"points": int},
    "baseline": {"inner_samples": int, "inner_iterations": int, "inner_gain": float},
}


def _read_parser(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        parser.read_string(p.read_text(), source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parser


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read an INI file (optional) and apply ``overrides`` (non-None values win).

    Preset values fill fields that neither the file nor the overrides set.
    """
    values: dict = {}
    phantom_section = None
    base_dir = None
    if path is not None:
        parser = _read_parser(path)
        base_dir = Path(path).resolve().parent
        for section in parser.sections():
            if section == "phantom":
                phantom_section = dict(parser[section])
                continue
            if section not in _RUN_KEYS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, text in parser[section].items():
                cast = _RUN_KEYS[section].get(key)
                if cast is None:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                name = "mesh_points" if (section, key) == ("mesh", "points") else key
                try:
                    values[name] = cast(text)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {section}.{key}: {text!r}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    preset = values.get("preset", "full")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    for key, value in PRESETS[preset].items():
        if key != "dims":
            values.setdefault(key, value)
    if base_dir is not None:
        for key in ("source", "target"):
            if key in values and not Path(values[key]).is_absolute():
                values[key] = str(base_dir / values[key])
    if phantom_section is not None:
        values["phantom"] = parse_phantom(phantom_section, preset)
    return RunConfig(**values)


def load_phantom_specs(path) -> list[PhantomSpec]:
    """Phantom file: a ``[phantom]`` section; ``kind = both`` (or a list) yields one spec per kind."""
    parser = _read_parser(path)
    if "phantom" not in parser:
        raise ConfigError(f"{path}: missing [phantom] section")
    section = dict(parser["phantom"])
    kinds = section.pop("kind", "isolated-blob")
    kinds = list(KINDS) if kinds.strip() == "both" else _tuple(kinds, str)
    return [parse_phantom({**section, "kind": k}) for k in kinds]
