"""Run configuration: one INI file plus command-line overrides.

Sections and keys (all optional; defaults shown)::

    [paths]
    root = .                 # base for relative paths; TRAJLSTM_DATA_ROOT overrides it
    raw = raw/trajectories.txt
    column_map =             # optional ingest column map (key = value file)
    tracks = tracks.csv
    features = features.csv
    windows = windows.bin
    split = split.csv
    checkpoints = checkpoints
    reports = reports

    [synth]
    n_vehicles = 100
    n_lane_changes = 20
    seed = 0

    [filter]
    window_length = 11
    polynomial_order = 1
    drop_edges = no

    [scaling]
    distance_divisor = 10
    long_velocity_divisor = 10
    ttc_divisor = 10
    lateral_velocity_divisor = 1

    [horizons]
    seconds = 1,2,3,4,5,6,7,8,9,10

    [model]
    variant = reference
    lstm_size = 256
    dense_sizes = 256,128
    third_dense = 64

    [train]
    name =                   # run name; defaults to the variant name
    group_size = 500
    epochs_per_group = 5
    full_passes = 20
    minibatch_size = 32
    learning_rate = 0.001
    seed = 0

    [split]
    ratio = 0.8
    validation = 0.1
    seed = 0

Overrides use ``section.key=value`` and win over the file.  The data root
is resolved as: explicit override, then ``TRAJLSTM_DATA_ROOT``, then
``[paths] root`` relative to the config file's directory.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

from .dataset import HorizonSpec, ScalingSpec
from .neural import ModelConfig, variant_config
from .smoothing import FilterSpec
from .synthetic import SyntheticSpec
from .training import TrainSchedule

ENV_DATA_ROOT = "TRAJLSTM_DATA_ROOT"

DEFAULTS = {
    "paths": {
        "root": ".", "raw": "raw/trajectories.txt", "column_map": "", "tracks": "tracks.csv",
        "features": "features.csv", "windows": "windows.bin", "split": "split.csv",
        "checkpoints": "checkpoints", "reports": "reports",
    },
    "synth": {"n_vehicles": "100", "n_lane_changes": "20", "seed": "0"},
    "filter": {"window_length": "11", "polynomial_order": "1", "drop_edges": "no"},
    "scaling": {"distance_divisor": "10", "long_velocity_divisor": "10", "ttc_divisor": "10",
                "lateral_velocity_divisor": "1"},
    "horizons": {"seconds": "1,2,3,4,5,6,7,8,9,10"},
    "model": {"variant": "reference", "lstm_size": "256", "dense_sizes": "256,128",
              "third_dense": "64"},
    "train": {"name": "", "group_size": "500", "epochs_per_group": "5", "full_passes": "20",
              "minibatch_size": "32", "learning_rate": "0.001", "seed": "0"},
    "split": {"ratio": "0.8", "validation": "0.1", "seed": "0"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    root: Path
    raw: Path
    column_map: Path | None
    tracks: Path
    features: Path
    windows: Path
    split: Path
    checkpoints: Path
    reports: Path


@dataclass(frozen=True)
class RunConfig:
    paths: Paths
    synth: SyntheticSpec
    filter: FilterSpec
    scaling: ScalingSpec
    horizons: HorizonSpec
    variant: str
    model: ModelConfig
    schedule: TrainSchedule
    run_name: str
    split_ratio: float
    validation_fraction: float
    split_seed: int


def _parse_overrides(items: Iterable[str]) -> list[tuple[str, str, str]]:
    out = []
    for item in items:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        out.append((section, option, value.strip()))
    return out


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = (),
                data_root: str | Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_dict(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.resolve().parent
    for section, option, value in _parse_overrides(overrides):
        if section not in DEFAULTS or option not in DEFAULTS[section]:
            raise ConfigError(f"unknown setting {section}.{option}")
        parser.set(section, option, value)
    for section in parser.sections():
        unknown = set(parser[section]) - set(DEFAULTS.get(section, {}))
        if section not in DEFAULTS or unknown:
            raise ConfigError(f"unknown setting(s) in [{section}]: {', '.join(sorted(unknown)) or section}")

    try:
        return _build(parser, base, data_root)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _build(parser: configparser.ConfigParser, base: Path, data_root) -> RunConfig:
    p = parser["paths"]
    if data_root is not None:
        root = Path(data_root)
    elif os.environ.get(ENV_DATA_ROOT):
        root = Path(os.environ[ENV_DATA_ROOT])
    else:
        root = base / p["root"]

    def resolve(key):
        return root / p[key]

    paths = Paths(root, resolve("raw"), resolve("column_map") if p["column_map"] else None,
                  *(resolve(k) for k in ("tracks", "features", "windows", "split", "checkpoints",
                                         "reports")))
    s = parser["synth"]
    synth = SyntheticSpec(n_vehicles=s.getint("n_vehicles"), n_lane_changes=s.getint("n_lane_changes"),
                          seed=s.getint("seed"))
    f = parser["filter"]
    filt = FilterSpec(window_length=f.getint("window_length"),
                      polynomial_order=f.getint("polynomial_order"), drop_edges=f.getboolean("drop_edges"))
    scaling = ScalingSpec(**{k: parser["scaling"].getfloat(k) for k in DEFAULTS["scaling"]})
    horizons = HorizonSpec(_ints(parser["horizons"]["seconds"]))

    m = parser["model"]
    dense = _ints(m["dense_sizes"])
    if len(dense) != 2:
        raise ConfigError("model.dense_sizes needs two sizes")
    variant = m["variant"]
    model = variant_config(variant, output_size=horizons.output_size, lstm_size=m.getint("lstm_size"),
                           dense_sizes=dense, third_dense=m.getint("third_dense"))
    t = parser["train"]
    schedule = TrainSchedule(group_size=t.getint("group_size"), epochs_per_group=t.getint("epochs_per_group"),
                             full_passes=t.getint("full_passes"), minibatch_size=t.getint("minibatch_size"),
                             learning_rate=t.getfloat("learning_rate"), seed=t.getint("seed"))
    sp = parser["split"]
    return RunConfig(paths, synth, filt, scaling, horizons, variant, model, schedule,
                     t["name"] or variant, sp.getfloat("ratio"), sp.getfloat("validation"),
                     sp.getint("seed"))


def describe(config: RunConfig) -> str:
    """Human-readable dump, one ``key = value`` per line."""
    lines = []
    for f in fields(config):
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    return "\n".join(lines)
