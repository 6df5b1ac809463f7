"""Scaling, multi-horizon targets, training windows and vehicle splits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .neighborhood import FULL_COLUMNS, FULL_LAYOUT, FeatureLayout
from .smoothing import SmoothedTrack

FRAMES_PER_SECOND = 10
WINDOW_LENGTH = 100
WINDOW_STRIDE = 10


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingSpec:
    distance_divisor: float = 10.0
    long_velocity_divisor: float = 10.0
    ttc_divisor: float = 10.0
    lateral_velocity_divisor: float = 1.0

    def __post_init__(self):
        for name in ("distance_divisor", "long_velocity_divisor", "ttc_divisor",
                     "lateral_velocity_divisor"):
            if not getattr(self, name) > 0:
                raise DatasetError(f"{name} must be positive")

    def divisor_for(self, column: str) -> float:
        kind = column.split("_", 1)[0]
        return {
            "x": self.distance_divisor,
            "y": self.distance_divisor,
            "dx": self.distance_divisor,
            "dy": self.distance_divisor,
            "vy": self.long_velocity_divisor,
            "dvy": self.long_velocity_divisor,
            "vx": self.lateral_velocity_divisor,
            "ttc": self.ttc_divisor,
            "type": 1.0,
        }[kind]

    def to_text(self) -> str:
        return ",".join(f"{k}:{getattr(self, k)!r}" for k in
                        ("distance_divisor", "long_velocity_divisor", "ttc_divisor",
                         "lateral_velocity_divisor"))

    @classmethod
    def from_text(cls, text: str) -> "ScalingSpec":
        kw = {}
        for item in text.split(","):
            k, v = item.split(":")
            kw[k.strip()] = float(v)
        return cls(**kw)


@dataclass(frozen=True)
class HorizonSpec:
    horizons_s: tuple[int, ...] = tuple(range(1, 11))

    def __post_init__(self):
        hs = tuple(int(h) for h in self.horizons_s)
        if not hs or any(h <= 0 for h in hs) or list(hs) != sorted(set(hs)):
            raise DatasetError(f"horizons must be ascending positive seconds, got {self.horizons_s}")
        object.__setattr__(self, "horizons_s", hs)

    @property
    def frame_offsets(self) -> tuple[int, ...]:
        return tuple(FRAMES_PER_SECOND * h for h in self.horizons_s)

    @property
    def output_size(self) -> int:
        return 2 * len(self.horizons_s)

    @property
    def output_columns(self) -> list[str]:
        cols = []
        for h in self.horizons_s:
            cols += [f"x_{h}s", f"vy_{h}s"]
        return cols


def feature_divisors(layout: FeatureLayout, spec: ScalingSpec = ScalingSpec()) -> np.ndarray:
    return np.array([spec.divisor_for(c) for c in layout.columns])


def target_divisors(horizons: HorizonSpec, spec: ScalingSpec = ScalingSpec()) -> np.ndarray:
    return np.tile([spec.distance_divisor, spec.long_velocity_divisor], len(horizons.horizons_s))


def scale_features(frame, layout: FeatureLayout = FeatureLayout(),
                   spec: ScalingSpec = ScalingSpec()) -> np.ndarray:
    """Divide each feature column by its divisor.

    ``frame`` is a :class:`FeatureFrame`, a raw vector, or a matrix with one
    raw vector per row, all in ``layout`` order.
    """
    if hasattr(frame, "vector"):
        frame = frame.vector(layout)
    values = np.asarray(frame, dtype=np.float64)
    if values.shape[-1] != layout.size:
        raise DatasetError(f"expected {layout.size} feature columns, got {values.shape[-1]}")
    return values / feature_divisors(layout, spec)


def unscale_features(values, layout: FeatureLayout = FeatureLayout(),
                     spec: ScalingSpec = ScalingSpec()) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * feature_divisors(layout, spec)


def select_layout(full: np.ndarray, layout: FeatureLayout) -> np.ndarray:
    """Pick the ``layout`` columns out of full-layout feature rows."""
    idx = [FULL_COLUMNS.index(c) for c in layout.columns]
    return np.asarray(full)[..., idx]


def compute_targets(track: SmoothedTrack, horizons: HorizonSpec = HorizonSpec(),
                    spec: ScalingSpec | None = ScalingSpec()) -> np.ndarray:
    """Per-frame future lateral position and longitudinal speed.

    Row ``t`` holds ``(x[t + 10k], vy[t + 10k])`` for each horizon ``k``,
    interleaved as ``x_1, vy_1, x_2, vy_2, ...`` and divided by the scaling
    divisors (pass ``spec=None`` for physical units).  Rows whose largest
    horizon runs past the end of the track are NaN.
    """
    n = len(track)
    out = np.full((n, horizons.output_size), np.nan)
    valid = n - horizons.frame_offsets[-1]
    if valid > 0:
        for j, off in enumerate(horizons.frame_offsets):
            out[:valid, 2 * j] = track.x[off:off + valid]
            out[:valid, 2 * j + 1] = track.vy[off:off + valid]
    if spec is not None:
        out = out / target_divisors(horizons, spec)
    return out


@dataclass(frozen=True)
class Window:
    vehicle_id: int
    start_frame: int
    inputs: np.ndarray
    targets: np.ndarray


def make_windows(features: np.ndarray, targets: np.ndarray, vehicle_id: int = 0,
                 frame_ids: Sequence[int] | None = None, length: int = WINDOW_LENGTH,
                 stride: int = WINDOW_STRIDE) -> list[Window]:
    """Cut frame-aligned features/targets into overlapping windows.

    Windows start every ``stride`` rows and are kept only when every row
    has a complete target.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(features) != len(targets):
        raise DatasetError("features and targets are not frame-aligned")
    if frame_ids is None:
        frame_ids = range(len(features))
    complete = ~np.isnan(targets).any(axis=1)
    windows = []
    for start in range(0, len(features) - length + 1, stride):
        if complete[start:start + length].all():
            windows.append(Window(vehicle_id, int(frame_ids[start]),
                                  features[start:start + length].copy(),
                                  targets[start:start + length].copy()))
    return windows


@dataclass(frozen=True)
class DatasetSplit:
    train_vehicle_ids: tuple[int, ...]
    test_vehicle_ids: tuple[int, ...]
    seed: int
    validation_vehicle_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if set(self.train_vehicle_ids) & set(self.test_vehicle_ids):
            raise DatasetError("train and test vehicles overlap")
        if not set(self.validation_vehicle_ids) <= set(self.train_vehicle_ids):
            raise DatasetError("validation vehicles must come from the training split")

    @property
    def fit_vehicle_ids(self) -> tuple[int, ...]:
        """Training vehicles minus the validation holdout."""
        held = set(self.validation_vehicle_ids)
        return tuple(v for v in self.train_vehicle_ids if v not in held)

    def role_of(self, vehicle_id: int) -> str:
        if vehicle_id in self.test_vehicle_ids:
            return "test"
        if vehicle_id in self.validation_vehicle_ids:
            return "validation"
        if vehicle_id in self.train_vehicle_ids:
            return "train"
        raise KeyError(vehicle_id)


def split_train_test(vehicle_ids: Iterable[int], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Random split by vehicle; ``floor(ratio * n)`` vehicles go to training."""
    ids = sorted(set(vehicle_ids))
    if not ids:
        raise DatasetError("cannot split an empty vehicle set")
    if not 0 < ratio <= 1:
        raise DatasetError("ratio must be in (0, 1]")
    n_train = int(math.floor(ratio * len(ids) + 1e-9))
    order = np.random.default_rng(seed).permutation(len(ids))
    train = tuple(sorted(ids[i] for i in order[:n_train]))
    test = tuple(sorted(ids[i] for i in order[n_train:]))
    return DatasetSplit(train, test, seed)


def with_validation(split: DatasetSplit, fraction: float = 0.1, seed: int = 0) -> DatasetSplit:
    """Hold out ``fraction`` of the training vehicles for model selection."""
    train = list(split.train_vehicle_ids)
    n_val = int(math.floor(fraction * len(train) + 1e-9))
    order = np.random.default_rng(seed).permutation(len(train))
    val = tuple(sorted(train[i] for i in order[:n_val]))
    return DatasetSplit(split.train_vehicle_ids, split.test_vehicle_ids, split.seed, val)


def make_vehicle_groups(train_ids: Iterable[int], group_size: int = 500,
                        seed: int = 0) -> list[list[int]]:
    """Shuffle the training vehicles (seeded) and chunk them into groups."""
    if group_size <= 0:
        raise DatasetError("group_size must be positive")
    ids = sorted(train_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    ids = [ids[i] for i in order]
    return [ids[i:i + group_size] for i in range(0, len(ids), group_size)]


def shuffle_windows(windows: Sequence, rng: np.random.Generator) -> list:
    return [windows[i] for i in rng.permutation(len(windows))]


def write_split(split: DatasetSplit, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vehicle_id", "role"])
        for vid in sorted(split.train_vehicle_ids + split.test_vehicle_ids):
            writer.writerow([vid, split.role_of(vid)])
        writer.writerow(["#seed", split.seed])


def read_split(path: str | Path) -> DatasetSplit:
    roles: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    seed = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row[0] == "#seed":
                seed = int(row[1])
            else:
                roles[row[1]].append(int(row[0]))
    return DatasetSplit(tuple(sorted(roles["train"] + roles["validation"])),
                        tuple(roles["test"]), seed, tuple(roles["validation"]))


# --- feature dump --------------------------------------------------------

@dataclass
class FeatureSegment:
    """Contiguous frames of one vehicle: full-layout raw features and physical targets."""

    vehicle_id: int
    frame_ids: np.ndarray
    features: np.ndarray
    targets: np.ndarray


def write_feature_dump(segments: Iterable[FeatureSegment], horizons: HorizonSpec,
                       path: str | Path) -> None:
    """One CSV row per (vehicle, frame): ids, raw features, physical targets.

    Feature columns follow the full layout (type fields and ``ff`` included);
    absent targets are left empty.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vehicle_id", "frame_id"] + FULL_COLUMNS + horizons.output_columns)
        for seg in sorted(segments, key=lambda s: (s.vehicle_id, int(s.frame_ids[0]))):
            for fid, feat, targ in zip(seg.frame_ids.tolist(), seg.features, seg.targets):
                writer.writerow([seg.vehicle_id, fid] + [repr(float(v)) for v in feat]
                                + ["" if math.isnan(v) else repr(float(v)) for v in targ])


def read_feature_dump(path: str | Path) -> tuple[dict[int, list[FeatureSegment]], HorizonSpec]:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    n_feat = len(FULL_COLUMNS)
    if header is None or header[:2 + n_feat] != ["vehicle_id", "frame_id"] + FULL_COLUMNS:
        raise DatasetError(f"{path}: not a feature dump")
    target_cols = header[2 + n_feat:]
    horizons = HorizonSpec(tuple(int(c[2:-1]) for c in target_cols[::2]))
    if target_cols != horizons.output_columns:
        raise DatasetError(f"{path}: malformed target columns")

    rows: dict[int, list[list[str]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}: line {lineno}: expected {len(header)} fields")
        rows.setdefault(int(row[0]), []).append(row)

    out: dict[int, list[FeatureSegment]] = {}
    for vid in sorted(rows):
        data = rows[vid]
        frames = np.array([int(r[1]) for r in data], dtype=np.int64)
        feats = np.array([[float(v) for v in r[2:2 + n_feat]] for r in data])
        targs = np.array([[float(v) if v else np.nan for v in r[2 + n_feat:]] for r in data])
        cuts = np.flatnonzero(np.diff(frames) != 1) + 1
        bounds = [0, *cuts.tolist(), len(frames)]
        out[vid] = [FeatureSegment(vid, frames[a:b], feats[a:b], targs[a:b])
                    for a, b in zip(bounds, bounds[1:])]
    return out, horizons


# --- window archive ------------------------------------------------------

ARCHIVE_MAGIC = "trajlstm-windows"
ARCHIVE_VERSION = 1


@dataclass
class WindowArchive:
    n_features: int
    horizons: HorizonSpec
    scaling: ScalingSpec
    seed: int
    layout: FeatureLayout
    windows: list[Window] = field(default_factory=list)
    window_length: int = WINDOW_LENGTH


def _layout_text(layout: FeatureLayout) -> str:
    return f"use_type:{int(layout.use_type)},use_ff:{int(layout.use_ff)}"


def write_window_archive(archive: WindowArchive, path: str | Path) -> None:
    """Write windows as a text header followed by little-endian float64 blocks.

    Payload, in order: an index block (count x 2: vehicle id, start frame),
    all inputs (count*length x N) and all targets (count*length x 2K), each
    row-major.
    """
    count, length = len(archive.windows), archive.window_length
    k2 = archive.horizons.output_size
    header = (
        f"{ARCHIVE_MAGIC}\n"
        f"version={ARCHIVE_VERSION}\n"
        f"n_features={archive.n_features}\n"
        f"horizons={','.join(map(str, archive.horizons.horizons_s))}\n"
        f"scaling={archive.scaling.to_text()}\n"
        f"seed={archive.seed}\n"
        f"feature_layout={_layout_text(archive.layout)}\n"
        f"window_length={length}\n"
        f"count={count}\n"
        "end\n"
    )
    index = np.array([[w.vehicle_id, w.start_frame] for w in archive.windows],
                     dtype="<f8").reshape(count, 2)
    inputs = np.zeros((count, length, archive.n_features), dtype="<f8")
    targets = np.zeros((count, length, k2), dtype="<f8")
    for i, w in enumerate(archive.windows):
        if w.inputs.shape != (length, archive.n_features) or w.targets.shape != (length, k2):
            raise DatasetError(f"window {i} has shape {w.inputs.shape}/{w.targets.shape}")
        inputs[i], targets[i] = w.inputs, w.targets
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for block in (index, inputs, targets):
            fh.write(np.ascontiguousarray(block).tobytes())


def _read_header(fh, magic: str) -> dict[str, str]:
    first = fh.readline().decode("ascii", "replace").strip()
    if first != magic:
        raise DatasetError(f"bad magic {first!r}, expected {magic!r}")
    meta = {}
    while True:
        line = fh.readline()
        if not line:
            raise DatasetError("header not terminated")
        text = line.decode("ascii").strip()
        if text == "end":
            return meta
        key, value = text.split("=", 1)
        meta[key] = value


def read_archive_header(path: str | Path) -> dict[str, str]:
    with open(path, "rb") as fh:
        return _read_header(fh, ARCHIVE_MAGIC)


def read_window_archive(path: str | Path) -> WindowArchive:
    with open(path, "rb") as fh:
        meta = _read_header(fh, ARCHIVE_MAGIC)
        payload = fh.read()
    if int(meta["version"]) != ARCHIVE_VERSION:
        raise DatasetError(f"unsupported archive version {meta['version']}")
    n = int(meta["n_features"])
    horizons = HorizonSpec(tuple(int(h) for h in meta["horizons"].split(",")))
    layout_kw = dict(item.split(":") for item in meta["feature_layout"].split(","))
    layout = FeatureLayout(use_type=layout_kw["use_type"] == "1", use_ff=layout_kw["use_ff"] == "1")
    count, length = int(meta["count"]), int(meta["window_length"])
    k2 = horizons.output_size
    sizes = [count * 2, count * length * n, count * length * k2]
    if len(payload) != 8 * sum(sizes):
        raise DatasetError(f"archive payload is {len(payload)} bytes, expected {8 * sum(sizes)}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    index = flat[:sizes[0]].reshape(count, 2)
    inputs = flat[sizes[0]:sizes[0] + sizes[1]].reshape(count, length, n)
    targets = flat[sizes[0] + sizes[1]:].reshape(count, length, k2)
    windows = [Window(int(index[i, 0]), int(index[i, 1]), inputs[i], targets[i])
               for i in range(count)]
    return WindowArchive(n, horizons, ScalingSpec.from_text(meta["scaling"]), int(meta["seed"]),
                         layout, windows, length)


def stack_windows(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    return (np.stack([w.inputs for w in windows]), np.stack([w.targets for w in windows]))
