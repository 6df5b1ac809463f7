"""NGSIM-format trajectory ingestion.

Raw files are delimiter-separated text (comma or whitespace) with local
coordinates in feet.  Everything returned from here is SI.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

FEET_TO_METERS = 0.3048
FRAME_PERIOD = 0.1
MIN_SEGMENT_FRAMES = 120


class IngestError(ValueError):
    """Raised for malformed input rows or inconsistent records."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VehicleClass(enum.Enum):
    MOTORCYCLE = "motorcycle"
    CAR = "car"
    TRUCK = "truck"

    def encode(self) -> int:
        return _CLASS_ENCODING[self]

    @classmethod
    def decode(cls, value: int) -> "VehicleClass":
        for k, v in _CLASS_ENCODING.items():
            if v == value:
                return k
        raise ValueError(f"no vehicle class encodes to {value}")


_CLASS_ENCODING = {
    VehicleClass.MOTORCYCLE: -1,
    VehicleClass.CAR: 0,
    VehicleClass.TRUCK: 1,
}


@dataclass(frozen=True)
class TrajectoryRecord:
    vehicle_id: int
    frame_id: int
    local_x: float
    local_y: float
    lane_id: int
    vehicle_class: VehicleClass
    preceding_id: int | None = None
    following_id: int | None = None

    def __post_init__(self):
        if self.vehicle_id <= 0 or self.frame_id <= 0 or self.lane_id <= 0:
            raise IngestError(
                f"ids must be positive (vehicle {self.vehicle_id}, "
                f"frame {self.frame_id}, lane {self.lane_id})"
            )
        if self.local_x < 0 or self.local_y < 0:
            raise IngestError(
                f"negative local position ({self.local_x}, {self.local_y}) "
                f"for vehicle {self.vehicle_id}"
            )
        if self.preceding_id == self.vehicle_id or self.following_id == self.vehicle_id:
            raise IngestError(f"vehicle {self.vehicle_id} references itself")


@dataclass(frozen=True)
class VehicleTrack:
    vehicle_id: int
    records: tuple[TrajectoryRecord, ...]
    frame_period: float = FRAME_PERIOD

    def __post_init__(self):
        frames = [r.frame_id for r in self.records]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise IngestError(f"track {self.vehicle_id}: frame ids not strictly increasing")
        if any(r.vehicle_id != self.vehicle_id for r in self.records):
            raise IngestError(f"track {self.vehicle_id}: mixed vehicle ids")
        if len({r.vehicle_class for r in self.records}) > 1:
            raise IngestError(f"track {self.vehicle_id}: vehicle class changes along the track")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def vehicle_class(self) -> VehicleClass:
        return self.records[0].vehicle_class

    @property
    def frame_ids(self) -> np.ndarray:
        return np.array([r.frame_id for r in self.records], dtype=np.int64)

    @property
    def x(self) -> np.ndarray:
        return np.array([r.local_x for r in self.records])

    @property
    def y(self) -> np.ndarray:
        return np.array([r.local_y for r in self.records])

    @property
    def lanes(self) -> np.ndarray:
        return np.array([r.lane_id for r in self.records], dtype=np.int64)


@dataclass
class ColumnMap:
    """Source column layout of a raw trajectory file.

    Indices are zero-based.  The defaults describe the 18-column NGSIM
    US-101 release (local x/y are the 5th and 6th columns).
    """

    vehicle_id: int = 0
    frame_id: int = 1
    local_x: int = 4
    local_y: int = 5
    vehicle_class: int = 10
    lane_id: int = 13
    preceding_id: int | None = 14
    following_id: int | None = 15
    n_fields: int | None = 18
    delimiter: str = "whitespace"
    header: str = "auto"
    units: str = "feet"
    class_codes: dict[int, VehicleClass] = field(
        default_factory=lambda: {
            1: VehicleClass.MOTORCYCLE,
            2: VehicleClass.CAR,
            3: VehicleClass.TRUCK,
        }
    )

    @property
    def length_factor(self) -> float:
        if self.units == "feet":
            return FEET_TO_METERS
        if self.units == "meters":
            return 1.0
        raise IngestError(f"unknown units {self.units!r}")

    @classmethod
    def from_text(cls, text: str) -> "ColumnMap":
        """Parse the ``key = value`` column configuration format.

        Blank lines and ``#`` comments are ignored.  Keys are the field
        names of this class; ``class.<code> = <name>`` lines replace the
        class-code table, and ``none`` disables an optional column.
        """
        cmap = cls()
        codes: dict[int, VehicleClass] = {}
        int_keys = {"vehicle_id", "frame_id", "local_x", "local_y", "vehicle_class", "lane_id"}
        opt_keys = {"preceding_id", "following_id", "n_fields"}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise IngestError(f"expected key = value, got {raw!r}", lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                if key in int_keys:
                    setattr(cmap, key, int(value))
                elif key in opt_keys:
                    setattr(cmap, key, None if value.lower() == "none" else int(value))
                elif key in ("delimiter", "header", "units"):
                    setattr(cmap, key, value.lower())
                elif key.startswith("class."):
                    codes[int(key[6:])] = VehicleClass(value.lower())
                else:
                    raise IngestError(f"unknown key {key!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, IngestError):
                    raise
                raise IngestError(f"bad value for {key}: {value!r}", lineno) from exc
        if codes:
            cmap.class_codes = codes
        if cmap.delimiter not in ("whitespace", "comma"):
            raise IngestError(f"delimiter must be whitespace or comma, not {cmap.delimiter!r}")
        if cmap.header not in ("auto", "yes", "no"):
            raise IngestError(f"header must be auto, yes or no, not {cmap.header!r}")
        cmap.length_factor  # validates units
        return cmap

    @classmethod
    def load(cls, path: str | Path) -> "ColumnMap":
        return cls.from_text(Path(path).read_text())


def _split(line: str, delimiter: str) -> list[str]:
    if delimiter == "comma":
        return [f.strip() for f in line.split(",")]
    return line.split()


def _looks_like_header(fields: Sequence[str]) -> bool:
    try:
        [float(f) for f in fields if f]
    except ValueError:
        return True
    return False


def _parse_id(text: str, lineno: int, name: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"non-numeric {name} {text!r}", lineno) from None
    if not value.is_integer():
        raise IngestError(f"{name} must be an integer, got {text!r}", lineno)
    return int(value)


def _parse_row(fields: Sequence[str], lineno: int, cmap: ColumnMap) -> TrajectoryRecord:
    if cmap.n_fields is not None and len(fields) != cmap.n_fields:
        raise IngestError(f"expected {cmap.n_fields} fields, found {len(fields)}", lineno)
    needed = [cmap.vehicle_id, cmap.frame_id, cmap.local_x, cmap.local_y,
              cmap.vehicle_class, cmap.lane_id, cmap.preceding_id, cmap.following_id]
    if max(i for i in needed if i is not None) >= len(fields):
        raise IngestError(f"row has only {len(fields)} fields", lineno)

    def length(index: int, name: str) -> float:
        try:
            value = float(fields[index])
        except ValueError:
            raise IngestError(f"non-numeric {name} {fields[index]!r}", lineno) from None
        if not math.isfinite(value):
            raise IngestError(f"non-finite {name}", lineno)
        return value * cmap.length_factor

    code = _parse_id(fields[cmap.vehicle_class], lineno, "class code")
    if code not in cmap.class_codes:
        raise IngestError(f"unknown vehicle class code {code}", lineno)

    def optional_id(index: int | None, name: str) -> int | None:
        if index is None:
            return None
        value = _parse_id(fields[index], lineno, name)
        return value if value != 0 else None

    try:
        return TrajectoryRecord(
            vehicle_id=_parse_id(fields[cmap.vehicle_id], lineno, "vehicle id"),
            frame_id=_parse_id(fields[cmap.frame_id], lineno, "frame id"),
            local_x=length(cmap.local_x, "local x"),
            local_y=length(cmap.local_y, "local y"),
            lane_id=_parse_id(fields[cmap.lane_id], lineno, "lane id"),
            vehicle_class=cmap.class_codes[code],
            preceding_id=optional_id(cmap.preceding_id, "preceding id"),
            following_id=optional_id(cmap.following_id, "following id"),
        )
    except IngestError as exc:
        if exc.line is None:
            raise IngestError(str(exc), lineno) from None
        raise


def parse_trajectory_file(stream: IO[bytes] | IO[str] | bytes | str,
                          column_map: ColumnMap | None = None) -> list[TrajectoryRecord]:
    """Parse raw trajectory rows into records, one per data row.

    ``stream`` may be a binary or text file object, or the file contents.
    Errors carry the 1-based line number of the offending row.
    """
    cmap = column_map or ColumnMap()
    if isinstance(stream, (bytes, str)):
        data = stream
    else:
        data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    records = []
    first = True
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        fields = _split(line, cmap.delimiter)
        if first:
            first = False
            if cmap.header == "yes" or (cmap.header == "auto" and _looks_like_header(fields)):
                continue
        records.append(_parse_row(fields, lineno, cmap))
    if cmap.following_id is None:
        records = reconstruct_following(records)
    return records


def load_trajectory_file(path: str | Path, column_map: ColumnMap | None = None) -> list[TrajectoryRecord]:
    with open(path, "rb") as fh:
        return parse_trajectory_file(fh, column_map)


def _length_to_source(value: float, factor: float) -> float:
    # Pick a source value that converts back to exactly `value`.
    if factor == 1.0:
        return value
    guess = value / factor
    candidate = guess
    for _ in range(8):
        if candidate * factor == value:
            return candidate
        candidate = float(np.nextafter(candidate, math.inf if candidate * factor < value else -math.inf))
    return guess


def serialize_record(record: TrajectoryRecord, column_map: ColumnMap | None = None) -> str:
    """Format a record as one raw row under ``column_map``.

    Columns not described by the map are written as ``0``.
    """
    cmap = column_map or ColumnMap()
    inverse_codes = {v: k for k, v in cmap.class_codes.items()}
    indices = [cmap.vehicle_id, cmap.frame_id, cmap.local_x, cmap.local_y,
               cmap.vehicle_class, cmap.lane_id, cmap.preceding_id, cmap.following_id]
    width = cmap.n_fields or max(i for i in indices if i is not None) + 1
    fields = ["0"] * width
    factor = cmap.length_factor
    fields[cmap.vehicle_id] = str(record.vehicle_id)
    fields[cmap.frame_id] = str(record.frame_id)
    fields[cmap.local_x] = repr(_length_to_source(record.local_x, factor))
    fields[cmap.local_y] = repr(_length_to_source(record.local_y, factor))
    fields[cmap.vehicle_class] = str(inverse_codes[record.vehicle_class])
    fields[cmap.lane_id] = str(record.lane_id)
    if cmap.preceding_id is not None:
        fields[cmap.preceding_id] = str(record.preceding_id or 0)
    if cmap.following_id is not None:
        fields[cmap.following_id] = str(record.following_id or 0)
    return ("," if cmap.delimiter == "comma" else " ").join(fields)


def reconstruct_following(records: Iterable[TrajectoryRecord]) -> list[TrajectoryRecord]:
    """Fill ``following_id`` by inverting ``preceding_id`` within each frame.

    When several vehicles claim the same leader, the closest one behind it
    (largest ``local_y``, then smallest id) is taken as its follower.
    """
    records = list(records)
    best: dict[tuple[int, int], TrajectoryRecord] = {}
    for r in records:
        if r.preceding_id is None:
            continue
        key = (r.frame_id, r.preceding_id)
        cur = best.get(key)
        if cur is None or (r.local_y, -r.vehicle_id) > (cur.local_y, -cur.vehicle_id):
            best[key] = r
    out = []
    for r in records:
        follower = best.get((r.frame_id, r.vehicle_id))
        out.append(replace(r, following_id=follower.vehicle_id if follower else None))
    return out


def build_tracks(records: Iterable[TrajectoryRecord],
                 min_length: int = MIN_SEGMENT_FRAMES) -> dict[int, list[VehicleTrack]]:
    """Group records per vehicle into contiguous track segments.

    Records are sorted by frame; a gap in frame ids starts a new segment
    and segments shorter than ``min_length`` frames are dropped.  A vehicle
    whose segments are all dropped still appears with an empty list.
    """
    grouped: dict[int, list[TrajectoryRecord]] = defaultdict(list)
    for r in records:
        grouped[r.vehicle_id].append(r)

    tracks: dict[int, list[VehicleTrack]] = {}
    for vid in sorted(grouped):
        recs = sorted(grouped[vid], key=lambda r: r.frame_id)
        for a, b in zip(recs, recs[1:]):
            if a.frame_id == b.frame_id:
                raise IngestError(f"duplicate frame {a.frame_id} for vehicle {vid}")
        segments = []
        start = 0
        for i in range(1, len(recs) + 1):
            if i == len(recs) or recs[i].frame_id != recs[i - 1].frame_id + 1:
                segments.append(recs[start:i])
                start = i
        tracks[vid] = [VehicleTrack(vid, tuple(seg)) for seg in segments if len(seg) >= min_length]
    return tracks


TRACK_DUMP_COLUMNS = ("vehicle_id", "frame_id", "local_x_m", "local_y_m", "lane_id",
                      "class", "preceding_id", "following_id")


def write_track_dump(tracks: Mapping[int, Sequence[VehicleTrack]], path: str | Path) -> None:
    """Write tracks as normalized CSV (meters, class names, 0 for absent ids)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACK_DUMP_COLUMNS)
        for vid in sorted(tracks):
            for track in tracks[vid]:
                for r in track.records:
                    writer.writerow([r.vehicle_id, r.frame_id, repr(r.local_x), repr(r.local_y),
                                     r.lane_id, r.vehicle_class.value,
                                     r.preceding_id or 0, r.following_id or 0])


def read_track_dump(path: str | Path, min_length: int = 0) -> dict[int, list[VehicleTrack]]:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TRACK_DUMP_COLUMNS:
        raise IngestError(f"{path}: not a track dump (header {header!r})")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(TRACK_DUMP_COLUMNS):
            raise IngestError(f"expected {len(TRACK_DUMP_COLUMNS)} fields, found {len(row)}", lineno)
        try:
            records.append(TrajectoryRecord(
                vehicle_id=int(row[0]), frame_id=int(row[1]),
                local_x=float(row[2]), local_y=float(row[3]), lane_id=int(row[4]),
                vehicle_class=VehicleClass(row[5]),
                preceding_id=int(row[6]) or None, following_id=int(row[7]) or None,
            ))
        except IngestError as exc:
            raise IngestError(str(exc), lineno) from None
        except ValueError as exc:
            raise IngestError(str(exc), lineno) from None
    return build_tracks(records, min_length=min_length)
