"""Synthetic highway traffic in the NGSIM file layout.

Vehicles drive at their lane's constant speed along a straight multi-lane
segment; a chosen subset performs one scripted lane change (minimum-jerk
lateral profile).  Leader and follower ids are derived per frame from the
longitudinal order within each lane, the way NGSIM records them.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import ColumnMap, TrajectoryRecord, VehicleClass, serialize_record


@dataclass(frozen=True)
class SyntheticSpec:
    n_vehicles: int = 100
    n_lane_changes: int = 20
    n_lanes: int = 5
    lane_width: float = 3.7
    road_length: float = 600.0
    fastest_speed: float = 28.0
    slowest_speed: float = 18.0
    entry_spacing: int = 30  # frames between entries on the same lane
    lane_change_duration: float = 4.0
    noise: float = 0.03  # std of position noise, meters
    seed: int = 0


def _min_jerk(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)


def generate_records(spec: SyntheticSpec = SyntheticSpec()) -> list[TrajectoryRecord]:
    rng = np.random.default_rng(spec.seed)
    speeds = np.linspace(spec.fastest_speed, spec.slowest_speed, spec.n_lanes)
    changers = set(rng.choice(spec.n_vehicles, size=spec.n_lane_changes, replace=False).tolist()) \
        if spec.n_lane_changes else set()
    classes = rng.choice([VehicleClass.CAR, VehicleClass.TRUCK, VehicleClass.MOTORCYCLE],
                         size=spec.n_vehicles, p=[0.9, 0.07, 0.03])

    # per vehicle: frames, x, y, lanes
    tracks = []
    for i in range(spec.n_vehicles):
        vid = i + 1
        lane = 1 + i % spec.n_lanes
        speed = speeds[lane - 1]
        entry = 1 + (i // spec.n_lanes) * spec.entry_spacing + int(rng.integers(0, 5))
        n = int(np.floor(spec.road_length / (speed * 0.1))) + 1
        t = np.arange(n) * 0.1
        y = speed * t
        x = np.full(n, (lane - 0.5) * spec.lane_width)
        if i in changers:
            options = [d for d in (-1, 1) if 1 <= lane + d <= spec.n_lanes]
            direction = options[int(rng.integers(len(options)))]
            start = rng.uniform(8.0, t[-1] - spec.lane_change_duration - 2.0)
            x = x + direction * spec.lane_width * _min_jerk((t - start) / spec.lane_change_duration)
        x = x + rng.normal(0.0, spec.noise, n)
        y = np.maximum(y + rng.normal(0.0, spec.noise, n), 0.0)
        lanes = np.clip(np.floor(x / spec.lane_width).astype(int) + 1, 1, spec.n_lanes)
        tracks.append((vid, entry + np.arange(n), x, y, lanes, classes[i]))

    by_frame: dict[int, list[tuple[int, float, int]]] = {}
    for vid, frames, x, y, lanes, _ in tracks:
        for f, yy, ln in zip(frames.tolist(), y.tolist(), lanes.tolist()):
            by_frame.setdefault(f, []).append((vid, yy, ln))
    leader, follower = {}, {}
    for f, items in by_frame.items():
        per_lane: dict[int, list[tuple[float, int]]] = {}
        for vid, yy, ln in items:
            per_lane.setdefault(ln, []).append((yy, vid))
        for members in per_lane.values():
            members.sort()
            for (_, back), (_, front) in zip(members, members[1:]):
                leader[(f, back)] = front
                follower[(f, front)] = back

    records = []
    for vid, frames, x, y, lanes, cls in tracks:
        for f, xx, yy, ln in zip(frames.tolist(), x.tolist(), y.tolist(), lanes.tolist()):
            records.append(TrajectoryRecord(vid, f, max(xx, 0.0), yy, ln, cls,
                                            leader.get((f, vid)), follower.get((f, vid))))
    return records


def write_ngsim_file(records, path: str | Path, column_map: ColumnMap | None = None) -> None:
    cmap = column_map or ColumnMap()
    rows = sorted(records, key=lambda r: (r.vehicle_id, r.frame_id))
    with open(path, "w") as fh:
        for r in rows:
            fh.write(serialize_record(r, cmap) + "\n")
