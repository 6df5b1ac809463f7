"""Vehicles of interest around a target and the per-frame feature vector.

Lane ids grow from left to right, so the left neighbor ``l`` is searched
in ``lane - 1`` and the right neighbor ``r`` in ``lane + 1``.  Leader links
come from the recorded preceding ids; followers are their inverse.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .smoothing import SmoothedTrack

ROLES = ("l", "r", "f", "b", "fl", "fr", "bl", "br", "ff")
TARGET_FIELDS = ("x", "y", "vx", "vy")
ROLE_FIELDS = ("vx", "dvy", "dx", "dy", "ttc")

TTC_LIMIT = 100.0
TTC_DEADBAND = 0.01


class SceneError(ValueError):
    pass


@dataclass
class FrameScene:
    """One frame of the scene: lane occupancy and leader/follower links."""

    lanes: dict[int, list[int]] = field(default_factory=dict)
    lane_ys: dict[int, list[float]] = field(default_factory=dict)
    position: dict[int, tuple[int, float]] = field(default_factory=dict)
    preceding: dict[int, int] = field(default_factory=dict)
    follower: dict[int, int] = field(default_factory=dict)


@dataclass
class SceneIndex:
    frames: dict[int, FrameScene]

    def __getitem__(self, frame_id: int) -> FrameScene:
        return self.frames[frame_id]


@dataclass(frozen=True)
class NeighborSet:
    l: int | None = None
    r: int | None = None
    f: int | None = None
    b: int | None = None
    fl: int | None = None
    fr: int | None = None
    bl: int | None = None
    br: int | None = None
    ff: int | None = None

    def as_dict(self) -> dict[str, int | None]:
        return {role: getattr(self, role) for role in ROLES}


def build_scene_index(tracks: Iterable[SmoothedTrack]) -> SceneIndex:
    """Index smoothed tracks per frame.

    Preceding links to vehicles that are not in the scene at that frame are
    dropped.  When several vehicles share a leader, the closest one behind it
    becomes the leader's follower.  A cycle of leader links raises.
    """
    entries: dict[int, list[tuple[float, int, int, int]]] = {}
    for tr in tracks:
        preceding = tr.preceding if tr.preceding is not None else np.zeros(len(tr), dtype=np.int64)
        for fid, lane, y, p in zip(tr.frame_ids.tolist(), tr.lanes.tolist(),
                                   tr.y.tolist(), preceding.tolist()):
            entries.setdefault(fid, []).append((y, tr.vehicle_id, lane, p))

    frames = {}
    for fid, items in entries.items():
        scene = FrameScene()
        for y, vid, lane, _ in sorted(items):
            if vid in scene.position:
                raise SceneError(f"vehicle {vid} appears twice in frame {fid}")
            scene.position[vid] = (lane, y)
            scene.lanes.setdefault(lane, []).append(vid)
            scene.lane_ys.setdefault(lane, []).append(y)
        for y, vid, lane, p in items:
            if p and p in scene.position:
                scene.preceding[vid] = p
        for vid, leader in scene.preceding.items():
            cur = scene.follower.get(leader)
            if cur is None or (scene.position[vid][1], -vid) > (scene.position[cur][1], -cur):
                scene.follower[leader] = vid
        _check_acyclic(scene.preceding, fid)
        frames[fid] = scene
    return SceneIndex(frames)


def _check_acyclic(preceding: Mapping[int, int], frame_id: int) -> None:
    done: set[int] = set()
    for start in preceding:
        path = []
        on_path: set[int] = set()
        v = start
        while v in preceding and v not in done:
            if v in on_path:
                raise SceneError(f"cycle in preceding links at frame {frame_id}: {path}")
            on_path.add(v)
            path.append(v)
            v = preceding[v]
        done.update(path)


def _closest_in_lane(scene: FrameScene, lane: int, y: float) -> int | None:
    ids = scene.lanes.get(lane)
    if not ids:
        return None
    ys = scene.lane_ys[lane]
    i = bisect.bisect_left(ys, y)
    ahead = ys[i] - y if i < len(ys) else math.inf
    behind = y - ys[i - 1] if i > 0 else math.inf
    if ahead <= behind:
        # lane lists are sorted by (y, id): the first entry at this y has the smallest id
        return ids[i]
    return ids[bisect.bisect_left(ys, ys[i - 1])]


def find_neighbors(target_id: int, frame_id: int, index: SceneIndex) -> NeighborSet:
    """The 9 vehicles of interest around ``target_id`` at ``frame_id``.

    Lateral neighbors are the adjacent-lane vehicles with the smallest
    longitudinal gap; ties go to the vehicle ahead, then to the lower id.
    """
    scene = index.frames.get(frame_id)
    if scene is None or target_id not in scene.position:
        raise SceneError(f"vehicle {target_id} is not present at frame {frame_id}")
    lane, y = scene.position[target_id]
    lead, follow = scene.preceding.get, scene.follower.get

    left = _closest_in_lane(scene, lane - 1, y)
    right = _closest_in_lane(scene, lane + 1, y)
    front = lead(target_id)
    return NeighborSet(
        l=left,
        r=right,
        f=front,
        b=follow(target_id),
        fl=lead(left) if left is not None else None,
        fr=lead(right) if right is not None else None,
        bl=follow(left) if left is not None else None,
        br=follow(right) if right is not None else None,
        ff=lead(front) if front is not None else None,
    )


def compute_ttc(dy: float, dvy: float) -> float:
    """Signed time-to-collision ``dy / dvy``, bounded to +/-100 s."""
    if abs(dvy) < TTC_DEADBAND:
        if dy == 0:
            return 0.0
        return math.copysign(TTC_LIMIT, dy)
    return min(TTC_LIMIT, max(-TTC_LIMIT, dy / dvy))


@dataclass(frozen=True)
class FeatureLayout:
    """Which optional feature groups enter the model input vector."""

    use_type: bool = False
    use_ff: bool = True

    @property
    def roles(self) -> tuple[str, ...]:
        return ROLES if self.use_ff else tuple(r for r in ROLES if r != "ff")

    @property
    def columns(self) -> list[str]:
        cols = [f"{f}_targ" for f in TARGET_FIELDS]
        if self.use_type:
            cols.append("type_targ")
        role_fields = ROLE_FIELDS + (("type",) if self.use_type else ())
        for role in self.roles:
            cols.extend(f"{f}_{role}" for f in role_fields)
        return cols

    @property
    def size(self) -> int:
        return len(self.columns)


# Superset layout, used for feature dumps.
FULL_LAYOUT = FeatureLayout(use_type=True, use_ff=True)
FULL_COLUMNS = FULL_LAYOUT.columns


@dataclass(frozen=True)
class FeatureFrame:
    """Unscaled features of one target at one frame.

    ``roles`` maps each role to ``(vx, dvy, dx, dy, ttc, type)``, or to
    ``None`` when the role is unoccupied (its block is then zero).
    """

    x: float
    y: float
    vx: float
    vy: float
    type_code: int
    roles: dict[str, tuple[float, float, float, float, float, int] | None]

    def vector(self, layout: FeatureLayout = FeatureLayout()) -> np.ndarray:
        out = [self.x, self.y, self.vx, self.vy]
        if layout.use_type:
            out.append(float(self.type_code))
        width = 6 if layout.use_type else 5
        for role in layout.roles:
            block = self.roles.get(role)
            out.extend(block[:width] if block is not None else (0.0,) * width)
        return np.array(out, dtype=np.float64)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    vx: float
    vy: float
    type_code: int


class StateTable:
    """Smoothed state lookup by (vehicle id, frame id)."""

    def __init__(self, tracks: Iterable[SmoothedTrack]):
        self._rows: dict[int, tuple[SmoothedTrack, dict[int, int]]] = {}
        for tr in tracks:
            self._rows[tr.vehicle_id] = (tr, {f: i for i, f in enumerate(tr.frame_ids.tolist())})

    def get(self, vehicle_id: int | None, frame_id: int) -> VehicleState | None:
        if vehicle_id is None or vehicle_id not in self._rows:
            return None
        tr, pos = self._rows[vehicle_id]
        i = pos.get(frame_id)
        if i is None:
            return None
        return VehicleState(float(tr.x[i]), float(tr.y[i]), float(tr.vx[i]), float(tr.vy[i]),
                            tr.type_code)


def extract_features(target: VehicleState, neighbors: NeighborSet,
                     states: StateTable, frame_id: int) -> FeatureFrame:
    roles = {}
    for role, vid in neighbors.as_dict().items():
        other = states.get(vid, frame_id)
        if other is None:
            roles[role] = None
            continue
        dvy = target.vy - other.vy
        dy = other.y - target.y
        roles[role] = (other.vx, dvy, other.x - target.x, dy, compute_ttc(dy, dvy), other.type_code)
    return FeatureFrame(target.x, target.y, target.vx, target.vy, target.type_code, roles)


def featurize_track(track: SmoothedTrack, index: SceneIndex, states: StateTable,
                    layout: FeatureLayout = FULL_LAYOUT) -> np.ndarray:
    """Feature matrix (frames x layout.size) of one smoothed track."""
    out = np.empty((len(track), layout.size))
    for i, fid in enumerate(track.frame_ids.tolist()):
        target = VehicleState(float(track.x[i]), float(track.y[i]), float(track.vx[i]),
                              float(track.vy[i]), track.type_code)
        nb = find_neighbors(track.vehicle_id, fid, index)
        out[i] = extract_features(target, nb, states, fid).vector(layout)
    return out
