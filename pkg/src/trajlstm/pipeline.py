"""Glue between stages: tracks -> feature segments -> training windows."""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .dataset import (FeatureSegment, HorizonSpec, ScalingSpec, Window, compute_targets,
                      make_windows, scale_features, select_layout, target_divisors)
from .ingest import VehicleTrack
from .neighborhood import FULL_LAYOUT, FeatureLayout, StateTable, build_scene_index, featurize_track
from .smoothing import FilterSpec, smooth_track


def featurize(tracks: Mapping[int, Sequence[VehicleTrack]], filter_spec: FilterSpec = FilterSpec(),
              horizons: HorizonSpec = HorizonSpec()) -> dict[int, list[FeatureSegment]]:
    """Smooth every segment and extract full-layout features and physical targets."""
    smoothed = [smooth_track(seg, filter_spec) for vid in sorted(tracks) for seg in tracks[vid]]
    index = build_scene_index(smoothed)
    states = StateTable(smoothed)
    out: dict[int, list[FeatureSegment]] = {}
    for tr in smoothed:
        feats = featurize_track(tr, index, states, FULL_LAYOUT)
        targets = compute_targets(tr, horizons, spec=None)
        out.setdefault(tr.vehicle_id, []).append(FeatureSegment(tr.vehicle_id, tr.frame_ids, feats, targets))
    return out


def build_windows(segments: Mapping[int, Sequence[FeatureSegment]], vehicle_ids: Iterable[int],
                  layout: FeatureLayout, scaling: ScalingSpec = ScalingSpec()) -> list[Window]:
    """Scaled training windows for the given vehicles, in vehicle/frame order."""
    windows = []
    for vid in sorted(vehicle_ids):
        for seg in segments.get(vid, []):
            k = HorizonSpec(tuple(range(1, seg.targets.shape[1] // 2 + 1)))
            inputs = scale_features(select_layout(seg.features, layout), layout, scaling)
            targets = seg.targets / target_divisors(k, scaling)
            windows.extend(make_windows(inputs, targets, vid, seg.frame_ids))
    return windows
