"""First-order Savitzky-Golay smoothing and differentiation.

Interior samples use the centered window, where a degree-1 least-squares
fit reduces to the window mean (value) and ``sum(j * s[t+j]) / sum(j**2)``
(slope).  The first and last ``window_length // 2`` samples are fitted over
the truncated window that still fits inside the series, so the output has
the same length as the input.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import FRAME_PERIOD, VehicleTrack


class SmoothingError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    window_length: int = 11
    polynomial_order: int = 1
    sample_period: float = FRAME_PERIOD
    drop_edges: bool = False

    def __post_init__(self):
        if self.window_length < 3 or self.window_length % 2 == 0:
            raise SmoothingError(f"window_length must be odd and >= 3, got {self.window_length}")
        if self.polynomial_order != 1:
            raise SmoothingError("only first-order filtering is supported")
        if self.sample_period <= 0:
            raise SmoothingError("sample_period must be positive")

    @property
    def half_width(self) -> int:
        return self.window_length // 2


@dataclass(frozen=True)
class SmoothedTrack:
    vehicle_id: int
    frame_ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    lanes: np.ndarray
    type_code: int = 0
    preceding: np.ndarray | None = None  # 0 where absent

    def __post_init__(self):
        n = len(self.frame_ids)
        if not all(len(a) == n for a in (self.x, self.y, self.vx, self.vy, self.lanes)):
            raise SmoothingError(f"track {self.vehicle_id}: misaligned sequences")

    def __len__(self) -> int:
        return len(self.frame_ids)


def _line_fits(series: np.ndarray, spec: FilterSpec) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise SmoothingError("series must be one-dimensional")
    n = len(s)
    w = spec.window_length
    if n < w:
        raise SmoothingError(f"series of length {n} is shorter than the window ({w})")
    h = spec.half_width
    j = np.arange(-h, h + 1, dtype=np.float64)

    value = np.empty(n)
    slope = np.empty(n)
    # correlate: out[t] = sum_j kernel[j] * s[t + j]
    value[h:n - h] = np.correlate(s, np.full(w, 1.0 / w), mode="valid")
    slope[h:n - h] = np.correlate(s, j / np.dot(j, j), mode="valid")

    for t in list(range(h)) + list(range(n - h, n)):
        lo, hi = max(0, t - h), min(n, t + h + 1)
        idx = np.arange(lo, hi, dtype=np.float64)
        seg = s[lo:hi]
        centered = idx - idx.mean()
        b = np.dot(centered, seg - seg.mean()) / np.dot(centered, centered)
        value[t] = seg.mean() + b * (t - idx.mean())
        slope[t] = b
    return value, slope


def savgol_smooth(series, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    return _line_fits(series, spec)[0]


def savgol_derivative(series, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Least-squares slope of each window, in units per second."""
    return _line_fits(series, spec)[1] / spec.sample_period


def smooth_track(track: VehicleTrack, spec: FilterSpec = FilterSpec()) -> SmoothedTrack:
    if len(track) < spec.window_length:
        raise SmoothingError(
            f"track {track.vehicle_id} has {len(track)} frames, window needs {spec.window_length}"
        )
    x, vx = _line_fits(track.x, spec)
    y, vy = _line_fits(track.y, spec)
    vx, vy = vx / spec.sample_period, vy / spec.sample_period
    frames, lanes = track.frame_ids, track.lanes
    preceding = np.array([r.preceding_id or 0 for r in track.records], dtype=np.int64)
    if spec.drop_edges:
        keep = slice(spec.half_width, len(track) - spec.half_width)
        frames, lanes, preceding, x, y, vx, vy = (
            a[keep] for a in (frames, lanes, preceding, x, y, vx, vy))
    return SmoothedTrack(track.vehicle_id, frames, x, y, vx, vy, lanes,
                         type_code=track.vehicle_class.encode(), preceding=preceding)


def write_smoothing_dump(frames, raw, smoothed, path: str | Path) -> None:
    """CSV with columns ``frame, raw, smoothed`` for plotting a filtered signal."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "raw", "smoothed"])
        for f, r, s in zip(frames, raw, smoothed):
            writer.writerow([int(f), repr(float(r)), repr(float(s))])
