"""Whole-trajectory prediction, per-horizon RMSE, error percentiles and bagging."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dataset import (FeatureSegment, HorizonSpec, ScalingSpec, scale_features, select_layout,
                      target_divisors)
from .neural import LstmState, ModelParams, layout_of, model_forward

PERCENTILES = (5, 25, 50, 75, 95)
CHANNELS = ("lateral_position", "longitudinal_speed")
TABLE_HORIZONS = (1, 2, 3, 4, 6, 8, 10)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class HorizonErrors:
    horizons_s: tuple[int, ...]
    lateral_rmse: np.ndarray  # meters
    long_speed_rmse: np.ndarray  # m/s


@dataclass(frozen=True)
class EvalReport:
    per_vehicle: dict[int, HorizonErrors]
    mean: HorizonErrors
    # (horizon, channel, percentile) over pooled signed errors
    percentiles: np.ndarray


def _output_divisors(params: ModelParams, scaling: ScalingSpec) -> np.ndarray:
    k = params.config.output_size // 2
    return target_divisors(HorizonSpec(tuple(range(1, k + 1))), scaling)


def predict_full_track(params: ModelParams, features, scaling: ScalingSpec = ScalingSpec(),
                       initial: list[LstmState] | None = None, return_state: bool = False):
    """Run one uninterrupted scan over a scaled ``(T, N)`` feature sequence.

    Predictions are returned in meters (lateral) and m/s (longitudinal
    speed), interleaved per horizon.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.config.input_size:
        raise EvaluationError(
            f"feature width {features.shape[-1]} does not match model input {params.config.input_size}")
    out, finals = model_forward(params, features, initial)
    out = out * _output_divisors(params, scaling)
    return (out, finals) if return_state else out


class Ensemble:
    """Models whose outputs are averaged."""

    def __init__(self, members: Sequence[ModelParams]):
        if not members:
            raise EvaluationError("an ensemble needs at least one model")
        first = members[0].config
        for m in members[1:]:
            if (m.config.output_size, m.config.input_size, m.config.use_type, m.config.use_ff) != \
                    (first.output_size, first.input_size, first.use_type, first.use_ff):
                raise EvaluationError("ensemble members have incompatible input/output contracts")
        self.members = list(members)

    @property
    def config(self):
        return self.members[0].config

    def __len__(self) -> int:
        return len(self.members)


def bag_predict(ensemble: Ensemble | Sequence[ModelParams], features,
                scaling: ScalingSpec = ScalingSpec()) -> np.ndarray:
    if not isinstance(ensemble, Ensemble):
        ensemble = Ensemble(ensemble)
    total = None
    for m in ensemble.members:
        pred = predict_full_track(m, features, scaling)
        total = pred if total is None else total + pred
    return total / len(ensemble)


def rmse_per_vehicle(predictions, truth, horizons: HorizonSpec) -> HorizonErrors:
    """RMSE per horizon and channel over frames whose target is present (non-NaN)."""
    pred = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.shape[-1] != horizons.output_size:
        raise EvaluationError(f"prediction shape {pred.shape} vs truth {truth.shape}")
    err = pred - truth
    valid = ~np.isnan(truth)
    counts = valid.sum(axis=0)
    if (counts == 0).any():
        raise EvaluationError("no frame with a present target")
    rmse = np.sqrt((np.where(valid, err, 0.0) ** 2).sum(axis=0) / counts)
    return HorizonErrors(horizons.horizons_s, rmse[0::2], rmse[1::2])


def signed_errors(predictions, truth) -> np.ndarray:
    """``prediction - truth`` with NaN where the target is absent."""
    return np.asarray(predictions, dtype=np.float64) - np.asarray(truth, dtype=np.float64)


def aggregate_report(per_vehicle: Mapping[int, HorizonErrors],
                     errors: Iterable[np.ndarray]) -> EvalReport:
    """Mean of per-vehicle RMSE and percentiles of the pooled signed errors."""
    if not per_vehicle:
        raise EvaluationError("no vehicles to aggregate")
    values = list(per_vehicle.values())
    horizons = values[0].horizons_s
    mean = HorizonErrors(horizons,
                         np.mean([v.lateral_rmse for v in values], axis=0),
                         np.mean([v.long_speed_rmse for v in values], axis=0))
    pooled = np.concatenate([np.asarray(e).reshape(-1, 2 * len(horizons)) for e in errors], axis=0)
    pct = np.empty((len(horizons), 2, len(PERCENTILES)))
    for col in range(pooled.shape[1]):
        vals = pooled[:, col]
        vals = vals[~np.isnan(vals)]
        pct[col // 2, col % 2] = np.percentile(vals, PERCENTILES) if len(vals) else np.nan
    return EvalReport(dict(per_vehicle), mean, pct)


Predictor = Callable[[np.ndarray], np.ndarray]


def model_predictor(model: ModelParams | Ensemble, scaling: ScalingSpec = ScalingSpec()) -> Predictor:
    if isinstance(model, Ensemble):
        return lambda feats: bag_predict(model, feats, scaling)
    return lambda feats: predict_full_track(model, feats, scaling)


def predict_segments(model: ModelParams | Ensemble, segments: Mapping[int, Sequence[FeatureSegment]],
                     vehicle_ids: Iterable[int], scaling: ScalingSpec = ScalingSpec()
                     ) -> dict[int, list[tuple[FeatureSegment, np.ndarray]]]:
    """Physical-unit predictions for every segment of the chosen vehicles."""
    layout = layout_of(model.config)
    predict = model_predictor(model, scaling)
    out = {}
    for vid in sorted(vehicle_ids):
        out[vid] = [(seg, predict(scale_features(select_layout(seg.features, layout), layout, scaling)))
                    for seg in segments.get(vid, [])]
    return out


def evaluate(model: ModelParams | Ensemble, segments: Mapping[int, Sequence[FeatureSegment]],
             vehicle_ids: Iterable[int], horizons: HorizonSpec,
             scaling: ScalingSpec = ScalingSpec()) -> EvalReport:
    """Evaluate whole trajectories of ``vehicle_ids``.

    Each segment is fed in one pass with state carried from its first
    frame; a vehicle's RMSE pools all of its segments.
    """
    if model.config.output_size != horizons.output_size:
        raise EvaluationError("model outputs do not match the horizon list")
    per_vehicle, errors = {}, []
    for vid, pairs in predict_segments(model, segments, vehicle_ids, scaling).items():
        if not pairs:
            continue
        pred = np.concatenate([p for _, p in pairs])
        truth = np.concatenate([s.targets for s, _ in pairs])
        if np.isnan(truth).all():
            continue
        per_vehicle[vid] = rmse_per_vehicle(pred, truth, horizons)
        errors.append(signed_errors(pred, truth))
    return aggregate_report(per_vehicle, errors)


def pooled_mse(model: ModelParams | Ensemble, segments, vehicle_ids, horizons: HorizonSpec,
               scaling: ScalingSpec = ScalingSpec()) -> np.ndarray:
    """Mean squared error per output column over all present targets."""
    sq, count = np.zeros(horizons.output_size), np.zeros(horizons.output_size)
    for pairs in predict_segments(model, segments, vehicle_ids, scaling).values():
        for seg, pred in pairs:
            err = pred - seg.targets
            valid = ~np.isnan(err)
            sq += (np.where(valid, err, 0.0) ** 2).sum(axis=0)
            count += valid.sum(axis=0)
    return sq / count


def select_best(candidates: Mapping[str, ModelParams], segments, vehicle_ids,
                horizons: HorizonSpec, scaling: ScalingSpec = ScalingSpec(),
                k: int = 4) -> list[str]:
    """Names of the ``k`` models with the lowest mean lateral RMSE at the longest horizon."""
    scored = []
    for name in sorted(candidates):
        report = evaluate(candidates[name], segments, vehicle_ids, horizons, scaling)
        scored.append((float(report.mean.lateral_rmse[-1]), name))
    return [name for _, name in sorted(scored)[:k]]


def write_horizon_table(reports: Mapping[str, EvalReport], path: str | Path,
                        horizons: Sequence[int] | None = None) -> None:
    """CSV ``model, horizon, lateral_rmse_m, long_speed_rmse_mps`` (one row per model and horizon)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "horizon", "lateral_rmse_m", "long_speed_rmse_mps"])
        for name, rep in reports.items():
            for j, h in enumerate(rep.mean.horizons_s):
                if horizons is None or h in horizons:
                    writer.writerow([name, h, repr(float(rep.mean.lateral_rmse[j])),
                                     repr(float(rep.mean.long_speed_rmse[j]))])


def write_percentiles(report: EvalReport, path: str | Path) -> None:
    """CSV ``horizon, channel, p5, p25, p50, p75, p95`` of signed errors."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["horizon", "channel"] + [f"p{p}" for p in PERCENTILES])
        for j, h in enumerate(report.mean.horizons_s):
            for c, channel in enumerate(CHANNELS):
                writer.writerow([h, channel] + [repr(float(v)) for v in report.percentiles[j, c]])


def write_per_vehicle(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vehicle_id", "horizon", "lateral_rmse_m", "long_speed_rmse_mps"])
        for vid in sorted(report.per_vehicle):
            e = report.per_vehicle[vid]
            for j, h in enumerate(e.horizons_s):
                writer.writerow([vid, h, repr(float(e.lateral_rmse[j])), repr(float(e.long_speed_rmse[j]))])


def read_horizon_table(path: str | Path) -> list[tuple[str, int, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(r[0], int(r[1]), float(r[2]), float(r[3])) for r in reader]
