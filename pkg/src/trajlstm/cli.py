"""Command-line front end.

Each subcommand reads the artifacts of the previous stage and writes its
own under the data root::

    synth      -> raw/trajectories.txt
    ingest     -> tracks.csv
    featurize  -> features.csv
    window     -> split.csv, windows.bin
    train      -> checkpoints/<run>/pass_XX.ckpt, final.ckpt, history.csv
    evaluate   -> reports/<run>/horizons.csv, percentiles.csv, per_vehicle.csv
    predict    -> reports/<run>/predictions.csv
    bag        -> reports/<bag>/... and members.txt
    report     -> reports/table.csv, reports/table.txt

Exit status: 0 success, 1 usage or configuration error, 2 data error or
missing artifact, 3 numeric failure (divergent training).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dataset import (DatasetError, HorizonSpec, ScalingSpec, WindowArchive, read_archive_header,
                      read_feature_dump, read_split, read_window_archive, split_train_test,
                      with_validation, write_feature_dump, write_split, write_window_archive)
from .evaluation import (TABLE_HORIZONS, Ensemble, EvaluationError, evaluate, predict_segments,
                         read_horizon_table, select_best, write_horizon_table, write_per_vehicle,
                         write_percentiles)
from .ingest import ColumnMap, IngestError, build_tracks, load_trajectory_file, read_track_dump, \
    write_track_dump
from .neighborhood import SceneError
from .neural import CheckpointError, ShapeError, layout_of, load_checkpoint, save_checkpoint
from .pipeline import build_windows, featurize
from .smoothing import SmoothingError
from .synthetic import generate_records, write_ngsim_file
from .training import DivergenceError, TrainingError, group_windows, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("trajlstm")


class StageError(Exception):
    """A stage cannot run: missing input artifact or inconsistent inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _require(path: Path, what: str, producer: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {what} ({path}); run `trajlstm {producer}` first")
    return path


def _checkpoint_path(cfg: RunConfig, args) -> Path:
    if getattr(args, "checkpoint", None):
        return _require(Path(args.checkpoint), "checkpoint", "train")
    return _require(cfg.paths.checkpoints / cfg.run_name / "final.ckpt",
                    f"checkpoint for run {cfg.run_name!r}", "train")


def _archive_contract(cfg: RunConfig) -> tuple[int, ScalingSpec]:
    meta = read_archive_header(_require(cfg.paths.windows, "window archive", "window"))
    return int(meta["n_features"]), ScalingSpec.from_text(meta["scaling"])


def _check_width(model_inputs: int, archive_inputs: int, what: str) -> None:
    if model_inputs != archive_inputs:
        raise StageError(f"{what} expects {model_inputs} input features but the window archive "
                         f"has {archive_inputs}")


# --- stages ----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> None:
    records = generate_records(cfg.synth)
    cfg.paths.raw.parent.mkdir(parents=True, exist_ok=True)
    write_ngsim_file(records, cfg.paths.raw)
    print(f"wrote {len(records)} rows for {cfg.synth.n_vehicles} vehicles to {cfg.paths.raw}")


def cmd_ingest(cfg: RunConfig, args) -> None:
    raw = _require(cfg.paths.raw, "raw trajectory file", "synth")
    cmap = ColumnMap.load(_require(cfg.paths.column_map, "column map", "ingest")) \
        if cfg.paths.column_map else None
    records = load_trajectory_file(raw, cmap)
    tracks = build_tracks(records)
    n_seg = sum(len(s) for s in tracks.values())
    if not n_seg:
        raise StageError(f"no vehicle track in {raw} is long enough to keep")
    cfg.paths.tracks.parent.mkdir(parents=True, exist_ok=True)
    write_track_dump(tracks, cfg.paths.tracks)
    print(f"{len(records)} records -> {n_seg} segments of {len(tracks)} vehicles")


def cmd_featurize(cfg: RunConfig, args) -> None:
    tracks = read_track_dump(_require(cfg.paths.tracks, "track dump", "ingest"))
    segments = featurize(tracks, cfg.filter, cfg.horizons)
    flat = [s for vid in sorted(segments) for s in segments[vid]]
    if not flat:
        raise StageError("track dump holds no segments")
    write_feature_dump(flat, cfg.horizons, cfg.paths.features)
    print(f"{sum(len(s.frame_ids) for s in flat)} feature rows for {len(segments)} vehicles")


def cmd_window(cfg: RunConfig, args) -> None:
    segments, horizons = read_feature_dump(_require(cfg.paths.features, "feature dump", "featurize"))
    if horizons != cfg.horizons:
        raise StageError(f"feature dump horizons {horizons.horizons_s} differ from config "
                         f"{cfg.horizons.horizons_s}; rerun `trajlstm featurize`")
    split = with_validation(split_train_test(segments.keys(), cfg.split_ratio, cfg.split_seed),
                            cfg.validation_fraction, cfg.split_seed)
    layout = layout_of(cfg.model)
    windows = build_windows(segments, split.fit_vehicle_ids, layout, cfg.scaling)
    if not windows:
        raise StageError("no training window: tracks are too short for the longest horizon")
    write_split(split, cfg.paths.split)
    write_window_archive(WindowArchive(layout.size, horizons, cfg.scaling, cfg.split_seed, layout, windows),
                         cfg.paths.windows)
    print(f"split {len(split.fit_vehicle_ids)} train / {len(split.validation_vehicle_ids)} validation / "
          f"{len(split.test_vehicle_ids)} test vehicles; {len(windows)} windows of {layout.size} features")


def cmd_train(cfg: RunConfig, args) -> None:
    archive = read_window_archive(_require(cfg.paths.windows, "window archive", "window"))
    split = read_split(_require(cfg.paths.split, "split file", "window"))
    _check_width(cfg.model.input_size, archive.n_features, f"variant {cfg.variant!r}")
    if archive.horizons.output_size != cfg.model.output_size:
        raise StageError("window archive horizons do not match the configured horizons")
    groups = group_windows(archive.windows, split.fit_vehicle_ids, cfg.schedule.group_size,
                           cfg.schedule.seed)
    out_dir = cfg.paths.checkpoints / cfg.run_name
    params, history = train(cfg.model, groups, cfg.schedule, checkpoint_dir=out_dir,
                            max_steps=args.max_steps, split=split)
    save_checkpoint(params, out_dir / "final.ckpt")
    history.write_csv(out_dir / "history.csv")
    print(f"run {cfg.run_name}: {history.steps} updates, final loss {history.step_losses[-1]:.6g}")


def _vehicle_set(split, which: str):
    ids = {"test": split.test_vehicle_ids, "validation": split.validation_vehicle_ids,
           "train": split.fit_vehicle_ids}[which]
    if not ids:
        raise StageError(f"the split has no {which} vehicles")
    return ids


def _write_report(report, out_dir: Path, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_horizon_table({name: report}, out_dir / "horizons.csv")
    write_percentiles(report, out_dir / "percentiles.csv")
    write_per_vehicle(report, out_dir / "per_vehicle.csv")


def _summary(name: str, report) -> str:
    lat = " ".join(f"{v:.3f}" for v in report.mean.lateral_rmse)
    return f"{name}: lateral RMSE (m) by horizon {report.mean.horizons_s}: {lat}"


def cmd_evaluate(cfg: RunConfig, args) -> None:
    params = load_checkpoint(_checkpoint_path(cfg, args))
    n_features, scaling = _archive_contract(cfg)
    _check_width(params.config.input_size, n_features, "checkpoint")
    segments, horizons = read_feature_dump(_require(cfg.paths.features, "feature dump", "featurize"))
    split = read_split(_require(cfg.paths.split, "split file", "window"))
    report = evaluate(params, segments, _vehicle_set(split, args.on), horizons, scaling)
    _write_report(report, cfg.paths.reports / cfg.run_name, cfg.run_name)
    print(_summary(cfg.run_name, report))


def cmd_predict(cfg: RunConfig, args) -> None:
    params = load_checkpoint(_checkpoint_path(cfg, args))
    n_features, scaling = _archive_contract(cfg)
    _check_width(params.config.input_size, n_features, "checkpoint")
    segments, horizons = read_feature_dump(_require(cfg.paths.features, "feature dump", "featurize"))
    if args.vehicles:
        ids = [int(v) for v in args.vehicles.split(",")]
        missing = [v for v in ids if v not in segments]
        if missing:
            raise StageError(f"vehicles not in the feature dump: {missing}")
    else:
        ids = _vehicle_set(read_split(_require(cfg.paths.split, "split file", "window")), "test")
    out_dir = cfg.paths.reports / cfg.run_name
    out_dir.mkdir(parents=True, exist_ok=True)
    cols = horizons.output_columns
    with open(out_dir / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vehicle_id", "frame_id"] + [f"pred_{c}" for c in cols] + [f"true_{c}" for c in cols])
        for vid, pairs in predict_segments(params, segments, ids, scaling).items():
            for seg, pred in pairs:
                for fid, p, t in zip(seg.frame_ids.tolist(), pred, seg.targets):
                    writer.writerow([vid, fid] + [repr(float(v)) for v in p]
                                    + ["" if math.isnan(v) else repr(float(v)) for v in t])
    print(f"predictions for {len(ids)} vehicles written to {out_dir / 'predictions.csv'}")


def cmd_bag(cfg: RunConfig, args) -> None:
    root = cfg.paths.checkpoints
    if args.members:
        names = args.members.split(",")
    else:
        names = sorted(p.parent.name for p in root.glob("*/final.ckpt") if p.parent.name != args.name)
    if not names:
        raise StageError(f"no trained runs under {root}; run `trajlstm train` first")
    models = {n: load_checkpoint(_require(root / n / "final.ckpt", f"checkpoint for run {n!r}", "train"))
              for n in names}
    n_features, scaling = _archive_contract(cfg)
    for n, m in models.items():
        _check_width(m.config.input_size, n_features, f"run {n!r}")
    segments, horizons = read_feature_dump(_require(cfg.paths.features, "feature dump", "featurize"))
    split = read_split(_require(cfg.paths.split, "split file", "window"))
    chosen = names
    if not args.members and len(names) > args.k:
        chosen = select_best(models, segments, _vehicle_set(split, "validation"), horizons, scaling, k=args.k)
    ensemble = Ensemble([models[n] for n in chosen])
    report = evaluate(ensemble, segments, _vehicle_set(split, args.on), horizons, scaling)
    out_dir = cfg.paths.reports / args.name
    _write_report(report, out_dir, args.name)
    (out_dir / "members.txt").write_text("".join(f"{n}\n" for n in chosen))
    print(f"bagged {', '.join(chosen)}")
    print(_summary(args.name, report))


def cmd_report(cfg: RunConfig, args) -> None:
    reports = cfg.paths.reports
    tables = sorted(reports.glob("*/horizons.csv"))
    if not tables:
        raise StageError(f"no evaluation reports under {reports}; run `trajlstm evaluate` first")
    rows = [r for t in tables for r in read_horizon_table(t) if r[1] in TABLE_HORIZONS]
    with open(reports / "table.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "horizon", "lateral_rmse_m", "long_speed_rmse_mps"])
        for name, h, lat, spd in rows:
            writer.writerow([name, h, repr(lat), repr(spd)])
    text = _pivot(rows)
    (reports / "table.txt").write_text(text)
    sys.stdout.write(text)


def _pivot(rows) -> str:
    names = list(dict.fromkeys(r[0] for r in rows))
    hs = sorted({r[1] for r in rows})
    cell = {(r[0], r[1]): (r[2], r[3]) for r in rows}
    width = max(len("model"), *(len(n) for n in names))
    head = f"{'model':<{width}}  " + " ".join(f"{h:>5}s" for h in hs)
    lines = []
    for title, k in (("lateral position RMSE (m)", 0), ("longitudinal speed RMSE (m/s)", 1)):
        lines += [title, head]
        for n in names:
            vals = [f"{cell[n, h][k]:6.2f}" if (n, h) in cell else "     -" for h in hs]
            lines.append(f"{n:<{width}}  " + " ".join(vals))
        lines.append("")
    return "\n".join(lines)


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic NGSIM-format trajectory file"),
    "ingest": (cmd_ingest, "parse the raw file into per-vehicle tracks"),
    "featurize": (cmd_featurize, "smooth tracks and extract neighbor features and targets"),
    "window": (cmd_window, "split vehicles and cut scaled training windows"),
    "train": (cmd_train, "train one model variant"),
    "evaluate": (cmd_evaluate, "per-horizon RMSE of a trained run"),
    "predict": (cmd_predict, "per-frame predictions for chosen vehicles"),
    "bag": (cmd_bag, "average the outputs of several runs and evaluate"),
    "report": (cmd_report, "collect evaluation reports into one table"),
}


def build_parser() -> argparse.ArgumentParser:
    def add_common(p, default):
        p.add_argument("-c", "--config", default=default, help="run configuration (INI)")
        p.add_argument("--data-root", default=default, help="base directory for artifacts")
        p.add_argument("--set", dest="overrides", action="append", default=default,
                       metavar="SECTION.KEY=VALUE", help="override one config setting")
        p.add_argument("-v", "--verbose", action="store_true", default=default)

    parser = _Parser(prog="trajlstm", description="Highway trajectory prediction pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    add_common(parser, None)
    common = _Parser(add_help=False)
    add_common(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, parents=[common])
        if name in ("train", "evaluate", "predict"):
            p.add_argument("--run", help="run name (default: [train] name or the variant)")
        if name in ("train", "evaluate", "predict", "window"):
            p.add_argument("--variant", help="model variant (overrides [model] variant)")
        if name == "train":
            p.add_argument("--seed", type=int, help="training seed (overrides [train] seed)")
            p.add_argument("--max-steps", type=int, help="stop after this many updates")
        if name in ("evaluate", "predict"):
            p.add_argument("--checkpoint", help="checkpoint file (default: the run's final.ckpt)")
        if name in ("evaluate", "bag"):
            p.add_argument("--on", choices=("test", "validation", "train"), default="test",
                           help="vehicle set to evaluate (default: test)")
        if name == "predict":
            p.add_argument("--vehicles", help="comma-separated vehicle ids (default: test vehicles)")
        if name == "bag":
            p.add_argument("--members", help="comma-separated run names (default: best K of all runs)")
            p.add_argument("-k", type=int, default=4, help="ensemble size when selecting (default 4)")
            p.add_argument("--name", default="bagged", help="report name (default: bagged)")
    return parser


def _overrides(args) -> list[str]:
    items = list(args.overrides or [])
    if getattr(args, "variant", None):
        items.append(f"model.variant={args.variant}")
    if getattr(args, "seed", None) is not None:
        items.append(f"train.seed={args.seed}")
    if getattr(args, "run", None):
        items.append(f"train.name={args.run}")
    return items


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    stage = args.command
    try:
        cfg = load_config(args.config, _overrides(args), args.data_root)
    except (ConfigError, ValueError) as exc:
        print(f"trajlstm {stage}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with np.errstate(all="ignore"):
            COMMANDS[stage][0](cfg, args)
    except DivergenceError as exc:
        where = f"; diagnostic checkpoint {exc.checkpoint}" if exc.checkpoint else ""
        print(f"trajlstm {stage}: numeric failure: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StageError, IngestError, SmoothingError, SceneError, DatasetError, EvaluationError,
            CheckpointError, TrainingError, ShapeError, OSError) as exc:
        print(f"trajlstm {stage}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
