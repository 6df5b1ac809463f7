"""Training driver.

Vehicles are trained group by group: each group of (by default) 500
vehicles gets several epochs of shuffled mini-batches before moving on,
and the whole sweep over groups is repeated ``full_passes`` times.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import DatasetSplit, Window, make_vehicle_groups
from .neural import (AdamState, ModelConfig, ModelParams, adam_update, init_params,
                     model_backward, save_checkpoint)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class DivergenceError(TrainingError):
    """Loss became non-finite; a diagnostic checkpoint may have been written."""

    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class TrainSchedule:
    group_size: int = 500
    epochs_per_group: int = 5
    full_passes: int = 20
    minibatch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("group_size", "epochs_per_group", "full_passes", "minibatch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @property
    def effective_epochs(self) -> int:
        return self.epochs_per_group * self.full_passes


@dataclass
class TrainHistory:
    step_losses: list[float] = field(default_factory=list)
    # (pass, group, epoch, mean loss)
    group_epochs: list[tuple[int, int, int, float]] = field(default_factory=list)
    # (pass, elapsed seconds); never written into artifacts
    wall_clock: list[tuple[int, float]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.step_losses)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "loss"])
            for i, loss in enumerate(self.step_losses, start=1):
                writer.writerow([i, repr(loss)])


def audit_split(windows: Sequence[Window], split: DatasetSplit) -> None:
    """Raise if any window comes from a vehicle outside the fitting set."""
    allowed = set(split.fit_vehicle_ids)
    leaked = sorted({w.vehicle_id for w in windows} - allowed)
    if leaked:
        raise TrainingError(f"windows from non-training vehicles: {leaked[:10]}")


def group_windows(windows: Sequence[Window], train_ids: Sequence[int],
                  group_size: int = 500, seed: int = 0) -> list[list[Window]]:
    """Bucket windows by vehicle group; groups with no windows are dropped."""
    by_vehicle: dict[int, list[Window]] = {}
    for w in windows:
        by_vehicle.setdefault(w.vehicle_id, []).append(w)
    groups = []
    for ids in make_vehicle_groups(train_ids, group_size, seed):
        members = [w for vid in ids for w in by_vehicle.get(vid, [])]
        if members:
            groups.append(members)
    return groups


def _stack(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([w.inputs for w in windows]), np.stack([w.targets for w in windows])


def train(config: ModelConfig, groups: Sequence[Sequence[Window]],
          schedule: TrainSchedule = TrainSchedule(), *,
          params: ModelParams | None = None,
          checkpoint_dir: str | Path | None = None,
          max_steps: int | None = None,
          split: DatasetSplit | None = None,
          on_step: Callable[[int, float], None] | None = None) -> tuple[ModelParams, TrainHistory]:
    """Fit a model with Adam on grouped windows.

    Mini-batches are formed from a seeded shuffle of each group's windows
    at every epoch.  With ``checkpoint_dir``, a checkpoint ``pass_XX.ckpt``
    is written after every full pass.  ``max_steps`` stops early after that
    many updates.  Runs are bitwise reproducible for a given seed.
    """
    if not groups or not any(len(g) for g in groups):
        raise TrainingError("no training windows")
    if split is not None:
        audit_split([w for g in groups for w in g], split)
    stacked = [_stack(g) for g in groups]
    for inputs, targets in stacked:
        if inputs.shape[2] != config.input_size:
            raise TrainingError(f"windows have {inputs.shape[2]} features, model expects {config.input_size}")
        if targets.shape[2] != config.output_size:
            raise TrainingError(f"windows have {targets.shape[2]} targets, model expects {config.output_size}")

    init_seq, shuffle_seq = np.random.SeedSequence(schedule.seed).spawn(2)
    if params is None:
        params = init_params(config, int(init_seq.generate_state(1)[0]))
        params.seed = schedule.seed
    rng = np.random.default_rng(shuffle_seq)
    state = AdamState()
    history = TrainHistory()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    started = time.perf_counter()

    for full_pass in range(schedule.full_passes):
        for g, (inputs, targets) in enumerate(stacked):
            for epoch in range(schedule.epochs_per_group):
                order = rng.permutation(len(inputs))
                losses = []
                for lo in range(0, len(order), schedule.minibatch_size):
                    batch = order[lo:lo + schedule.minibatch_size]
                    loss, grads = model_backward(params, inputs[batch], targets[batch])
                    if not math.isfinite(loss) or not all(np.isfinite(v).all() for v in grads.values()):
                        path = None
                        if ckpt_dir is not None:
                            path = ckpt_dir / "diverged.ckpt"
                            save_checkpoint(params, path)
                        raise DivergenceError(
                            f"non-finite loss at step {history.steps + 1} "
                            f"(pass {full_pass}, group {g}, epoch {epoch})", path)
                    params, state = adam_update(params, grads, state, lr=schedule.learning_rate)
                    history.step_losses.append(loss)
                    losses.append(loss)
                    if on_step is not None:
                        on_step(history.steps, loss)
                    if max_steps is not None and history.steps >= max_steps:
                        history.group_epochs.append((full_pass, g, epoch, float(np.mean(losses))))
                        return params, history
                history.group_epochs.append((full_pass, g, epoch, float(np.mean(losses))))
                log.debug("pass %d group %d epoch %d: mean loss %.6g",
                          full_pass, g, epoch, history.group_epochs[-1][3])
        history.wall_clock.append((full_pass, time.perf_counter() - started))
        if ckpt_dir is not None:
            save_checkpoint(params, ckpt_dir / f"pass_{full_pass + 1:02d}.ckpt")
        log.info("pass %d/%d done, last loss %.6g", full_pass + 1, schedule.full_passes,
                 history.step_losses[-1])
    return params, history
