"""Checkpoint files.

Layout: an ASCII header of ``key=value`` lines, started by the magic line
``trajlstm-checkpoint`` and closed by ``end``, followed by the parameter
blocks as little-endian float64, row-major, in the order of the
``block=<name>:<d1>x<d2>`` header lines.  Example header::

    trajlstm-checkpoint
    version=1
    seed=0
    step=1200
    input_size=49
    lstm_layers=256
    dense_layers=256:tanh,128:tanh
    bypass_mode=to_output
    bypass_width=4
    output_size=20
    use_type=0
    use_ff=1
    block=lstm0.W:1024x305
    block=lstm0.b:1024
    ...
    end
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams, ShapeError

MAGIC = "trajlstm-checkpoint"
VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def config_to_lines(config: ModelConfig) -> list[str]:
    return [
        f"input_size={config.input_size}",
        f"lstm_layers={','.join(map(str, config.lstm_layers))}",
        f"dense_layers={','.join(f'{n}:{a}' for n, a in config.dense_layers)}",
        f"bypass_mode={config.bypass_mode}",
        f"bypass_width={config.bypass_width}",
        f"output_size={config.output_size}",
        f"use_type={int(config.use_type)}",
        f"use_ff={int(config.use_ff)}",
    ]


def config_from_meta(meta: dict[str, str]) -> ModelConfig:
    dense = []
    if meta["dense_layers"]:
        for item in meta["dense_layers"].split(","):
            n, a = item.split(":")
            dense.append((int(n), a))
    return ModelConfig(
        input_size=int(meta["input_size"]),
        lstm_layers=tuple(int(h) for h in meta["lstm_layers"].split(",")),
        dense_layers=tuple(dense),
        bypass_mode=meta["bypass_mode"],
        bypass_width=int(meta["bypass_width"]),
        output_size=int(meta["output_size"]),
        use_type=meta["use_type"] == "1",
        use_ff=meta["use_ff"] == "1",
    )


def encode_checkpoint(params: ModelParams) -> bytes:
    lines = [MAGIC, f"version={VERSION}",
             f"seed={'none' if params.seed is None else params.seed}",
             f"step={params.step}"]
    lines += config_to_lines(params.config)
    for name, arr in params.arrays.items():
        lines.append(f"block={name}:{'x'.join(map(str, arr.shape))}")
    lines.append("end")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays.values())
    return ("\n".join(lines) + "\n").encode("ascii") + payload


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    """Write atomically: a temporary file in the same directory is renamed over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode_checkpoint(params))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def decode_checkpoint(data: bytes) -> ModelParams:
    pos = 0
    meta: dict[str, str] = {}
    blocks: list[tuple[str, tuple[int, ...]]] = []
    first = True
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise TruncatedCheckpointError("header is not terminated")
        line = data[pos:nl].decode("ascii", "replace")
        pos = nl + 1
        if first:
            if line != MAGIC:
                raise CheckpointError(f"not a checkpoint (magic {line!r})")
            first = False
            continue
        if line == "end":
            break
        key, _, value = line.partition("=")
        if key == "block":
            name, _, dims = value.partition(":")
            blocks.append((name, tuple(int(d) for d in dims.split("x"))))
        else:
            meta[key] = value

    if meta.get("version") != str(VERSION):
        raise CheckpointVersionError(f"checkpoint version {meta.get('version')!r}, expected {VERSION}")
    try:
        config = config_from_meta(meta)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad model configuration in header: {exc}") from exc
    expected = config.shapes()
    declared = dict(blocks)
    if list(declared) != list(expected) or any(declared[k] != v for k, v in expected.items()):
        mismatched = [k for k in expected if declared.get(k) != expected[k]]
        raise CheckpointShapeError(
            f"parameter blocks do not match the header configuration: {mismatched or list(declared)}")

    need = 8 * sum(int(np.prod(s)) for s in expected.values())
    payload = data[pos:]
    if len(payload) < need:
        raise TruncatedCheckpointError(f"payload has {len(payload)} bytes, expected {need}")
    if len(payload) > need:
        raise CheckpointError(f"{len(payload) - need} trailing bytes after parameter blocks")

    arrays = {}
    off = 0
    for name, shape in expected.items():
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
        off += 8 * n
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    try:
        return ModelParams(config, arrays, seed=seed, step=int(meta.get("step", 0)))
    except ShapeError as exc:
        raise CheckpointShapeError(str(exc)) from exc


def load_checkpoint(path: str | Path) -> ModelParams:
    return decode_checkpoint(Path(path).read_bytes())
