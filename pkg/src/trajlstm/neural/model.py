"""Sequence model: stacked LSTM, time-distributed dense layers, linear output.

The target vehicle's first ``bypass_width`` input features can be routed
around the recurrent layers, either into the output layer (``to_output``)
or into the first dense layer (``before_dense``).

Parameters live in a flat, ordered ``name -> ndarray`` mapping so that the
optimizer, the gradient checker and the checkpoint format can treat them
uniformly:

``lstm{l}.W``  ``(4H, in + H)``  gate rows ordered forget, input, candidate, output
``lstm{l}.b``  ``(4H,)``
``dense{j}.W`` ``(out, in)`` and ``dense{j}.b``
``out.W``, ``out.b``
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import kernels as _default_kernels

BYPASS_MODES = ("to_output", "before_dense", "none")
ACTIVATIONS = ("tanh", "linear")
GATES = ("forget", "input", "candidate", "output")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 49
    lstm_layers: tuple[int, ...] = (256,)
    dense_layers: tuple[tuple[int, str], ...] = ((256, "tanh"), (128, "tanh"))
    bypass_mode: str = "to_output"
    bypass_width: int = 4
    output_size: int = 20
    use_type: bool = False
    use_ff: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lstm_layers", tuple(int(h) for h in self.lstm_layers))
        object.__setattr__(self, "dense_layers",
                           tuple((int(n), str(a)) for n, a in self.dense_layers))
        if self.input_size <= 0 or self.output_size <= 0:
            raise ShapeError("input and output sizes must be positive")
        if not self.lstm_layers or any(h <= 0 for h in self.lstm_layers):
            raise ShapeError("at least one LSTM layer with positive size is required")
        if any(n <= 0 or a not in ACTIVATIONS for n, a in self.dense_layers):
            raise ShapeError(f"bad dense layer spec {self.dense_layers}")
        if self.bypass_mode not in BYPASS_MODES:
            raise ShapeError(f"bypass_mode must be one of {BYPASS_MODES}")
        if self.bypass_mode == "before_dense" and not self.dense_layers:
            raise ShapeError("before_dense bypass needs at least one dense layer")
        if not 0 <= self.bypass_width <= self.input_size:
            raise ShapeError("bypass_width must be within the input size")

    @property
    def bypass(self) -> int:
        return 0 if self.bypass_mode == "none" else self.bypass_width

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Expected shape of every named parameter."""
        shapes = {}
        width = self.input_size
        for l, h in enumerate(self.lstm_layers):
            shapes[f"lstm{l}.W"] = (4 * h, width + h)
            shapes[f"lstm{l}.b"] = (4 * h,)
            width = h
        for j, (n, _) in enumerate(self.dense_layers):
            if j == 0 and self.bypass_mode == "before_dense":
                width += self.bypass
            shapes[f"dense{j}.W"] = (n, width)
            shapes[f"dense{j}.b"] = (n,)
            width = n
        if self.bypass_mode == "to_output":
            width += self.bypass
        shapes["out.W"] = (self.output_size, width)
        shapes["out.b"] = (self.output_size,)
        return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    seed: int | None = None
    step: int = 0

    def __post_init__(self):
        expected = self.config.shapes()
        if list(self.arrays) != list(expected):
            raise ShapeError(f"parameter names {list(self.arrays)} != {list(expected)}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.arrays[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return replace(self, arrays={k: v.copy() for k, v in self.arrays.items()})

    def gate(self, layer: int, name: str) -> tuple[np.ndarray, np.ndarray]:
        """View of one gate's ``(W, b)`` inside LSTM layer ``layer``."""
        h = self.config.lstm_layers[layer]
        k = GATES.index(name)
        return (self.arrays[f"lstm{layer}.W"][k * h:(k + 1) * h],
                self.arrays[f"lstm{layer}.b"][k * h:(k + 1) * h])

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate biases at 1.

    For LSTM layers the fan-out of each gate block is the layer size.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if name.endswith(".b"):
            arrays[name] = np.zeros(shape)
            if name.startswith("lstm"):
                arrays[name][:shape[0] // 4] = 1.0
            continue
        fan_out, fan_in = shape
        if name.startswith("lstm"):
            fan_out //= 4
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(config, arrays, seed=seed)


def zero_params(config: ModelConfig) -> ModelParams:
    return ModelParams(config, {k: np.zeros(s) for k, s in config.shapes().items()})


@dataclass
class LstmState:
    h: np.ndarray
    m: np.ndarray


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_step(w: np.ndarray, b: np.ndarray, x_t: np.ndarray, prev: LstmState) -> LstmState:
    """One cell update on the concatenation ``[x_t, h_prev]``."""
    h_size = b.shape[0] // 4
    x_t = np.asarray(x_t, dtype=np.float64)
    if w.shape != (4 * h_size, x_t.shape[-1] + h_size) or prev.h.shape[-1] != h_size \
            or prev.m.shape[-1] != h_size:
        raise ShapeError("lstm_step dimension mismatch")
    z = w @ np.concatenate([x_t, prev.h]) + b
    f = _sigmoid(z[:h_size])
    i = _sigmoid(z[h_size:2 * h_size])
    c = np.tanh(z[2 * h_size:3 * h_size])
    o = _sigmoid(z[3 * h_size:])
    m = f * prev.m + i * c
    return LstmState(o * np.tanh(m), m)


def _activate(z, kind):
    return np.tanh(z) if kind == "tanh" else z


@dataclass
class _Cache:
    x: np.ndarray
    lstm: list = field(default_factory=list)
    dense_in: list = field(default_factory=list)
    dense_out: list = field(default_factory=list)
    out_in: np.ndarray | None = None


def _as_batch(sequence) -> tuple[np.ndarray, bool]:
    x = np.asarray(sequence, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError("sequence must be (T, N) or (B, T, N)")
    return x, False


def _initial_states(config, initial, batch):
    states = []
    for l, h in enumerate(config.lstm_layers):
        if initial is None:
            states.append((np.zeros((batch, h)), np.zeros((batch, h))))
            continue
        s = initial[l]
        hh = np.array(np.broadcast_to(np.asarray(s.h, dtype=np.float64), (batch, h)))
        mm = np.array(np.broadcast_to(np.asarray(s.m, dtype=np.float64), (batch, h)))
        states.append((hh, mm))
    return states


def _forward(params: ModelParams, x: np.ndarray, initial, kernels):
    cfg = params.config
    batch, steps, width = x.shape
    if width != cfg.input_size:
        raise ShapeError(f"sequence width {width} does not match model input size {cfg.input_size}")
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    cache = _Cache(xt)
    layer_in = xt
    finals = []
    for l, (h0, m0) in enumerate(_initial_states(cfg, initial, batch)):
        w, b = params[f"lstm{l}.W"], params[f"lstm{l}.b"]
        n_in = layer_in.shape[2]
        w_h = np.ascontiguousarray(w[:, n_in:])
        pre = (layer_in.reshape(steps * batch, n_in) @ w[:, :n_in].T + b).reshape(steps, batch, -1)
        hs, ms, gates = kernels.lstm_forward(np.ascontiguousarray(pre), w_h, h0, m0)
        cache.lstm.append((layer_in, h0, m0, hs, ms, gates, w_h))
        finals.append(LstmState(hs[-1].copy() if steps else h0.copy(),
                                ms[-1].copy() if steps else m0.copy()))
        layer_in = hs

    z = layer_in.reshape(steps * batch, -1)
    bypass = xt[:, :, :cfg.bypass].reshape(steps * batch, cfg.bypass)
    for j, (_, act) in enumerate(cfg.dense_layers):
        if j == 0 and cfg.bypass_mode == "before_dense":
            z = np.concatenate([z, bypass], axis=1)
        cache.dense_in.append(z)
        z = _activate(z @ params[f"dense{j}.W"].T + params[f"dense{j}.b"], act)
        cache.dense_out.append(z)
    if cfg.bypass_mode == "to_output":
        z = np.concatenate([z, bypass], axis=1)
    cache.out_in = z
    y = z @ params["out.W"].T + params["out.b"]
    return y.reshape(steps, batch, -1).transpose(1, 0, 2), finals, cache


def model_forward(params: ModelParams, sequence, initial=None, kernels=None):
    """Run the model over a ``(T, N)`` or ``(B, T, N)`` sequence.

    ``initial`` is one :class:`LstmState` per recurrent layer (zeros when
    omitted).  Returns the outputs, shaped like the input with the last axis
    replaced by ``output_size``, and the final state of every layer.
    """
    x, single = _as_batch(sequence)
    y, finals, _ = _forward(params, x, initial, kernels or _default_kernels)
    if single:
        y = y[0]
        finals = [LstmState(s.h[0], s.m[0]) for s in finals]
    return y, finals


def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((outputs - targets) ** 2))


def model_backward(params: ModelParams, sequence, target, kernels=None):
    """Mean-squared-error loss and its exact gradient w.r.t. every parameter.

    The mean runs over batch, time steps and outputs.  Gradients come back
    in a dict with the same names and shapes as ``params.arrays``.
    """
    kernels = kernels or _default_kernels
    x, single = _as_batch(sequence)
    target = np.asarray(target, dtype=np.float64)
    if single:
        target = target[None]
    y, _, cache = _forward(params, x, None, kernels)
    if target.shape != y.shape:
        raise ShapeError(f"target shape {target.shape} does not match output shape {y.shape}")
    cfg = params.config
    batch, steps, _ = x.shape
    diff = y - target
    loss = float(np.mean(diff ** 2))

    grads = {}
    dy = (2.0 / diff.size) * diff.transpose(1, 0, 2).reshape(steps * batch, -1)
    grads["out.W"] = dy.T @ cache.out_in
    grads["out.b"] = dy.sum(axis=0)
    dz = dy @ params["out.W"]
    if cfg.bypass_mode == "to_output":
        dz = dz[:, :dz.shape[1] - cfg.bypass]
    for j in range(len(cfg.dense_layers) - 1, -1, -1):
        if cfg.dense_layers[j][1] == "tanh":
            dz = dz * (1.0 - cache.dense_out[j] ** 2)
        grads[f"dense{j}.W"] = dz.T @ cache.dense_in[j]
        grads[f"dense{j}.b"] = dz.sum(axis=0)
        dz = dz @ params[f"dense{j}.W"]
        if j == 0 and cfg.bypass_mode == "before_dense":
            dz = dz[:, :dz.shape[1] - cfg.bypass]

    d_hs = np.ascontiguousarray(dz.reshape(steps, batch, -1))
    for l in range(len(cfg.lstm_layers) - 1, -1, -1):
        layer_in, h0, m0, hs, ms, gates, w_h = cache.lstm[l]
        d_pre, _, _ = kernels.lstm_backward(d_hs, gates, ms, m0, w_h)
        n_in = layer_in.shape[2]
        h_prev = np.concatenate([h0[None], hs[:-1]], axis=0)
        dp = d_pre.reshape(steps * batch, -1)
        grads[f"lstm{l}.W"] = np.concatenate(
            [dp.T @ layer_in.reshape(steps * batch, n_in),
             dp.T @ h_prev.reshape(steps * batch, -1)], axis=1)
        grads[f"lstm{l}.b"] = dp.sum(axis=0)
        if l > 0:
            w = params[f"lstm{l}.W"]
            d_hs = np.ascontiguousarray((dp @ w[:, :n_in]).reshape(steps, batch, n_in))

    return loss, {name: grads[name] for name in params.arrays}
