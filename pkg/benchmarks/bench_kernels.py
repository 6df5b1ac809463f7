"""Compare the compiled and numpy LSTM kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--hidden 256]

Three workloads per backend: the bare recurrence (forward and backward) on
a mini-batch, a whole-model forward pass over a long single trajectory,
and one training step (forward + backward) on a mini-batch of windows.
Reports the best of ``--repeat`` runs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from trajlstm.neural import _backend, init_params, model_backward, model_forward, variant_config


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--track-steps", type=int, default=5000)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--window", type=int, default=100)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    h = args.hidden
    cfg = variant_config("reference", lstm_size=h)
    params = init_params(cfg, 0)
    track = rng.normal(size=(args.track_steps, cfg.input_size))
    xb = rng.normal(size=(args.batch, args.window, cfg.input_size))
    tb = rng.normal(size=(args.batch, args.window, cfg.output_size))
    pre = rng.normal(size=(args.window, args.batch, 4 * h))
    w_h = params["lstm0.W"][:, cfg.input_size:].copy()
    h0 = np.zeros((args.batch, h))

    rows = []
    for name in _backend.available():
        k = _backend.load(name)
        hs, ms, gates = k.lstm_forward(pre, w_h, h0, h0)
        d_hs = rng.normal(size=hs.shape)
        rows.append((name,
                     best_of(args.repeat, lambda: k.lstm_forward(pre, w_h, h0, h0)),
                     best_of(args.repeat, lambda: k.lstm_backward(d_hs, gates, ms, h0, w_h)),
                     best_of(args.repeat, lambda: model_forward(params, track, kernels=k)),
                     best_of(args.repeat, lambda: model_backward(params, xb, tb, kernels=k))))

    print(f"hidden={h} batch={args.batch} window={args.window} track={args.track_steps} "
          f"(best of {args.repeat}, seconds)")
    print(f"{'backend':<8} {'recur fwd':>10} {'recur bwd':>10} {'track fwd':>10} {'train step':>10}")
    for name, *vals in rows:
        print(f"{name:<8} " + " ".join(f"{v:10.4f}" for v in vals))
    if len(rows) == 2:
        ratios = [p / c for c, p in zip(rows[0][1:], rows[1][1:])]
        print(f"{'speedup':<8} " + " ".join(f"{r:9.2f}x" for r in ratios))


if __name__ == "__main__":
    main()
