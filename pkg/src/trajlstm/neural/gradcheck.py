"""Finite-difference verification of the analytic gradients."""
from __future__ import annotations

import numpy as np

from .model import ModelParams, model_backward, model_forward, mse_loss


def numeric_gradient(params: ModelParams, inputs, targets, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of the MSE loss, one coordinate at a time."""
    work = params.copy()
    out = {}
    for name, arr in work.arrays.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + eps
            plus = mse_loss(model_forward(work, inputs)[0], targets)
            flat[k] = keep - eps
            minus = mse_loss(model_forward(work, inputs)[0], targets)
            flat[k] = keep
            gflat[k] = (plus - minus) / (2.0 * eps)
        out[name] = g
    return out


def gradient_check(params: ModelParams, inputs, targets, eps: float = 1e-5,
                   analytic: dict[str, np.ndarray] | None = None) -> float:
    """Largest relative disagreement between analytic and numeric gradients.

    Per coordinate: ``|a - d| / max(|a|, |d|, 1e-12)``.  ``analytic``
    defaults to the backpropagated gradient.
    """
    if analytic is None:
        analytic = model_backward(params, inputs, targets)[1]
    numeric = numeric_gradient(params, inputs, targets, eps)
    worst = 0.0
    for name in params.arrays:
        a, d = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(d)), 1e-12)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - d) / denom)))
    return worst
