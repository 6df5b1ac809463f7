"""Pure numpy LSTM recurrence, used when the compiled kernel is unavailable.

``lstm_forward(pre, w_h, h0, m0)``
    ``pre`` is ``(T, B, 4H)``: the input projection plus bias for every
    step.  Returns hidden outputs ``(T, B, H)``, memories ``(T, B, H)`` and
    activated gates ``(T, B, 4H)`` ordered forget, input, candidate, output.

``lstm_backward(d_hs, gates, ms, m0, w_h)``
    Given the loss gradient w.r.t. every hidden output, returns the
    gradient w.r.t. the gate pre-activations and w.r.t. the initial hidden
    and memory states.
"""
import numpy as np

NAME = "python"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(pre, w_h, h0, m0):
    T, B, G = pre.shape
    H = G // 4
    if w_h.shape != (G, H):
        raise ValueError(f"recurrent weights have shape {w_h.shape}, expected {(G, H)}")
    if h0.shape != (B, H) or m0.shape != (B, H):
        raise ValueError("initial state shape mismatch")
    gates = np.empty((T, B, G))
    hs = np.empty((T, B, H))
    ms = np.empty((T, B, H))
    w_ht = w_h.T
    h, m = h0, m0
    for t in range(T):
        z = pre[t] + h @ w_ht
        f = _sigmoid(z[:, :H])
        i = _sigmoid(z[:, H:2 * H])
        c = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        m = f * m + i * c
        h = o * np.tanh(m)
        gates[t, :, :H], gates[t, :, H:2 * H] = f, i
        gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:] = c, o
        hs[t], ms[t] = h, m
    return hs, ms, gates


def lstm_backward(d_hs, gates, ms, m0, w_h):
    T, B, G = gates.shape
    H = G // 4
    if d_hs.shape != (T, B, H):
        raise ValueError("output gradient shape mismatch")
    d_pre = np.empty((T, B, G))
    dh_next = np.zeros((B, H))
    dm_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        f, i = gates[t, :, :H], gates[t, :, H:2 * H]
        c, o = gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:]
        tm = np.tanh(ms[t])
        m_prev = m0 if t == 0 else ms[t - 1]
        dh = d_hs[t] + dh_next
        dm = dm_next + dh * o * (1.0 - tm * tm)
        d_pre[t, :, :H] = dm * m_prev * f * (1.0 - f)
        d_pre[t, :, H:2 * H] = dm * c * i * (1.0 - i)
        d_pre[t, :, 2 * H:3 * H] = dm * i * (1.0 - c * c)
        d_pre[t, :, 3 * H:] = dh * tm * o * (1.0 - o)
        dm_next = dm * f
        dh_next = d_pre[t] @ w_h
    return d_pre, dh_next, dm_next
