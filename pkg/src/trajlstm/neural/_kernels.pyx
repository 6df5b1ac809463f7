# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence.

Same contract as ``_kernels_py``.  Arrays are C-contiguous float64 and
time-major; gate blocks are ordered forget, input, candidate, output.
The recurrent products go through BLAS dgemm and the gate arithmetic is a
fused loop.  The transcendental part is one vectorized ``tanh`` per step
over the whole gate block (sigmoid(z) = (1 + tanh(z/2)) / 2), which is far
cheaper than a libm call per element.
"""
import numpy as np

from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


def lstm_forward(double[:, :, ::1] pre, double[:, ::1] w_h,
                 double[:, ::1] h0, double[:, ::1] m0):
    cdef int T = pre.shape[0]
    cdef int B = pre.shape[1]
    cdef int G = pre.shape[2]
    cdef int H = G // 4
    if w_h.shape[0] != G or w_h.shape[1] != H:
        raise ValueError(f"recurrent weights have shape ({w_h.shape[0]}, {w_h.shape[1]}), expected ({G}, {H})")
    if h0.shape[0] != B or h0.shape[1] != H or m0.shape[0] != B or m0.shape[1] != H:
        raise ValueError("initial state shape mismatch")

    gates_arr = np.empty((T, B, G))
    hs_arr = np.empty((T, B, H))
    ms_arr = np.empty((T, B, H))
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] ms = ms_arr

    cdef char transa = b'T'
    cdef char transb = b'N'
    cdef double one = 1.0
    cdef int t, b, j
    cdef double f, i, m_prev
    cdef double *h_prev
    cdef double *g

    for t in range(T):
        memcpy(&gates[t, 0, 0], &pre[t, 0, 0], B * G * sizeof(double))
        h_prev = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
        if H > 0 and B > 0:
            # gates[t] (B x G) += h_prev (B x H) @ w_h.T, in column-major terms
            dgemm(&transa, &transb, &G, &B, &H, &one, &w_h[0, 0], &H,
                  h_prev, &H, &one, &gates[t, 0, 0], &G)
        for b in range(B):
            g = &gates[t, b, 0]
            for j in range(H):
                g[j] *= 0.5
                g[H + j] *= 0.5
                g[3 * H + j] *= 0.5
        step = gates_arr[t]
        np.tanh(step, out=step)
        for b in range(B):
            g = &gates[t, b, 0]
            for j in range(H):
                f = 0.5 * (1.0 + g[j])
                i = 0.5 * (1.0 + g[H + j])
                g[j] = f
                g[H + j] = i
                g[3 * H + j] = 0.5 * (1.0 + g[3 * H + j])
                m_prev = m0[b, j] if t == 0 else ms[t - 1, b, j]
                ms[t, b, j] = f * m_prev + i * g[2 * H + j]
        out = hs_arr[t]
        np.tanh(ms_arr[t], out=out)
        for b in range(B):
            g = &gates[t, b, 0]
            for j in range(H):
                hs[t, b, j] *= g[3 * H + j]
    return hs_arr, ms_arr, gates_arr


def lstm_backward(double[:, :, ::1] d_hs, double[:, :, ::1] gates,
                  double[:, :, ::1] ms, double[:, ::1] m0, double[:, ::1] w_h):
    cdef int T = gates.shape[0]
    cdef int B = gates.shape[1]
    cdef int G = gates.shape[2]
    cdef int H = G // 4
    if d_hs.shape[0] != T or d_hs.shape[1] != B or d_hs.shape[2] != H:
        raise ValueError("output gradient shape mismatch")
    if ms.shape[0] != T or ms.shape[1] != B or ms.shape[2] != H:
        raise ValueError("memory shape mismatch")

    d_pre_arr = np.empty((T, B, G))
    dh_next_arr = np.zeros((B, H))
    dm_next_arr = np.zeros((B, H))
    tanh_m_arr = np.tanh(np.asarray(ms))
    cdef double[:, :, ::1] d_pre = d_pre_arr
    cdef double[:, ::1] dh_next = dh_next_arr
    cdef double[:, ::1] dm_next = dm_next_arr
    cdef double[:, :, ::1] tanh_m = tanh_m_arr

    cdef char transa = b'N'
    cdef char transb = b'N'
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef int t, b, j
    cdef double f, i, c, o, tm, dh, dm, m_prev

    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    f = gates[t, b, j]
                    i = gates[t, b, H + j]
                    c = gates[t, b, 2 * H + j]
                    o = gates[t, b, 3 * H + j]
                    tm = tanh_m[t, b, j]
                    m_prev = m0[b, j] if t == 0 else ms[t - 1, b, j]
                    dh = d_hs[t, b, j] + dh_next[b, j]
                    dm = dm_next[b, j] + dh * o * (1.0 - tm * tm)
                    d_pre[t, b, j] = dm * m_prev * f * (1.0 - f)
                    d_pre[t, b, H + j] = dm * c * i * (1.0 - i)
                    d_pre[t, b, 2 * H + j] = dm * i * (1.0 - c * c)
                    d_pre[t, b, 3 * H + j] = dh * tm * o * (1.0 - o)
                    dm_next[b, j] = dm * f
            if H > 0 and B > 0:
                # dh_next (B x H) = d_pre[t] (B x G) @ w_h
                dgemm(&transa, &transb, &H, &B, &G, &one, &w_h[0, 0], &H,
                      &d_pre[t, 0, 0], &G, &zero, &dh_next[0, 0], &H)
    return d_pre_arr, dh_next_arr, dm_next_arr
