"""Time-major batched LSTM layer kernels.

These are the hot loops of training and inference. They are written in
the numpy subset numba compiles, so they run jitted by default and as
plain vectorized numpy when ``SCIP_NO_NUMBA=1`` is set (see
``scip.accel``). Gate order in the fused weight matrices is
input, forget, cell-candidate, output.

Shapes (float64, C-contiguous):
    x      (T, B, I)   layer input sequence
    wx     (I, 4H)     input weights
    wh     (H, 4H)     recurrent weights
    b      (4H,)       bias
"""

import numpy as np

from ..accel import jit_kernel


@jit_kernel
def lstm_layer_forward(x, wx, wh, b):
    """Run one LSTM layer over a sequence.

    Returns (h, c, gates): hidden states (T, B, H), cell states
    (T, B, H), and post-activation gate values (T, B, 4H) cached for the
    backward pass. Initial state is zero.
    """
    T, B, _ = x.shape
    H = wh.shape[0]
    h = np.zeros((T, B, H))
    c = np.zeros((T, B, H))
    gates = np.zeros((T, B, 4 * H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        z = np.dot(x[t], wx) + np.dot(h_prev, wh) + b
        gi = 1.0 / (1.0 + np.exp(-z[:, 0:H]))
        gf = 1.0 / (1.0 + np.exp(-z[:, H : 2 * H]))
        gg = np.tanh(z[:, 2 * H : 3 * H])
        go = 1.0 / (1.0 + np.exp(-z[:, 3 * H : 4 * H]))
        c_t = gf * c_prev + gi * gg
        h_t = go * np.tanh(c_t)
        gates[t, :, 0:H] = gi
        gates[t, :, H : 2 * H] = gf
        gates[t, :, 2 * H : 3 * H] = gg
        gates[t, :, 3 * H : 4 * H] = go
        c[t] = c_t
        h[t] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, c, gates


@jit_kernel
def lstm_layer_backward(x, wx, wh, h, c, gates, dh_out):
    """Backpropagation through time for one layer.

    ``dh_out`` (T, B, H) is the loss gradient arriving at each step's
    hidden output from above; the recurrent contribution is accumulated
    internally. Returns (dx, dwx, dwh, db).
    """
    T, B, I = x.shape
    H = wh.shape[0]
    dz_all = np.zeros((T, B, 4 * H))
    wh_t = wh.T.copy()
    wx_t = wx.T.copy()
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dht = dh + dh_out[t]
        gi = gates[t, :, 0:H]
        gf = gates[t, :, H : 2 * H]
        gg = gates[t, :, 2 * H : 3 * H]
        go = gates[t, :, 3 * H : 4 * H]
        tc = np.tanh(c[t])
        dc = dc + dht * go * (1.0 - tc * tc)
        if t > 0:
            c_prev = c[t - 1]
        else:
            c_prev = np.zeros((B, H))
        dz_all[t, :, 0:H] = (dc * gg) * gi * (1.0 - gi)
        dz_all[t, :, H : 2 * H] = (dc * c_prev) * gf * (1.0 - gf)
        dz_all[t, :, 2 * H : 3 * H] = (dc * gi) * (1.0 - gg * gg)
        dz_all[t, :, 3 * H : 4 * H] = (dht * tc) * go * (1.0 - go)
        dh = np.dot(dz_all[t], wh_t)
        dc = dc * gf

    dz_flat = dz_all.reshape(T * B, 4 * H)
    x_flat = x.reshape(T * B, I)
    dwx = np.dot(x_flat.T.copy(), dz_flat)
    h_prev_seq = np.zeros((T, B, H))
    h_prev_seq[1:] = h[: T - 1]
    dwh = np.dot(h_prev_seq.reshape(T * B, H).T.copy(), dz_flat)
    db = dz_flat.sum(axis=0)
    dx = np.dot(dz_flat, wx_t).reshape(T, B, I)
    return dx, dwx, dwh, db
