"""Pure numpy versions of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and semantics; the package picks one at import time.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def lstm_forward(xg, w_h, h0, c0):
    """Run the LSTM recurrence over precomputed input projections.

    xg: (T, B, 4H) input pre-activations (bias included), gate order i, f, g, o.
    w_h: (H, 4H) state-to-state weights.
    Returns hs (T+1, B, H), cs (T+1, B, H) and activated gates (T, B, 4H).
    """
    T, B, G = xg.shape
    H = G // 4
    dtype = xg.dtype
    hs = np.empty((T + 1, B, H), dtype=dtype)
    cs = np.empty((T + 1, B, H), dtype=dtype)
    gates = np.empty((T, B, G), dtype=dtype)
    hs[0] = h0
    cs[0] = c0
    for t in range(T):
        z = xg[t] + hs[t] @ w_h
        a = gates[t]
        a[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
        cs[t + 1] = a[:, H : 2 * H] * cs[t] + a[:, :H] * a[:, 2 * H : 3 * H]
        hs[t + 1] = a[:, 3 * H :] * np.tanh(cs[t + 1])
    return hs, cs, gates


def lstm_backward(dh, dc_last, w_h, hs, cs, gates):
    """Backpropagate through the recurrence.

    dh: (T, B, H) gradient w.r.t. hs[1:]; dc_last: (B, H) gradient w.r.t. cs[T].
    Returns dz (T, B, 4H) w.r.t. gate pre-activations, dh0 and dc0.
    """
    T, B, H = dh.shape
    dz = np.empty((T, B, 4 * H), dtype=dh.dtype)
    dh_next = np.zeros((B, H), dtype=dh.dtype)
    dc_next = np.array(dc_last, dtype=dh.dtype, copy=True)
    for t in range(T - 1, -1, -1):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        tc = np.tanh(cs[t + 1])
        dht = dh[t] + dh_next
        dc = dc_next + dht * o * (1.0 - tc * tc)
        d = dz[t]
        d[:, :H] = dc * g * i * (1.0 - i)
        d[:, H : 2 * H] = dc * cs[t] * f * (1.0 - f)
        d[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        d[:, 3 * H :] = dht * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ w_h.T
    return dz, dh_next, dc_next


def col2im(dcols, out_shape, kf, kt, sf, st):
    """Scatter-add patch gradients back onto the padded input grid.

    dcols: (B, Fo, To, C, kf, kt); out_shape: (B, C, Fp, Tp).
    """
    B, Fo, To = dcols.shape[:3]
    dx = np.zeros(out_shape, dtype=dcols.dtype)
    for i in range(kf):
        for j in range(kt):
            dx[:, :, i : i + sf * (Fo - 1) + 1 : sf, j : j + st * (To - 1) + 1 : st] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dx


def edit_ops(ref, hyp):
    """Levenshtein distance with a substitution/insertion/deletion breakdown.

    ``ref`` and ``hyp`` are int sequences. Backtrace prefers match/substitution,
    then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ri == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)
    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return d[n][m], subs, ins, dels
