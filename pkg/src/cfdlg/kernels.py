"""Hot numeric kernels.

Numba-jitted when available; set CFDLG_NO_NUMBA=1 to force the pure-numpy
fallback path (same signatures, same results up to float round-off).
`benchmarks/bench_kernels.py` compares the two paths.
"""
import os

import numpy as np

USE_NUMBA = os.environ.get("CFDLG_NO_NUMBA", "") in ("", "0")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def cos_pair_stats(xn, labels):
    """Mean pairwise cosine within / across label groups.

    xn: (n, d) rows already L2-normalized. Returns (intra_sum, intra_cnt,
    inter_sum, inter_cnt) over all unordered pairs.
    """
    n = xn.shape[0]
    intra_s = 0.0
    inter_s = 0.0
    intra_c = 0
    inter_c = 0
    for i in range(n):
        for j in range(i + 1, n):
            c = 0.0
            for k in range(xn.shape[1]):
                c += xn[i, k] * xn[j, k]
            if labels[i] == labels[j]:
                intra_s += c
                intra_c += 1
            else:
                inter_s += c
                inter_c += 1
    return intra_s, intra_c, inter_s, inter_c


@njit(cache=True)
def cos_pair_stats_sampled(xn, labels, ii, jj):
    """Same as cos_pair_stats but over an explicit list of index pairs."""
    intra_s = 0.0
    inter_s = 0.0
    intra_c = 0
    inter_c = 0
    for p in range(ii.shape[0]):
        i = ii[p]
        j = jj[p]
        c = 0.0
        for k in range(xn.shape[1]):
            c += xn[i, k] * xn[j, k]
        if labels[i] == labels[j]:
            intra_s += c
            intra_c += 1
        else:
            inter_s += c
            inter_c += 1
    return intra_s, intra_c, inter_s, inter_c


@njit(cache=True)
def adam_update(p, g, m, v, t, lr, b1, b2, eps):
    """Fused in-place bias-corrected Adam step on flat float64 arrays."""
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i in range(p.shape[0]):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        mh = m[i] / c1
        vh = v[i] / c2
        p[i] -= lr * mh / (np.sqrt(vh) + eps)


@njit(cache=True)
def lstm_seq_forward(xs, wx, wh, b):
    """Run an LSTM over a sequence.

    xs: (T, d_in); wx: (d_in, 4h); wh: (h, 4h); b: (4h,).
    Gate order i|f|g|o. Returns (hs, cs, gates) with hs/cs of shape
    (T, h) and gates (T, 4h) post-nonlinearity, for use by the backward
    pass.
    """
    T = xs.shape[0]
    h = wh.shape[0]
    hs = np.zeros((T, h))
    cs = np.zeros((T, h))
    gates = np.zeros((T, 4 * h))
    hprev = np.zeros(h)
    cprev = np.zeros(h)
    for t in range(T):
        a = xs[t] @ wx + hprev @ wh + b
        for k in range(h):
            gates[t, k] = 1.0 / (1.0 + np.exp(-a[k]))                # i
            gates[t, h + k] = 1.0 / (1.0 + np.exp(-a[h + k]))        # f
            gates[t, 2 * h + k] = np.tanh(a[2 * h + k])              # g
            gates[t, 3 * h + k] = 1.0 / (1.0 + np.exp(-a[3 * h + k]))  # o
        for k in range(h):
            cs[t, k] = gates[t, h + k] * cprev[k] + gates[t, k] * gates[t, 2 * h + k]
            hs[t, k] = gates[t, 3 * h + k] * np.tanh(cs[t, k])
        hprev = hs[t]
        cprev = cs[t]
    return hs, cs, gates
