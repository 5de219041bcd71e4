"""Minimal neural substrate: MLPs, an LSTM cell, Adam, gradient checking.

All math is float64; checkpoints are stored as float32 blocks. Every
forward pass is a pure function of (params, input).
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels

MAGIC = b"CFNET1\x00"

_ACTS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
    "identity": (lambda z: z, lambda z, y: np.ones_like(z)),
}


@dataclass
class Mlp:
    weights: list          # (fan_in, fan_out) per layer
    biases: list
    acts: list             # activation name per layer

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]


def init_mlp(sizes, acts, rng):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; sizes = [in, h..., out]."""
    if len(acts) != len(sizes) - 1:
        raise ValueError("one activation per layer required")
    ws, bs = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fi)
        ws.append(rng.uniform(-lim, lim, size=(fi, fo)))
        bs.append(rng.uniform(-lim, lim, size=fo))
    return Mlp(ws, bs, list(acts))


def mlp_forward(mlp, x):
    y, _ = mlp_forward_cache(mlp, x)
    return y


def mlp_forward_cache(mlp, x):
    """Forward pass keeping per-layer (input, pre-act, post-act) for backward."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mlp.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != net dim {mlp.in_dim}")
    cache = []
    h = x
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.acts):
        z = h @ w + b
        y = _ACTS[act][0](z)
        cache.append((h, z, y))
        h = y
    return h, cache


def mlp_backward(mlp, x, gout, cache=None):
    """Gradients of a scalar loss with output-gradient `gout`.

    Returns (grads, gin) where grads matches param_list(mlp) layout.
    """
    if cache is None:
        _, cache = mlp_forward_cache(mlp, x)
    gout = np.asarray(gout, dtype=float)
    if gout.shape != cache[-1][2].shape:
        raise ValueError("upstream gradient shape mismatch")
    gws = [None] * len(mlp.weights)
    gbs = [None] * len(mlp.biases)
    g = gout
    for li in range(len(mlp.weights) - 1, -1, -1):
        h, z, y = cache[li]
        gz = g * _ACTS[mlp.acts[li]][1](z, y)
        if gz.ndim == 1:
            gws[li] = np.outer(h, gz)
            gbs[li] = gz.copy()
        else:
            gws[li] = h.T @ gz
            gbs[li] = gz.sum(axis=0)
        g = gz @ mlp.weights[li].T
    grads = []
    for gw, gb in zip(gws, gbs):
        grads.extend([gw, gb])
    return grads, g


def param_list(mlp):
    out = []
    for w, b in zip(mlp.weights, mlp.biases):
        out.extend([w, b])
    return out


def set_params(mlp, arrays):
    for i in range(len(mlp.weights)):
        mlp.weights[i] = arrays[2 * i]
        mlp.biases[i] = arrays[2 * i + 1]


@dataclass
class Lstm:
    wx: np.ndarray        # (d_in, 4h), gate order i|f|g|o
    wh: np.ndarray        # (h, 4h)
    b: np.ndarray         # (4h,)

    @property
    def hidden(self):
        return self.wh.shape[0]

    @property
    def in_dim(self):
        return self.wx.shape[0]


def init_lstm(d_in, hidden, rng):
    lim = 1.0 / np.sqrt(d_in + hidden)
    return Lstm(
        rng.uniform(-lim, lim, size=(d_in, 4 * hidden)),
        rng.uniform(-lim, lim, size=(hidden, 4 * hidden)),
        rng.uniform(-lim, lim, size=4 * hidden),
    )


def lstm_forward(lstm, xs):
    """Returns (final hidden state, per-step hidden states, cache)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("lstm_forward needs a non-empty (T, d_in) sequence")
    if xs.shape[1] != lstm.in_dim:
        raise ValueError("sequence feature size mismatch")
    hs, cs, gates = kernels.lstm_seq_forward(xs, lstm.wx, lstm.wh, lstm.b)
    return hs[-1], hs, (xs, hs, cs, gates)


def lstm_backward(lstm, cache, gh_last):
    """BPTT for a loss depending on the final hidden state only."""
    xs, hs, cs, gates = cache
    T, h = hs.shape
    gwx = np.zeros_like(lstm.wx)
    gwh = np.zeros_like(lstm.wh)
    gb = np.zeros_like(lstm.b)
    gh = np.asarray(gh_last, dtype=float).copy()
    gc = np.zeros(h)
    for t in range(T - 1, -1, -1):
        i = gates[t, :h]
        f = gates[t, h:2 * h]
        g = gates[t, 2 * h:3 * h]
        o = gates[t, 3 * h:]
        tc = np.tanh(cs[t])
        go = gh * tc
        gc = gc + gh * o * (1.0 - tc * tc)
        gi = gc * g
        gg = gc * i
        cprev = cs[t - 1] if t > 0 else np.zeros(h)
        gf = gc * cprev
        ga = np.concatenate([
            gi * i * (1.0 - i),
            gf * f * (1.0 - f),
            gg * (1.0 - g * g),
            go * o * (1.0 - o),
        ])
        hprev = hs[t - 1] if t > 0 else np.zeros(h)
        gwx += np.outer(xs[t], ga)
        gwh += np.outer(hprev, ga)
        gb += ga
        gh = ga @ lstm.wh.T
        gc = gc * f
    return [gwx, gwh, gb]


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8


def adam_init(arrays, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    return AdamState([np.zeros_like(a) for a in arrays],
                     [np.zeros_like(a) for a in arrays],
                     0, lr, b1, b2, eps)


def adam_step(arrays, grads, st):
    """One bias-corrected Adam update; returns new arrays, mutates `st`."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient, update rejected")
    st.t += 1
    out = []
    for a, g, m, v in zip(arrays, grads, st.m, st.v):
        p = a.astype(float).ravel().copy()
        kernels.adam_update(p, g.astype(float).ravel(), m.ravel(), v.ravel(),
                            st.t, st.lr, st.b1, st.b2, st.eps)
        out.append(p.reshape(a.shape))
    return out


def grad_check(loss_and_grad, arrays, n_probes=30, eps=1e-5, seed=0):
    """Max relative error between analytic grads and central differences.

    `loss_and_grad(arrays) -> (loss, grads)`; probes random coordinates.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_grad(arrays)
    worst = 0.0
    for _ in range(n_probes):
        ai = int(rng.integers(len(arrays)))
        ci = int(rng.integers(arrays[ai].size))
        orig = arrays[ai].ravel()[ci]
        arrays[ai].ravel()[ci] = orig + eps
        lp, _ = loss_and_grad(arrays)
        arrays[ai].ravel()[ci] = orig - eps
        lm, _ = loss_and_grad(arrays)
        arrays[ai].ravel()[ci] = orig
        fd = (lp - lm) / (2.0 * eps)
        an = grads[ai].ravel()[ci]
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    return worst


def save_net(path, header, arrays):
    """Checkpoint: magic, u32 JSON header length, header, float32 block."""
    header = dict(header)
    header["shapes"] = [list(a.shape) for a in arrays]
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        for a in arrays:
            f.write(np.asarray(a, dtype="<f4").tobytes())


def load_net(path):
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        arrays = []
        for shape in header["shapes"]:
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * n)
            arrays.append(np.frombuffer(buf, dtype="<f4").astype(float).reshape(shape))
    return header, arrays


def mlp_to_arrays(mlp):
    return param_list(mlp)


def mlp_header(mlp, **extra):
    h = {"kind": "mlp", "sizes": [mlp.in_dim] + [w.shape[1] for w in mlp.weights],
         "acts": list(mlp.acts)}
    h.update(extra)
    return h


def mlp_from_checkpoint(header, arrays):
    ws = arrays[0::2]
    bs = arrays[1::2]
    return Mlp(list(ws), list(bs), list(header["acts"]))
