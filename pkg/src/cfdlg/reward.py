"""Donation prediction from dialogue embedding sequences (terminal reward).

An LSTM runs over the alternating utterance embeddings; a sigmoid readout
squashes the prediction into [0, max_donation]. The per-step reward is zero
everywhere except the final transition, which receives the full-sequence
prediction.
"""
from dataclasses import dataclass

import numpy as np

from . import nets


@dataclass
class DdpConfig:
    hidden: int = 64
    epochs: int = 60
    lr: float = 5e-3
    batch: int = 16
    max_donation: float = 20.0
    holdout: float = 0.2


@dataclass
class DdpParams:
    lstm: nets.Lstm
    w_out: np.ndarray
    b_out: float
    max_donation: float


def _arrays(p):
    return [p.lstm.wx, p.lstm.wh, p.lstm.b, p.w_out, p.b_out]


def _set_arrays(p, arrays):
    p.lstm.wx, p.lstm.wh, p.lstm.b = arrays[0], arrays[1], arrays[2]
    p.w_out, p.b_out = arrays[3], arrays[4]


def _forward(p, seq):
    h, _, cache = nets.lstm_forward(p.lstm, seq)
    u = float(h @ p.w_out + p.b_out[0])
    y = p.max_donation / (1.0 + np.exp(-u))
    return y, u, h, cache


def _backward(p, seq, u, h, cache, gy):
    sig = 1.0 / (1.0 + np.exp(-u))
    gu = gy * p.max_donation * sig * (1.0 - sig)
    gw_out = gu * h
    gb_out = np.array([gu])
    gh = gu * p.w_out
    glstm = nets.lstm_backward(p.lstm, cache, gh)
    return glstm + [gw_out, gb_out]


def predict_donation(params, seq):
    """Predicted donation in dollars, bounded in [0, max_donation]."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("empty sequence")
    y, _, _, _ = _forward(params, seq)
    return y


def reward(params, prefix, t, horizon):
    """Terminal-only reward: 0 before the last transition, prediction at it."""
    if t >= horizon:
        raise ValueError(f"t={t} out of range for horizon {horizon}")
    if t < horizon - 1:
        return 0.0
    return predict_donation(params, prefix)


def cumulative_rewards(params, sequences):
    """Running sum of per-dialogue predictions; non-decreasing."""
    out = []
    total = 0.0
    for seq in sequences:
        total += predict_donation(params, seq)
        out.append(total)
    return out


def dialogue_sequence(dialogue):
    return np.array([u.embedding for u in dialogue.utterances], dtype=float)


def train_ddp(corp, config, seed):
    """Squared-error regression of donation from the embedding sequence.

    Returns (params, info) with per-epoch loss trace and held-out RMSE/R2.
    """
    if len(corp) == 0:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(seed)
    seqs = [dialogue_sequence(d) for d in corp.dialogues]
    ys = np.array([d.donation for d in corp.dialogues])
    n = len(seqs)
    perm = rng.permutation(n)
    n_hold = int(round(config.holdout * n)) if n > 4 else 0
    hold, train = perm[:n_hold], perm[n_hold:]

    params = DdpParams(nets.init_lstm(corp.dim, config.hidden, rng),
                       rng.uniform(-0.1, 0.1, size=config.hidden),
                       np.zeros(1), config.max_donation)
    arrays = _arrays(params)
    st = nets.adam_init(arrays, lr=config.lr)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for k in range(0, len(train), config.batch):
            idx = train[order[k:k + config.batch]]
            grads = [np.zeros_like(a) for a in arrays]
            for i in idx:
                y, u, h, cache = _forward(params, seqs[i])
                err = y - ys[i]
                total += err * err
                g = _backward(params, seqs[i], u, h, cache, 2.0 * err / len(idx))
                for acc, gg in zip(grads, g):
                    acc += gg
            arrays = nets.adam_step(arrays, grads, st)
            _set_arrays(params, arrays)
        trace.append(total / max(1, len(train)))
    info = {"trace": trace}
    if n_hold:
        preds = np.array([predict_donation(params, seqs[i]) for i in hold])
        resid = preds - ys[hold]
        info["holdout_rmse"] = float(np.sqrt(np.mean(resid ** 2)))
        var = float(np.var(ys[hold]))
        info["holdout_r2"] = 1.0 - float(np.mean(resid ** 2)) / var if var > 0 else 0.0
    return params, info
