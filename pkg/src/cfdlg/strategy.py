"""Per-utterance strategy prediction and similarity diagnostics.

The heavy pretrained predictor is swapped for a linear-softmax classifier
over precomputed embeddings; anything implementing `predict_strategy`'s
contract can stand in.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels, nets
from .corpus import EE, ER, with_strategy_dists

EE_VOCAB_SIZE = 23
ER_VOCAB_SIZE = 27
PAIR_SAMPLE_CAP = 100_000


@dataclass(frozen=True)
class StrategyVocab:
    role: str
    labels: tuple

    def __len__(self):
        return len(self.labels)

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} not in {self.role} vocab") from None


def default_vocab(role, size=None):
    size = size or (EE_VOCAB_SIZE if role == EE else ER_VOCAB_SIZE)
    return StrategyVocab(role, tuple(f"{role.lower()}_strat_{i:02d}" for i in range(size)))


@dataclass
class ClassifierParams:
    mlp: nets.Mlp
    vocab: StrategyVocab


def softmax(logits):
    logits = np.asarray(logits, dtype=float)
    if logits.size == 0:
        raise ValueError("softmax of empty vector")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def train_classifier(utterances, vocab, seed=0, epochs=200, lr=0.05, batch=64):
    """Cross-entropy training of an affine-softmax classifier; seeded."""
    utts = [u for u in utterances if u.role == vocab.role]
    if not utts:
        raise ValueError("empty training set")
    x = np.array([u.embedding for u in utts], dtype=float)
    y = np.array([vocab.index(u.strategy) for u in utts])
    rng = np.random.default_rng(seed)
    mlp = nets.Mlp([np.zeros((x.shape[1], len(vocab)))], [np.zeros(len(vocab))],
                   ["identity"])
    arrays = nets.param_list(mlp)
    st = nets.adam_init(arrays, lr=lr)
    n = len(utts)
    for _ in range(epochs):
        order = rng.permutation(n)
        for k in range(0, n, batch):
            idx = order[k:k + batch]
            xb, yb = x[idx], y[idx]
            logits, cache = nets.mlp_forward_cache(mlp, xb)
            p = softmax(logits)
            g = p.copy()
            g[np.arange(len(idx)), yb] -= 1.0
            g /= len(idx)
            grads, _ = nets.mlp_backward(mlp, xb, g, cache)
            arrays = nets.adam_step(arrays, grads, st)
            nets.set_params(mlp, arrays)
    return ClassifierParams(mlp, vocab)


def classifier_loss(params, x, y):
    logits = nets.mlp_forward(params.mlp, x)
    p = softmax(logits)
    return -np.mean(np.log(p[np.arange(len(y)), y] + 1e-12))


def predict_strategy(params, embedding):
    logits = nets.mlp_forward(params.mlp, np.asarray(embedding, dtype=float))
    return softmax(logits)


def predict_label(params, embedding):
    # argmax ties broken by lowest label index (np.argmax picks the first max)
    return params.vocab.labels[int(np.argmax(predict_strategy(params, embedding)))]


def annotate_corpus(corp, ee_params, er_params):
    """Attach strategy_dist to every utterance from the role-matching classifier."""
    dists = {}
    for u in corp.utterances():
        if u.embedding is None:
            raise ValueError(f"utterance {u.uid} has no embedding")
        params = ee_params if u.role == EE else er_params
        dists[u.uid] = predict_strategy(params, u.embedding)
    return with_strategy_dists(corp, dists)


def intra_inter_similarity(corp, role, vocab=None, seed=0):
    """Mean pairwise cosine within vs across strategy groups for one role.

    Uses gold labels where present, else argmax of strategy_dist. Pairs are
    subsampled (seeded) beyond PAIR_SAMPLE_CAP.
    """
    utts = [u for u in corp.utterances(role)]
    if not utts:
        raise ValueError(f"no {role} utterances in corpus")
    labels = []
    embs = []
    for u in utts:
        lab = u.label_or_argmax(vocab)
        if lab is None:
            continue
        labels.append(lab)
        embs.append(u.embedding)
    if not labels:
        raise ValueError(f"no labelled {role} utterances")
    uniq = sorted(set(labels))
    lab_idx = np.array([uniq.index(l) for l in labels], dtype=np.int64)
    x = np.asarray(embs, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0] = 1.0
    xn = x / norms[:, None]
    n = len(labels)
    n_pairs = n * (n - 1) // 2
    if n_pairs <= PAIR_SAMPLE_CAP:
        s_in, c_in, s_out, c_out = kernels.cos_pair_stats(xn, lab_idx)
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, size=PAIR_SAMPLE_CAP)
        jj = rng.integers(0, n - 1, size=PAIR_SAMPLE_CAP)
        jj = np.where(jj >= ii, jj + 1, jj)
        s_in, c_in, s_out, c_out = kernels.cos_pair_stats_sampled(xn, lab_idx, ii, jj)
    intra = s_in / c_in if c_in else float("nan")
    inter = s_out / c_out if c_out else float("nan")
    return intra, inter
