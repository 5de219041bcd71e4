"""Counterfactual persuader actions: pool variants, TF-IDF retrieval,
causal-graph-guided top-3 selection.
"""
import re
import unicodedata
from dataclasses import dataclass

import numpy as np

from .corpus import ER

TOKEN_RE = re.compile(r"[^0-9a-z]+")
TOP_K = 3

S1, S2, S3 = "S1", "S2", "S3"
_SKIP = {S1: 0, S2: 1, S3: 3}


@dataclass(frozen=True)
class ActionPool:
    variant: str
    utterances: tuple        # ER utterances eligible for sampling


def build_action_pool(corp, variant):
    """S1 = all ER turns; S2 drops each dialogue's first ER turn; S3 the first three."""
    skip = _SKIP[variant]
    pool = []
    for d in corp.dialogues:
        ers = [u for u in d.utterances if u.role == ER]
        pool.extend(ers[skip:])
    return ActionPool(variant, tuple(pool))


def tokenize(text):
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    return [t for t in TOKEN_RE.split(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class TfidfIndex:
    utterances: tuple
    vectors: tuple           # per-utterance {term: weight}, L2-normalized
    idf: dict
    mode: str = "tfidf"      # "embedding" for synthetic text-free corpora


def tfidf_index(utterances, mode="tfidf"):
    utterances = tuple(utterances)
    if mode == "embedding":
        vecs = []
        for u in utterances:
            v = np.asarray(u.embedding, dtype=float)
            n = np.linalg.norm(v)
            vecs.append(v / n if n > 0 else v)
        return TfidfIndex(utterances, tuple(vecs), {}, mode)
    docs = [tokenize(u.text) for u in utterances]
    if not any(docs):
        raise ValueError("all texts empty; use mode='embedding' for text-free corpora")
    df = {}
    for toks in docs:
        for t in sorted(set(toks)):
            df[t] = df.get(t, 0) + 1
    n = len(docs)
    idf = {t: np.log((1.0 + n) / (1.0 + c)) + 1.0 for t, c in df.items()}
    vecs = []
    for toks in docs:
        tf = {}
        for t in toks:
            tf[t] = tf.get(t, 0) + 1
        v = {t: c * idf[t] for t, c in tf.items()}
        norm = np.sqrt(sum(x * x for x in v.values()))
        if norm > 0:
            v = {t: x / norm for t, x in v.items()}
        vecs.append(v)
    return TfidfIndex(utterances, tuple(vecs), idf)


def _vectorize_query(index, utt):
    if index.mode == "embedding":
        v = np.asarray(utt.embedding, dtype=float)
        n = np.linalg.norm(v)
        return v / n if n > 0 else v
    toks = tokenize(utt.text)
    tf = {}
    for t in toks:
        tf[t] = tf.get(t, 0) + 1
    v = {t: c * index.idf.get(t, 0.0) for t, c in tf.items()}
    norm = np.sqrt(sum(x * x for x in v.values()))
    if norm > 0:
        v = {t: x / norm for t, x in v.items()}
    return v


def _cosine(index, qv, i):
    cv = index.vectors[i]
    if index.mode == "embedding":
        return float(qv @ cv)
    if len(qv) > len(cv):
        qv, cv = cv, qv
    return sum(w * cv.get(t, 0.0) for t, w in qv.items())


def rank_by_similarity(index, query_utt, strategy_filter=None, vocab=None,
                       restrict=None):
    """Candidates carrying `strategy_filter`, by cosine desc, ties by uid asc.

    `restrict`: optional set of utterance uids to confine the candidate set
    (used to honor an action pool).
    """
    qv = _vectorize_query(index, query_utt)
    scored = []
    for i, u in enumerate(index.utterances):
        if restrict is not None and u.uid not in restrict:
            continue
        if strategy_filter is not None and u.label_or_argmax(vocab) != strategy_filter:
            continue
        scored.append((-_cosine(index, qv, i), u.uid, u))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [u for _, _, u in scored]


@dataclass
class ActionSelector:
    """Bundles everything needed to pick one counterfactual persuader action."""
    pool: ActionPool
    index: TfidfIndex
    cause_effect: dict       # EE label -> list of ER labels; {} = random selector
    classifier: object       # EE classifier with predict-label behavior
    er_vocab: object = None
    top_k: int = TOP_K

    def __post_init__(self):
        self._uids = {u.uid for u in self.pool.utterances}

    def select(self, state_utt, rng):
        return select_counterfactual_action(
            state_utt, self.cause_effect, self.classifier, self.index,
            self.pool, rng, er_vocab=self.er_vocab, top_k=self.top_k,
            _uids=self._uids)


def select_counterfactual_action(state_utt, cause_effect, classifier, index,
                                 pool, rng, er_vocab=None, top_k=TOP_K,
                                 _uids=None):
    """Causal route: pick one effect strategy at random, rank pool candidates
    by similarity to the state, return one of the top `top_k` uniformly.
    Without an applicable cause-effect pair: uniform over the pool.
    """
    if not pool.utterances:
        raise ValueError("empty action pool")
    effects = None
    if cause_effect and classifier is not None:
        from .strategy import predict_label
        ee_label = predict_label(classifier, state_utt.embedding)
        effects = cause_effect.get(ee_label)
    if effects:
        effect = effects[int(rng.integers(len(effects)))]
        uids = _uids if _uids is not None else {u.uid for u in pool.utterances}
        ranked = rank_by_similarity(index, state_utt, effect, er_vocab, uids)
        if ranked:
            k = min(top_k, len(ranked))
            return ranked[int(rng.integers(k))]
    return pool.utterances[int(rng.integers(len(pool.utterances)))]
