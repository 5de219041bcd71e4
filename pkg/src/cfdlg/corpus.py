"""Dialogue corpus model, JSONL + binary embedding I/O, transitions.

Corpus file: JSON Lines, one dialogue per line:
  {"id", "donation_cents", "utterances": [{"turn", "role", "text", "strategy"}]}
Embedding file: magic "CFDLG1\\0", u32 count, u32 dim, count*dim little-endian
float32, row order matching a companion JSONL index of (dialogue_id, turn)
at <emb path> + ".idx".

Donations are integer cents; corpora are immutable after load (operations
build new ones).
"""
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

EMB_MAGIC = b"CFDLG1\x00"
MAX_UTTERANCES = 25

EE = "EE"
ER = "ER"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    dialogue_id: str
    turn: int
    role: str                     # EE or ER
    text: str = ""
    embedding: np.ndarray = None
    strategy: str = None          # gold label, if annotated
    strategy_dist: np.ndarray = None

    @property
    def uid(self):
        return (self.dialogue_id, self.turn)

    def label_or_argmax(self, vocab=None):
        if self.strategy is not None:
            return self.strategy
        if self.strategy_dist is not None and vocab is not None:
            return vocab.labels[int(np.argmax(self.strategy_dist))]
        return None


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple
    donation_cents: int
    donation_norm: float = None

    @property
    def donation(self):
        return self.donation_cents / 100.0


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    t: int
    dialogue_id: str
    is_terminal: bool
    # index of the EE utterance supplying s, within the dialogue
    s_turn: int = -1


@dataclass(frozen=True)
class NormStats:
    min_cents: int
    max_cents: int


@dataclass(frozen=True)
class DialogueCorpus:
    dialogues: tuple
    dim: int

    def __len__(self):
        return len(self.dialogues)

    def utterances(self, role=None):
        for d in self.dialogues:
            for u in d.utterances:
                if role is None or u.role == role:
                    yield u


def _check_dialogue(d, dim):
    turns = [u.turn for u in d.utterances]
    if len(set(turns)) != len(turns):
        raise CorpusError(f"dialogue {d.id}: duplicate turn index")
    if len(d.utterances) > MAX_UTTERANCES:
        raise CorpusError(f"dialogue {d.id}: more than {MAX_UTTERANCES} utterances")
    if d.donation_cents < 0:
        raise CorpusError(f"dialogue {d.id}: negative donation")
    for prev, cur in zip(d.utterances, d.utterances[1:]):
        if prev.role == cur.role:
            raise CorpusError(f"dialogue {d.id}: roles do not alternate at turn {cur.turn}")
    for u in d.utterances:
        if u.embedding is not None and len(u.embedding) != dim:
            raise CorpusError(f"dialogue {d.id} turn {u.turn}: embedding dim "
                              f"{len(u.embedding)} != corpus dim {dim}")


def write_embeddings(path, rows, index):
    rows = np.asarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise CorpusError("embedding rows must be 2-D")
    with open(path, "wb") as f:
        f.write(EMB_MAGIC)
        f.write(struct.pack("<II", rows.shape[0], rows.shape[1]))
        f.write(rows.tobytes())
    with open(str(path) + ".idx", "w") as f:
        for did, turn in index:
            f.write(json.dumps({"dialogue_id": did, "turn": turn}) + "\n")


def read_embeddings(path):
    with open(path, "rb") as f:
        if f.read(len(EMB_MAGIC)) != EMB_MAGIC:
            raise CorpusError(f"{path}: bad embedding magic")
        n, d = struct.unpack("<II", f.read(8))
        buf = f.read(4 * n * d)
        if len(buf) != 4 * n * d:
            raise CorpusError(f"{path}: truncated embedding block")
        rows = np.frombuffer(buf, dtype="<f4").reshape(n, d)
    index = []
    with open(str(path) + ".idx") as f:
        for line in f:
            rec = json.loads(line)
            index.append((rec["dialogue_id"], rec["turn"]))
    if len(index) != n:
        raise CorpusError(f"{path}: index rows {len(index)} != header count {n}")
    return rows, index


def load_corpus(path, emb_path=None):
    """Load a JSONL corpus plus its embedding file (default: <path> + '.emb')."""
    emb_path = emb_path or str(path) + ".emb"
    rows, index = read_embeddings(emb_path)
    dim = rows.shape[1]
    lut = {key: rows[i].astype(float) for i, key in enumerate(index)}
    raw = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{ln}: malformed line ({e})") from e
            raw[rec["id"]] = rec
    dialogues = []
    for did in sorted(raw):
        rec = raw[did]
        utts = []
        for u in sorted(rec["utterances"], key=lambda u: u["turn"]):
            emb = lut.get((did, u["turn"]))
            if emb is None:
                raise CorpusError(f"dialogue {did} turn {u['turn']}: missing embedding row")
            utts.append(Utterance(did, u["turn"], u["role"], u.get("text", ""),
                                  emb, u.get("strategy")))
        d = Dialogue(did, tuple(utts), int(rec["donation_cents"]))
        _check_dialogue(d, dim)
        dialogues.append(d)
    return DialogueCorpus(tuple(dialogues), dim)


def write_corpus(corpus, path, emb_path=None):
    emb_path = emb_path or str(path) + ".emb"
    rows, index = [], []
    with open(path, "w") as f:
        for d in corpus.dialogues:
            rec = {"id": d.id, "donation_cents": d.donation_cents,
                   "utterances": [{"turn": u.turn, "role": u.role, "text": u.text,
                                   "strategy": u.strategy} for u in d.utterances]}
            f.write(json.dumps(rec) + "\n")
            for u in d.utterances:
                rows.append(u.embedding)
                index.append((d.id, u.turn))
    rows = np.asarray(rows, dtype="<f4") if rows else np.zeros((0, corpus.dim), "<f4")
    write_embeddings(emb_path, rows, index)


def filter_by_donation(corpus, max_amount):
    """Keep dialogues with donation <= max_amount dollars; order preserved."""
    max_cents = int(round(max_amount * 100)) if np.isfinite(max_amount) else None
    kept = tuple(d for d in corpus.dialogues
                 if max_cents is None or d.donation_cents <= max_cents)
    return DialogueCorpus(kept, corpus.dim)


def normalize_donations(corpus):
    """Min-max normalize donations into donation_norm; returns (corpus, stats)."""
    if len(corpus) == 0:
        raise CorpusError("cannot normalize an empty corpus")
    cents = [d.donation_cents for d in corpus.dialogues]
    lo, hi = min(cents), max(cents)
    span = hi - lo
    out = tuple(
        replace(d, donation_norm=0.0 if span == 0 else (d.donation_cents - lo) / span)
        for d in corpus.dialogues)
    return DialogueCorpus(out, corpus.dim), NormStats(lo, hi)


def to_transitions(dialogue):
    """(s, a, s_next) triples: s/s_next are EE utterances, a the ER between.

    A leading ER greeting is treated as preamble and skipped; a trailing ER
    utterance has no next state and is dropped.
    """
    utts = list(dialogue.utterances)
    while utts and utts[0].role == ER:
        utts = utts[1:]
    out = []
    i = 0
    while i + 2 < len(utts):
        s, a, s2 = utts[i], utts[i + 1], utts[i + 2]
        if s.role != EE or a.role != ER or s2.role != EE:
            break
        out.append(Transition(s.embedding, a.embedding, s2.embedding,
                              len(out), dialogue.id, False, s.turn))
        i += 2
    if out:
        out[-1] = replace(out[-1], is_terminal=True)
    return out


def all_transitions(corpus):
    out = []
    for d in corpus.dialogues:
        out.extend(to_transitions(d))
    return out


def with_strategy_dists(corpus, dists):
    """New corpus with strategy_dist attached; `dists` keyed by (dialogue_id, turn)."""
    ds = []
    for d in corpus.dialogues:
        utts = tuple(replace(u, strategy_dist=dists.get(u.uid, u.strategy_dist))
                     for u in d.utterances)
        ds.append(replace(d, utterances=utts))
    return DialogueCorpus(tuple(ds), corpus.dim)
