import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfdlg.corpus import (EE, ER, CorpusError, Dialogue, DialogueCorpus,
                          Utterance, all_transitions, filter_by_donation,
                          load_corpus, normalize_donations, read_embeddings,
                          to_transitions, write_corpus, write_embeddings)
from conftest import make_corpus, make_dialogue


def test_roundtrip_preserves_everything(tmp_path):
    corp = make_corpus(3, 7, dim=5, ee_labels=("ask",), er_labels=("greet", "logic"))
    path = tmp_path / "c.jsonl"
    write_corpus(corp, path)
    back = load_corpus(path)
    assert len(back) == len(corp)
    assert back.dim == corp.dim
    for da, db in zip(corp.dialogues, back.dialogues):
        assert da.id == db.id and da.donation_cents == db.donation_cents
        for ua, ub in zip(da.utterances, db.utterances):
            assert (ua.turn, ua.role, ua.text, ua.strategy) == \
                (ub.turn, ub.role, ub.text, ub.strategy)
            # embeddings survive up to the float32 storage precision
            np.testing.assert_allclose(ua.embedding, ub.embedding, atol=1e-6)


def test_load_sorts_by_dialogue_id(tmp_path):
    ds = [make_dialogue("zz", 3, seed=1), make_dialogue("aa", 3, seed=2)]
    write_corpus(DialogueCorpus(tuple(ds), 4), tmp_path / "c.jsonl")
    back = load_corpus(tmp_path / "c.jsonl")
    assert [d.id for d in back.dialogues] == ["aa", "zz"]


def test_malformed_jsonl_rejected(tmp_path):
    corp = make_corpus(1, 3)
    write_corpus(corp, tmp_path / "c.jsonl")
    with open(tmp_path / "c.jsonl", "a") as f:
        f.write("{not json\n")
    with pytest.raises(CorpusError, match="malformed"):
        load_corpus(tmp_path / "c.jsonl")


def test_missing_embedding_row_rejected(tmp_path):
    corp = make_corpus(1, 3)
    write_corpus(corp, tmp_path / "c.jsonl")
    # rewrite the embedding file with one row dropped
    rows, index = read_embeddings(str(tmp_path / "c.jsonl") + ".emb")
    write_embeddings(str(tmp_path / "c.jsonl") + ".emb", rows[:-1], index[:-1])
    with pytest.raises(CorpusError, match="missing embedding"):
        load_corpus(tmp_path / "c.jsonl")


def test_bad_embedding_magic(tmp_path):
    with open(tmp_path / "x.emb", "wb") as f:
        f.write(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(CorpusError, match="magic"):
        read_embeddings(tmp_path / "x.emb")


@pytest.mark.parametrize("mutate,msg", [
    (lambda u: [u[0], dataclasses.replace(u[1], turn=0)] + u[2:], "duplicate turn"),
    (lambda u: [u[0], dataclasses.replace(u[1], role=u[0].role)] + u[2:],
     "roles do not alternate"),
])
def test_structural_validation(tmp_path, mutate, msg):
    d = make_dialogue("d0", 4)
    d = dataclasses.replace(d, utterances=tuple(mutate(list(d.utterances))))
    write_corpus(DialogueCorpus((d,), 4), tmp_path / "c.jsonl")
    with pytest.raises(CorpusError, match=msg):
        load_corpus(tmp_path / "c.jsonl")


def test_too_long_and_negative_donation_rejected(tmp_path):
    d = make_dialogue("d0", 26)
    write_corpus(DialogueCorpus((d,), 4), tmp_path / "c.jsonl")
    with pytest.raises(CorpusError, match="more than 25"):
        load_corpus(tmp_path / "c.jsonl")
    d = dataclasses.replace(make_dialogue("d0", 4), donation_cents=-1)
    write_corpus(DialogueCorpus((d,), 4), tmp_path / "c2.jsonl")
    with pytest.raises(CorpusError, match="negative donation"):
        load_corpus(tmp_path / "c2.jsonl")


def test_filter_by_donation():
    corp = make_corpus(4)          # donations 100..400 cents
    kept = filter_by_donation(corp, 2.5)
    assert [d.id for d in kept.dialogues] == ["d0", "d1"]
    assert len(filter_by_donation(corp, float("inf"))) == 4


def test_normalize_donations_minmax():
    corp = make_corpus(4)
    out, stats = normalize_donations(corp)
    norms = [d.donation_norm for d in out.dialogues]
    assert norms[0] == 0.0 and norms[-1] == 1.0
    assert stats.min_cents == 100 and stats.max_cents == 400
    # hand oracle for the middle dialogues
    assert norms[1] == pytest.approx((200 - 100) / 300)
    # constant donations map to 0, not NaN
    flat = DialogueCorpus(tuple(dataclasses.replace(d, donation_cents=700)
                                for d in corp.dialogues), corp.dim)
    out, _ = normalize_donations(flat)
    assert all(d.donation_norm == 0.0 for d in out.dialogues)


def test_normalize_empty_corpus_rejected():
    with pytest.raises(CorpusError):
        normalize_donations(DialogueCorpus((), 4))


def test_to_transitions_skips_greeting_and_trailing_er():
    # ER greeting, then EE/ER/EE/ER/EE: two transitions, trailing pair none
    d = make_dialogue("d0", 6)
    trans = to_transitions(d)
    assert len(trans) == 2
    np.testing.assert_array_equal(trans[0].s, d.utterances[1].embedding)
    np.testing.assert_array_equal(trans[0].a, d.utterances[2].embedding)
    np.testing.assert_array_equal(trans[0].s_next, d.utterances[3].embedding)
    assert [t.is_terminal for t in trans] == [False, True]
    assert trans[0].s_turn == 1 and trans[1].s_turn == 3


def test_to_transitions_too_short():
    assert to_transitions(make_dialogue("d0", 2)) == []


def test_all_transitions_counts():
    corp = make_corpus(3, 9)
    trans = all_transitions(corp)
    assert len(trans) == 3 * len(to_transitions(corp.dialogues[0]))
    assert {t.dialogue_id for t in trans} == {"d0", "d1", "d2"}


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 8), st.integers(0, 10_000))
def test_roundtrip_property(tmp_path_factory, n_turns, dim, cents):
    tmp = tmp_path_factory.mktemp("rt")
    d = make_dialogue("p0", n_turns, dim=dim, seed=cents, donation_cents=cents)
    write_corpus(DialogueCorpus((d,), dim), tmp / "c.jsonl")
    back = load_corpus(tmp / "c.jsonl")
    assert back.dialogues[0].donation_cents == cents
    assert back.dim == dim
    assert len(back.dialogues[0].utterances) == n_turns
