import numpy as np
import pytest

from cfdlg.corpus import EE, ER, Dialogue, DialogueCorpus, Utterance
from cfdlg.synth import SynthSpec, sample_scm, simulate_corpus


def make_dialogue(did, n_turns, dim=4, seed=0, donation_cents=500,
                  ee_labels=None, er_labels=None, text=True):
    """Alternating ER-first dialogue with random embeddings."""
    rng = np.random.default_rng(seed)
    utts = []
    for t in range(n_turns):
        role = ER if t % 2 == 0 else EE
        labels = er_labels if role == ER else ee_labels
        lab = labels[t % len(labels)] if labels else None
        utts.append(Utterance(did, t, role, f"utt {did} {t}" if text else "",
                              rng.standard_normal(dim), lab))
    return Dialogue(did, tuple(utts), donation_cents)


def make_corpus(n_dialogues=4, n_turns=7, dim=4, seed=0, **kw):
    ds = tuple(make_dialogue(f"d{i}", n_turns, dim=dim, seed=seed + i,
                             donation_cents=100 * (i + 1), **kw)
               for i in range(n_dialogues))
    return DialogueCorpus(ds, dim)


@pytest.fixture(scope="session")
def synth_world():
    """One small synthetic world shared across test modules."""
    scm = sample_scm(SynthSpec(), 0)
    corp = simulate_corpus(scm, 40, 15, 1)
    return scm, corp
