import numpy as np
import pytest

from cfdlg.corpus import EE, ER, all_transitions, load_corpus, write_corpus
from cfdlg.discovery import Dag
from cfdlg.synth import (SynthSpec, donation_for, effect_map, match_score,
                         mechanism, oracle_counterfactual, random_dag,
                         sample_scm, shd, simulate_corpus,
                         simulate_linear_gaussian)


def test_random_dag_degree_and_acyclicity():
    dag = random_dag(10, 2.0, seed=0)
    # expected total edges = p * avg_degree / 2 = 10; allow sampling slack
    assert 4 <= dag.n_edges() <= 16
    from cfdlg.discovery import is_acyclic
    assert is_acyclic(dag)
    assert random_dag(5, 0.0, seed=1).n_edges() == 0
    with pytest.raises(ValueError):
        random_dag(5, 5.0, seed=0)


def test_simulate_linear_gaussian_regression_recovers_edges():
    dag = Dag(("x0", "x1"), ((), (0,)))
    x = simulate_linear_gaussian(dag, 5000, seed=0)
    beta = (x[:, 0] @ x[:, 1]) / (x[:, 0] @ x[:, 0])
    assert 0.5 <= abs(beta) <= 1.5 + 0.1


def test_shd_hand_cases():
    a = Dag(("x", "y", "z"), ((), (0,), (1,)))
    assert shd(a, a) == 0
    rev = Dag(("x", "y", "z"), ((1,), (), (1,)))      # x<-y, z<-y
    assert shd(a, rev) == 1                            # one reversal
    extra = Dag(("x", "y", "z"), ((), (0,), (0, 1)))
    assert shd(a, extra) == 1                          # one insertion
    with pytest.raises(ValueError):
        shd(a, Dag(("p", "q", "r"), ((), (), ())))


def test_sample_scm_structure():
    spec = SynthSpec()
    scm = sample_scm(spec, 3)
    p = spec.k_ee + spec.k_er + 1
    assert len(scm.strategy_dag.nodes) == p
    # every cause-effect edge lands on a late-subset ER variable
    n_early = min(3, spec.k_er)
    for tail, head in scm.strategy_dag.edges():
        if head < p - 1:
            assert tail < spec.k_ee
            assert spec.k_ee + n_early <= head < p - 1
    # spectral norms keep the dynamics stable
    assert np.linalg.svd(scm.a_mat, compute_uv=False)[0] == pytest.approx(0.5)
    assert np.linalg.svd(scm.b_mat, compute_uv=False)[0] == pytest.approx(0.7)
    assert effect_map(scm)          # at least one cause-effect pair


def test_zero_degree_spec_gives_empty_dag():
    scm = sample_scm(SynthSpec(avg_degree=0.0), 0)
    assert scm.strategy_dag.n_edges() == 0
    assert effect_map(scm) == {}
    # corpus generation still works with the flat match score
    corp = simulate_corpus(scm, 3, 9, 0)
    assert len(corp) == 3


def test_simulate_corpus_shape_and_roles():
    scm = sample_scm(SynthSpec(), 0)
    corp = simulate_corpus(scm, 5, 11, 2)
    assert len(corp) == 5 and corp.dim == 16
    for d in corp.dialogues:
        assert len(d.utterances) == 11
        assert d.utterances[0].role == ER          # greeting slot
        for prev, cur in zip(d.utterances, d.utterances[1:]):
            assert prev.role != cur.role
        assert 0 <= d.donation_cents <= 100 * scm.spec.max_donation


def test_corpus_io_roundtrip(tmp_path, synth_world):
    _, corp = synth_world
    write_corpus(corp, tmp_path / "s.jsonl")
    back = load_corpus(tmp_path / "s.jsonl")
    assert len(back) == len(corp)
    assert back.dialogues[0].utterances[1].strategy is not None


def test_donation_recomputation_consistency(synth_world):
    """Stored donation equals recomputing from the emitted embeddings."""
    scm, corp = synth_world
    for d in corp.dialogues[:10]:
        embs = [u.embedding for u in d.utterances]
        assert donation_for(scm, embs) == d.donation_cents


def test_donation_monotone_in_match():
    scm = sample_scm(SynthSpec(), 1)
    em = effect_map(scm)
    cause = next(iter(em))
    i = scm.ee_vocab.index(cause)
    j = scm.er_vocab.index(em[cause][0])
    s = scm.ee_centers[i]
    matched = match_score(scm, s, scm.er_centers[j])
    others = [match_score(scm, s, scm.er_centers[k])
              for k in range(scm.spec.k_er) if k != j]
    assert matched > max(others)


def test_oracle_counterfactual_identity(synth_world):
    scm, corp = synth_world
    trans = all_transitions(corp)[:20]
    for t in trans:
        np.testing.assert_allclose(oracle_counterfactual(scm, t, t.a),
                                   t.s_next, atol=1e-10)


def test_oracle_counterfactual_linearity(synth_world):
    scm, corp = synth_world
    t = all_transitions(corp)[0]
    rng = np.random.default_rng(0)
    a1 = rng.standard_normal(scm.spec.d)
    a2 = rng.standard_normal(scm.spec.d)
    diff = oracle_counterfactual(scm, t, a1) - oracle_counterfactual(scm, t, a2)
    np.testing.assert_allclose(diff, scm.b_mat @ (a1 - a2), atol=1e-10)


def test_oracle_counterfactual_dim_check(synth_world):
    scm, corp = synth_world
    t = all_transitions(corp)[0]
    with pytest.raises(ValueError):
        oracle_counterfactual(scm, t, np.zeros(3))


def test_mechanism_is_linear(synth_world):
    scm, _ = synth_world
    rng = np.random.default_rng(0)
    s, a = rng.standard_normal(16), rng.standard_normal(16)
    np.testing.assert_allclose(mechanism(scm, 2 * s, 3 * a),
                               2 * scm.a_mat @ s + 3 * scm.b_mat @ a, atol=1e-12)


def test_sample_scm_deterministic():
    a = sample_scm(SynthSpec(), 7)
    b = sample_scm(SynthSpec(), 7)
    np.testing.assert_array_equal(a.a_mat, b.a_mat)
    assert a.strategy_dag == b.strategy_dag
    assert a.donation_loc == b.donation_loc
