"""Synthetic ground-truth worlds: linear-Gaussian benchmark graphs for the
discovery oracle and a dialogue SCM with exact counterfactuals.

Everything here is a pure function of its seed.
"""
from dataclasses import dataclass, field

import numpy as np

from .corpus import EE, ER, Dialogue, DialogueCorpus, Utterance
from .discovery import Dag
from .strategy import StrategyVocab


# ---------------------------------------------------------------- benchmarks

def random_dag(p, avg_degree, seed, names=None):
    """Random DAG with expected average (total) degree `avg_degree`."""
    if avg_degree < 0 or avg_degree > p - 1:
        raise ValueError("infeasible average degree")
    rng = np.random.default_rng(seed)
    order = rng.permutation(p)
    prob = avg_degree / max(1, p - 1)
    parents = [set() for _ in range(p)]
    for a in range(p):
        for b in range(a + 1, p):
            if rng.random() < prob:
                parents[order[b]].add(int(order[a]))
    names = names or tuple(f"x{i}" for i in range(p))
    return Dag(tuple(names), tuple(tuple(sorted(ps)) for ps in parents))


def simulate_linear_gaussian(dag, n, seed, weight_lo=0.5, weight_hi=1.5):
    """Sample n rows from a linear-Gaussian SCM over `dag`; unit noise."""
    rng = np.random.default_rng(seed)
    p = len(dag.nodes)
    w = {}
    for pa, c in dag.edges():
        w[(pa, c)] = rng.uniform(weight_lo, weight_hi) * rng.choice([-1.0, 1.0])
    x = np.zeros((n, p))
    indeg = {c: list(ps) for c, ps in enumerate(dag.parents)}
    done, todo = set(), list(range(p))
    while todo:
        for c in list(todo):
            if all(q in done for q in indeg[c]):
                x[:, c] = rng.standard_normal(n)
                for q in indeg[c]:
                    x[:, c] += w[(q, c)] * x[:, q]
                done.add(c)
                todo.remove(c)
    return x


def shd(dag_a, dag_b):
    """Edge insertions + deletions + reversals (cost 1) between two DAGs."""
    if tuple(dag_a.nodes) != tuple(dag_b.nodes):
        raise ValueError("node sets differ")
    ea = set(dag_a.edges())
    eb = set(dag_b.edges())
    d = 0
    for e in ea - eb:
        d += 1 if (e[1], e[0]) not in eb else 0
    for e in eb - ea:
        # reversal counted once, insertion counted here
        d += 1
    return d


# ------------------------------------------------------------- dialogue SCM

@dataclass(frozen=True)
class SynthSpec:
    d: int = 16
    k_ee: int = 6
    k_er: int = 8
    avg_degree: float = 2.0
    sigma: float = 0.05
    center_scale: float = 1.0
    greeting_scale: float = 6.0
    # early-turn strategies are low-energy openers; substituting a late
    # strategy for one is a visible jump
    early_scale: float = 0.4
    max_donation: float = 20.0
    # dialogue-level concentration of persuadee strategy preferences
    pref_alpha: float = 1.0
    # sharpness of the persuadee->persuader strategy coupling
    coupling_scale: float = 2.0


@dataclass(frozen=True)
class SynthScm:
    spec: SynthSpec
    strategy_dag: Dag            # over k_ee + k_er + 1 nodes (EE, ER, y)
    strategy_w: dict             # (cause idx, effect idx) -> weight
    a_mat: np.ndarray            # state feedback, spectral norm < 1
    b_mat: np.ndarray            # action coupling, spectral norm < 1
    ee_centers: np.ndarray       # (k_ee, d)
    er_centers: np.ndarray       # (k_er, d)
    greeting_vec: np.ndarray     # (d,)
    ee_vocab: StrategyVocab
    er_vocab: StrategyVocab
    match_mat: np.ndarray        # (d, d) bilinear strategy-match form
    match_theta: float           # match-score sigmoid midpoint
    match_gain: float            # match-score sigmoid sharpness
    # squashing calibration so donations spread over (0, max_donation)
    donation_loc: float = 0.0
    donation_scale: float = 1.0


def _scale_spectral(m, target):
    s = np.linalg.svd(m, compute_uv=False)[0]
    return m * (target / s)


def sample_scm(spec, seed):
    """Random dialogue SCM; EE strategies cause ER strategies, both feed y.

    Each EE strategy has one designated effect ER strategy; donations grow
    with how often the persuader's strategy matched the one the preceding
    persuadee turn called for. Effect ER strategies come from the late-turn
    subset (the early subset is reserved for greetings), the rest stay
    exogenous so causal and random selection can differ.
    """
    rng = np.random.default_rng(seed)
    k_ee, k_er, d = spec.k_ee, spec.k_er, spec.d
    p = k_ee + k_er + 1
    names = tuple([f"ee:ee_{i}" for i in range(k_ee)]
                  + [f"er:er_{i}" for i in range(k_er)] + ["y"])
    parents = [set() for _ in range(p)]
    w = {}
    n_early = min(3, k_er)
    late = np.arange(n_early, k_er) if k_er > n_early else np.arange(k_er)
    # bijective when room allows: one distinct effect strategy per cause keeps
    # every cause-effect dependence strong enough to recover
    n_effects = max(1, min(len(late), k_ee)) if spec.avg_degree > 0 else 0
    effect_vars = rng.choice(late, size=n_effects, replace=False)
    # surjective cause -> effect assignment so every effect has a parent
    assign = np.full(k_ee, -1, dtype=int)
    if n_effects:
        first = rng.permutation(k_ee)[:n_effects]
        assign[first] = effect_vars
        rest = np.setdiff1d(np.arange(k_ee), first)
        assign[rest] = rng.choice(effect_vars, size=len(rest))
    for i in range(k_ee):
        j = int(assign[i])
        if j < 0:
            continue
        parents[k_ee + j].add(i)
        w[(i, k_ee + j)] = rng.uniform(0.5, 1.5)
    for j in range(k_er):
        if parents[k_ee + j]:
            parents[p - 1].add(k_ee + j)
            w[(k_ee + j, p - 1)] = rng.uniform(0.5, 1.5)
    dag = Dag(names, tuple(tuple(sorted(ps)) for ps in parents))
    a_mat = _scale_spectral(rng.standard_normal((d, d)), 0.5)
    b_mat = _scale_spectral(rng.standard_normal((d, d)), 0.7)
    ee_centers = rng.standard_normal((k_ee, d)) * spec.center_scale
    er_centers = rng.standard_normal((k_er, d)) * spec.center_scale
    er_centers[:n_early] *= spec.early_scale
    # bilinear match score between a state's EE component and an action
    match_mat = np.zeros((d, d))
    for i in range(k_ee):
        if assign[i] < 0:
            continue
        ci = ee_centers[i] / max(1e-12, np.linalg.norm(ee_centers[i]))
        cj = er_centers[assign[i]] / max(1e-12,
                                         np.linalg.norm(er_centers[assign[i]]))
        match_mat += np.outer(ci, cj)
    if n_effects:
        diag = np.mean([ee_centers[i] @ match_mat @ er_centers[assign[i]]
                        for i in range(k_ee) if assign[i] >= 0])
        match_theta = 0.5 * diag
        match_gain = 4.0 / max(1e-9, diag)
    else:
        match_theta, match_gain = 0.0, 1.0
    greeting_vec = np.zeros(d)
    greeting_vec[0] = spec.greeting_scale
    scm = SynthScm(
        spec, dag, w,
        a_mat, b_mat, ee_centers, er_centers, greeting_vec,
        StrategyVocab(EE, tuple(f"ee_{i}" for i in range(k_ee))),
        StrategyVocab(ER, tuple(f"er_{i}" for i in range(k_er))),
        match_mat, match_theta, match_gain,
    )
    # calibrate the donation squash on a pilot so amounts spread over the range
    pilot_rng = np.random.default_rng([seed, 0xD0])
    proj = []
    for r in range(48):
        # mixed lengths so the calibration holds across corpus sizes
        _, embs = _roll_dialogue(scm, (11, 15, 19, 25)[r % 4], pilot_rng)
        proj.append(_donation_raw(scm, embs))
    from dataclasses import replace as _replace
    return _replace(scm, donation_loc=float(np.mean(proj)),
                    donation_scale=max(1e-6, float(np.std(proj))))


def effect_map(scm):
    """Ground-truth EE label -> ER effect labels from the strategy DAG."""
    out = {}
    for i in range(scm.spec.k_ee):
        effs = [scm.er_vocab.labels[j - scm.spec.k_ee]
                for j in range(scm.spec.k_ee, scm.spec.k_ee + scm.spec.k_er)
                if i in scm.strategy_dag.parents[j]]
        if effs:
            out[scm.ee_vocab.labels[i]] = sorted(effs)
    return out


def match_score(scm, s, a):
    """Soft indicator that action `a` is the effect strategy of state `s`."""
    z = float(s @ scm.match_mat @ a)
    return 1.0 / (1.0 + np.exp(-scm.match_gain * (z - scm.match_theta)))


def mechanism(scm, s, a):
    """Deterministic part of the transition; the rest is exogenous."""
    return scm.a_mat @ s + scm.b_mat @ a


def _er_strategy_probs(scm, z_ee):
    k_ee, k_er = scm.spec.k_ee, scm.spec.k_er
    logits = np.zeros(k_er)
    for j in range(k_er):
        logits[j] = scm.strategy_w.get((z_ee, k_ee + j), 0.0) * scm.spec.coupling_scale
    e = np.exp(logits - logits.max())
    return e / e.sum()


def _donation_raw(scm, embeddings):
    """Mean pairwise strategy-match score over consecutive slots.

    The match form is directional (persuadee component x action component), so
    scoring every adjacent pair works for sequences starting on either role.
    """
    if len(embeddings) < 2:
        return 0.0
    return float(np.mean([match_score(scm, embeddings[t - 1], embeddings[t])
                          for t in range(1, len(embeddings))]))


def donation_for(scm, embeddings):
    """Donation in cents: squashed standardized mean match score."""
    z = (_donation_raw(scm, embeddings) - scm.donation_loc) / scm.donation_scale
    v = scm.spec.max_donation / (1.0 + np.exp(-1.5 * z))
    return int(round(v * 100))


def _roll_dialogue(scm, n_turns, rng, did="pilot"):
    """One dialogue's utterance turns; returns (turn tuples, embeddings)."""
    spec = scm.spec
    early = list(range(min(3, spec.k_er)))
    late = list(range(len(early), spec.k_er)) or early
    pref = rng.dirichlet(np.full(spec.k_ee, spec.pref_alpha))
    turns = []
    embs = []
    greeting = scm.greeting_vec + rng.standard_normal(spec.d) * spec.sigma
    turns.append((0, ER, scm.er_vocab.labels[early[0]], greeting))
    embs.append(greeting)
    s = rng.standard_normal(spec.d) * spec.sigma
    a = greeting
    ee_turn = 0
    last_z_ee = 0
    for turn in range(1, n_turns):
        if turn % 2 == 1:  # EE state turn
            z_ee = int(rng.choice(spec.k_ee, p=pref))
            noise = rng.standard_normal(spec.d) * spec.sigma
            s = mechanism(scm, s, a) + scm.ee_centers[z_ee] + noise
            turns.append((turn, EE, scm.ee_vocab.labels[z_ee], s.copy()))
            embs.append(s.copy())
            last_z_ee = z_ee
            ee_turn += 1
        else:              # ER action turn
            probs = _er_strategy_probs(scm, last_z_ee)
            mask = np.zeros(spec.k_er)
            mask[early if ee_turn <= 2 else late] = 1.0
            pz = probs * mask
            pz = pz / pz.sum() if pz.sum() > 0 else mask / mask.sum()
            z_er = int(rng.choice(spec.k_er, p=pz))
            a = scm.er_centers[z_er] + rng.standard_normal(spec.d) * spec.sigma
            turns.append((turn, ER, scm.er_vocab.labels[z_er], a.copy()))
            embs.append(a.copy())
    return turns, embs


def simulate_corpus(scm, n_dialogues, n_turns, seed):
    """Dialogues of `n_turns` slots: slot 0 an ER greeting, then EE/ER turns.

    ER turns in the first two exchanges draw from an "early" strategy subset,
    later turns from the rest, so greeting-placement pool variants have a
    detectable signal.
    """
    rng = np.random.default_rng(seed)
    dialogues = []
    for m in range(n_dialogues):
        did = f"synth{m:04d}"
        turns, embs = _roll_dialogue(scm, n_turns, rng, did)
        utts = tuple(Utterance(did, t, role, "", emb, label)
                     for t, role, label, emb in turns)
        dialogues.append(Dialogue(did, utts, donation_for(scm, embs)))
    return DialogueCorpus(tuple(dialogues), scm.spec.d)


def oracle_counterfactual(scm, transition, a_new):
    """Exact abduction: recover the additive residual, swap the action."""
    a_new = np.asarray(a_new, dtype=float)
    if a_new.shape != transition.a.shape:
        raise ValueError("action dimension mismatch")
    eps = transition.s_next - mechanism(scm, transition.s, transition.a)
    return mechanism(scm, transition.s, a_new) + eps
