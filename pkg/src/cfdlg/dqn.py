"""Dueling double Q-learning on counterfactual databases, plus rollout.

Actions are continuous embeddings, so "all actions" at a step means the
finite candidate set drawn from the N databases at the matching slot.
Q(s, a) = V(s) + A(s, a) - mean over the candidate set of A(s, .).
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .reward import predict_donation


@dataclass
class DqnConfig:
    gamma: float = 0.99
    sync_interval: int = 100
    batch: int = 32
    lr: float = 1e-3
    epochs: int = 20
    hidden: int = 64


@dataclass
class QNet:
    trunk: nets.Mlp          # s (+) a -> hidden
    adv: nets.Mlp            # hidden -> 1
    value: nets.Mlp          # s -> 1
    trunk_t: nets.Mlp
    adv_t: nets.Mlp
    value_t: nets.Mlp
    gamma: float
    sync_interval: int


@dataclass(frozen=True)
class ReplayItem:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    next_candidates: tuple
    terminal: bool
    # actions available at this step's slot, for centering; defaults to {a}
    step_candidates: tuple = ()


def _clone_mlp(m):
    return nets.Mlp([w.copy() for w in m.weights], [b.copy() for b in m.biases],
                    list(m.acts))


def init_qnet(dim, config, rng):
    trunk = nets.init_mlp([2 * dim, config.hidden], ["relu"], rng)
    adv = nets.init_mlp([config.hidden, 1], ["identity"], rng)
    value = nets.init_mlp([dim, config.hidden, 1], ["relu", "identity"], rng)
    return QNet(trunk, adv, value, _clone_mlp(trunk), _clone_mlp(adv),
                _clone_mlp(value), config.gamma, config.sync_interval)


def sync_target(qnet):
    qnet.trunk_t = _clone_mlp(qnet.trunk)
    qnet.adv_t = _clone_mlp(qnet.adv)
    qnet.value_t = _clone_mlp(qnet.value)


def _nets(qnet, use_target):
    if use_target:
        return qnet.trunk_t, qnet.adv_t, qnet.value_t
    return qnet.trunk, qnet.adv, qnet.value


def _advantage(qnet, s, actions, use_target=False):
    trunk, adv, _ = _nets(qnet, use_target)
    x = np.concatenate([np.broadcast_to(s, (len(actions), len(s))),
                        np.asarray(actions, dtype=float)], axis=1)
    return nets.mlp_forward(adv, nets.mlp_forward(trunk, x))[:, 0]


def q_values(qnet, s, candidates, use_target=False):
    """Q over a candidate action set, mean-centered dueling aggregation."""
    _, _, value = _nets(qnet, use_target)
    v = float(nets.mlp_forward(value, np.asarray(s, dtype=float))[0])
    a = _advantage(qnet, s, candidates, use_target)
    return v + a - a.mean()


def q_value(qnet, s, a, candidates=None, use_target=False):
    cands = [np.asarray(a, dtype=float)] if candidates is None else list(candidates)
    cands = [np.asarray(c, dtype=float) for c in cands]
    key = next((i for i, c in enumerate(cands)
                if np.array_equal(c, np.asarray(a, dtype=float))), None)
    if key is None:
        cands.append(np.asarray(a, dtype=float))
        key = len(cands) - 1
    return float(q_values(qnet, np.asarray(s, dtype=float), cands, use_target)[key])


def d3qn_target(qnet, item):
    """Terminal: r. Else r + gamma * Q_target(s_next, argmax_main candidate)."""
    if item.terminal:
        return float(item.r)
    if not item.next_candidates:
        raise ValueError("non-terminal replay item without candidate actions")
    qm = q_values(qnet, item.s_next, list(item.next_candidates), use_target=False)
    k = int(np.argmax(qm))
    qt = q_values(qnet, item.s_next, list(item.next_candidates), use_target=True)
    return float(item.r + qnet.gamma * qt[k])


def _train_arrays(qnet):
    return (nets.param_list(qnet.trunk) + nets.param_list(qnet.adv)
            + nets.param_list(qnet.value))


def _set_train_arrays(qnet, arrays):
    nt = len(nets.param_list(qnet.trunk))
    na = len(nets.param_list(qnet.adv))
    nets.set_params(qnet.trunk, arrays[:nt])
    nets.set_params(qnet.adv, arrays[nt:nt + na])
    nets.set_params(qnet.value, arrays[nt + na:])


def q_loss_and_grads(qnet, batch, targets):
    """MSE between Q_main(s, a) and fixed targets, grads through V, A and the
    candidate-mean centering term."""
    arrays = _train_arrays(qnet)
    grads = [np.zeros_like(x) for x in arrays]
    nt = len(nets.param_list(qnet.trunk))
    na = len(nets.param_list(qnet.adv))
    loss = 0.0
    nb = len(batch)
    for item, tgt in zip(batch, targets):
        cset = [np.asarray(c, dtype=float) for c in item.step_candidates]
        if not any(np.array_equal(c, item.a) for c in cset):
            cset = [np.asarray(item.a, dtype=float)] + cset
        k_a = next(i for i, c in enumerate(cset) if np.array_equal(c, item.a))
        s = np.asarray(item.s, dtype=float)
        x = np.concatenate([np.broadcast_to(s, (len(cset), len(s))),
                            np.asarray(cset)], axis=1)
        hid, c_tr = nets.mlp_forward_cache(qnet.trunk, x)
        advs, c_ad = nets.mlp_forward_cache(qnet.adv, hid)
        advs = advs[:, 0]
        vout, c_v = nets.mlp_forward_cache(qnet.value, s)
        q = float(vout[0]) + advs[k_a] - advs.mean()
        err = q - tgt
        loss += err * err / nb
        g = 2.0 * err / nb
        gadv = np.full(len(cset), -g / len(cset))
        gadv[k_a] += g
        g_ad, g_hid = nets.mlp_backward(qnet.adv, hid, gadv[:, None], c_ad)
        g_tr, _ = nets.mlp_backward(qnet.trunk, x, g_hid, c_tr)
        g_v, _ = nets.mlp_backward(qnet.value, s, np.array([g]), c_v)
        for acc, gg in zip(grads, g_tr + g_ad + g_v):
            acc += gg
    return loss, grads


def train_replay(items, dim, config, seed, batches=None):
    """Fit Q to double-DQN targets over replay items; returns (qnet, trace).

    `batches`: optional pre-grouped item index lists (one update each);
    defaults to shuffled minibatches of config.batch.
    """
    rng = np.random.default_rng(seed)
    qnet = init_qnet(dim, config, rng)
    arrays = _train_arrays(qnet)
    st = nets.adam_init(arrays, lr=config.lr)
    trace = []
    updates = 0
    for _ in range(config.epochs):
        if batches is None:
            order = rng.permutation(len(items))
            groups = [order[k:k + config.batch]
                      for k in range(0, len(items), config.batch)]
        else:
            groups = batches
        ep_loss = 0.0
        for grp in groups:
            batch = [items[i] for i in grp]
            targets = [d3qn_target(qnet, it) for it in batch]
            loss, grads = q_loss_and_grads(qnet, batch, targets)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at update {updates}")
            arrays = nets.adam_step(arrays, grads, st)
            _set_train_arrays(qnet, arrays)
            updates += 1
            if updates % qnet.sync_interval == 0:
                sync_target(qnet)
            ep_loss += loss
        trace.append(ep_loss / max(1, len(groups)))
    return qnet, trace


def build_replay(cf_dbs, reward_params):
    """Replay items from the counterfactual databases with terminal-only rewards.

    Candidates at step t+1 are the actions the N databases hold at that slot
    for the same dialogue. Returns (items, batches) with one batch per
    (database, dialogue).
    """
    by_dlg = {}
    for bi, db in enumerate(cf_dbs.databases):
        for cd in db:
            by_dlg.setdefault(cd.dialogue_id, {})[bi] = cd
    items, batches = [], []
    for bi, db in enumerate(cf_dbs.databases):
        for cd in db:
            variants = by_dlg[cd.dialogue_id]
            idxs = []
            k = len(cd.actions)
            if k == 0:
                continue
            seq = np.array([v for _, v in cd.slots()])
            final_r = predict_donation(reward_params, seq)
            for t in range(k):
                terminal = t == k - 1
                cands = tuple(v.actions[t + 1] for v in variants.values()
                              if len(v.actions) > t + 1)
                step_cands = tuple(v.actions[t] for v in variants.values()
                                   if len(v.actions) > t)
                item = ReplayItem(cd.states[t], cd.actions[t],
                                  final_r if terminal else 0.0,
                                  cd.states[t + 1], cands,
                                  terminal or not cands, step_cands)
                idxs.append(len(items))
                items.append(item)
            batches.append(idxs)
    return items, batches


def train_d3qn(cf_dbs, reward_params, config, seed):
    """Policy learning on the counterfactual databases; one update per dialogue."""
    items, batches = build_replay(cf_dbs, reward_params)
    if not items:
        raise ValueError("no replay items; are the databases empty?")
    qnet, trace = train_replay(items, cf_dbs.dim, config, seed, batches=batches)
    return qnet, trace


def rollout(qnet, cf_dbs, gt_states_actions, prefix_len, max_len=25):
    """Greedy optimized dialogue: ground-truth prefix, then per-slot argmax-Q
    actions drawn from the N databases, each followed by its successor state.

    `gt_states_actions`: (states, actions) arrays for the ground-truth
    dialogue in slot space (s_0, a_0, s_1, ...). Returns (states, actions).
    """
    if prefix_len < 1:
        raise ValueError("prefix_len must be >= 1")
    gt_s, gt_a = gt_states_actions
    did_dbs = cf_dbs.databases
    states, actions = [gt_s[0]], []
    slots = 1
    # consume the ground-truth prefix in slot order
    while slots < prefix_len and slots < max_len:
        if slots % 2 == 1:
            if len(gt_a) <= len(actions):
                break
            actions.append(gt_a[len(actions)])
        else:
            if len(gt_s) <= len(states):
                break
            states.append(gt_s[len(states)])
        slots += 1
    if len(actions) == len(states) and len(gt_s) > len(states) and slots < max_len:
        # prefix ended on an action slot; complete it with the factual state
        states.append(gt_s[len(states)])
        slots += 1
    while slots + 2 <= max_len:
        t = len(actions)
        cands, succ = [], []
        for db in did_dbs:
            cd = db[0]
            if len(cd.actions) > t:
                cands.append(cd.actions[t])
                succ.append(cd.states[t + 1])
        if not cands:
            warnings.warn("databases exhausted, rollout truncated")
            break
        qs = q_values(qnet, states[-1], cands)
        k = int(np.argmax(qs))
        actions.append(cands[k])
        states.append(succ[k])
        slots += 2
    return states, actions


def rollout_for_dialogue(qnet, cf_dbs, dialogue_id, gt_states_actions,
                         prefix_len, max_len=25):
    """rollout() against the databases' entries for one dialogue."""
    picked = []
    for db in cf_dbs.databases:
        for cd in db:
            if cd.dialogue_id == dialogue_id:
                picked.append((cd,))
    sub = type(cf_dbs)(tuple(picked), cf_dbs.dim)
    return rollout(qnet, sub, gt_states_actions, prefix_len, max_len)


def evaluate_policy(qnet, cf_dbs, corp, reward_params, prefix_len=3,
                    max_len=25):
    """Per-dialogue Q statistics plus rollout and ground-truth reward curves."""
    from .corpus import to_transitions
    from .reward import cumulative_rewards, dialogue_sequence
    rows = []
    roll_seqs, gt_seqs = [], []
    for d in corp.dialogues:
        trans = to_transitions(d)
        if not trans:
            continue
        gt_s = [trans[0].s] + [t.s_next for t in trans]
        gt_a = [t.a for t in trans]
        cands = []
        for db in cf_dbs.databases:
            for cd in db:
                if cd.dialogue_id == d.id and cd.actions:
                    cands.append(cd.actions[0])
        if not cands:
            continue
        qs = q_values(qnet, gt_s[0], cands)
        states, acts = rollout_for_dialogue(qnet, cf_dbs, d.id, (gt_s, gt_a),
                                            prefix_len, max_len)
        seq = [states[0]]
        for a, s in zip(acts, states[1:]):
            seq.extend([a, s])
        roll_seqs.append(np.asarray(seq))
        gt_seqs.append(dialogue_sequence(d))
        rows.append({"dialogue": d.id, "max_q": float(np.max(qs)),
                     "mean_q": float(np.mean(qs))})
    return {
        "rows": rows,
        "rollout_cumulative": cumulative_rewards(reward_params, roll_seqs),
        "ground_truth_cumulative": cumulative_rewards(reward_params, gt_seqs),
    }
