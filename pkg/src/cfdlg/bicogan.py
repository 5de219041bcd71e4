"""Adversarial transition model (generator / encoder / discriminator) and
counterfactual database construction.

The generator maps (state, action, noise) to the next state; the encoder
inverts an observed next state into (state, action, noise) estimates; the
discriminator sees (triple, next state) pairs. Counterfactual stepping is
abduction-action-prediction: recover the noise from the factual next state,
swap the action, regenerate.
"""
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import nets
from .corpus import EE, ER, to_transitions


@dataclass
class BicoganConfig:
    epochs: int = 40
    batch: int = 64
    lam: float = 1.0            # (state, action) reconstruction weight
    cycle_weight: float = 10.0  # forward-cycle weight, see train_bicogan
    lr: float = 1e-3
    b1: float = 0.5
    hidden_mult: int = 4
    layers: int = 2
    noise_mode: str = "abduct"  # or "prior"


@dataclass
class BicoganParams:
    g: nets.Mlp        # 3d -> d
    e: nets.Mlp        # d -> 3d
    d: nets.Mlp        # 4d -> 1 logit
    lam: float
    dim: int


def init_bicogan(dim, config, rng):
    h = config.hidden_mult * dim
    hid = [h] * config.layers
    acts = ["relu"] * config.layers + ["identity"]
    g = nets.init_mlp([3 * dim] + hid + [dim], acts, rng)
    e = nets.init_mlp([dim] + hid + [3 * dim], acts, rng)
    d = nets.init_mlp([4 * dim] + hid + [1], acts, rng)
    return BicoganParams(g, e, d, config.lam, dim)


def _sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


def _softplus(u):
    return np.logaddexp(0.0, u)


def train_bicogan(transitions, config, seed):
    """Alternating discriminator / generator+encoder updates.

    The value function carries the lam-weighted reconstruction term between
    (state, action) and the encoder's estimates. A forward-cycle penalty
    (generator applied to the encoder's abducted noise must reproduce the
    observed next state) stabilizes abduction at this scale; set
    cycle_weight=0 for the bare adversarial objective.
    """
    if not transitions:
        raise ValueError("no transitions to train on")
    dim = len(transitions[0].s)
    rng = np.random.default_rng(seed)
    params = init_bicogan(dim, config, rng)
    s = np.array([t.s for t in transitions], dtype=float)
    a = np.array([t.a for t in transitions], dtype=float)
    sn = np.array([t.s_next for t in transitions], dtype=float)
    n_all = len(transitions)

    d_arrays = nets.param_list(params.d)
    ge_arrays = nets.param_list(params.g) + nets.param_list(params.e)
    n_g = len(nets.param_list(params.g))
    st_d = nets.adam_init(d_arrays, lr=config.lr, b1=config.b1)
    st_ge = nets.adam_init(ge_arrays, lr=config.lr, b1=config.b1)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n_all)
        ep = {"d_loss": 0.0, "ge_adv": 0.0, "recon": 0.0, "cycle": 0.0, "v": 0.0}
        n_batches = 0
        for k in range(0, n_all, config.batch):
            idx = order[k:k + config.batch]
            sb, ab, snb = s[idx], a[idx], sn[idx]
            nb = len(idx)
            eps = rng.standard_normal((nb, dim))
            z = np.concatenate([sb, ab, eps], axis=1)

            # --- discriminator step (G, E frozen)
            e_out = nets.mlp_forward(params.e, snb)
            xr = np.concatenate([e_out, snb], axis=1)
            xf = np.concatenate([z, nets.mlp_forward(params.g, z)], axis=1)
            ur, cr = nets.mlp_forward_cache(params.d, xr)
            uf, cf = nets.mlp_forward_cache(params.d, xf)
            ur, uf = ur[:, 0], uf[:, 0]
            d_loss = float(np.mean(_softplus(-ur)) + np.mean(_softplus(uf)))
            gr = ((_sigmoid(ur) - 1.0) / nb)[:, None]
            gf = (_sigmoid(uf) / nb)[:, None]
            grads_r, _ = nets.mlp_backward(params.d, xr, gr, cr)
            grads_f, _ = nets.mlp_backward(params.d, xf, gf, cf)
            grads_d = [p + q for p, q in zip(grads_r, grads_f)]
            d_arrays = nets.adam_step(d_arrays, grads_d, st_d)
            nets.set_params(params.d, d_arrays)

            # --- generator + encoder step (D frozen)
            xg, cg = nets.mlp_forward_cache(params.g, z)
            xf = np.concatenate([z, xg], axis=1)
            uf, cf = nets.mlp_forward_cache(params.d, xf)
            uf = uf[:, 0]
            g_adv = float(np.mean(_softplus(-uf)))
            guf = ((_sigmoid(uf) - 1.0) / nb)[:, None]
            _, gin = nets.mlp_backward(params.d, xf, guf, cf)
            grads_g, _ = nets.mlp_backward(params.g, z, gin[:, 3 * dim:], cg)

            e_out, ce = nets.mlp_forward_cache(params.e, snb)
            xr = np.concatenate([e_out, snb], axis=1)
            ur, cr = nets.mlp_forward_cache(params.d, xr)
            ur = ur[:, 0]
            e_adv = float(np.mean(_softplus(ur)))
            gur = (_sigmoid(ur) / nb)[:, None]
            _, gin_r = nets.mlp_backward(params.d, xr, gur, cr)
            ge_out = gin_r[:, :3 * dim].copy()

            sa = np.concatenate([sb, ab], axis=1)
            recon = config.lam * float(np.mean(np.sum((e_out[:, :2 * dim] - sa) ** 2, axis=1)))
            ge_out[:, :2 * dim] += config.lam * 2.0 * (e_out[:, :2 * dim] - sa) / nb

            cycle = 0.0
            if config.cycle_weight > 0:
                eps_hat = e_out[:, 2 * dim:]
                zc = np.concatenate([sb, ab, eps_hat], axis=1)
                xc, cc = nets.mlp_forward_cache(params.g, zc)
                cycle = config.cycle_weight * float(np.mean(np.sum((xc - snb) ** 2, axis=1)))
                gxc = config.cycle_weight * 2.0 * (xc - snb) / nb
                grads_gc, gzc = nets.mlp_backward(params.g, zc, gxc, cc)
                grads_g = [p + q for p, q in zip(grads_g, grads_gc)]
                ge_out[:, 2 * dim:] += gzc[:, 2 * dim:]

            grads_e, _ = nets.mlp_backward(params.e, snb, ge_out, ce)
            ge_arrays = nets.adam_step(ge_arrays, grads_g + grads_e, st_ge)
            nets.set_params(params.g, ge_arrays[:n_g])
            nets.set_params(params.e, ge_arrays[n_g:])

            v = float(np.mean(np.log(_sigmoid(ur) + 1e-12))
                      + np.mean(np.log(1.0 - _sigmoid(uf) + 1e-12))
                      - recon)
            for key, val in [("d_loss", d_loss), ("ge_adv", g_adv + e_adv),
                             ("recon", recon), ("cycle", cycle), ("v", v)]:
                ep[key] += val
            n_batches += 1
            if not np.isfinite(d_loss) or not np.isfinite(g_adv + e_adv + recon + cycle):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        trace.append({k: v / n_batches for k, v in ep.items()})
    params.trace = trace
    return params


def encode(params, s_next):
    """Split the encoder output into (state, action, noise) estimates."""
    s_next = np.asarray(s_next, dtype=float)
    if s_next.shape[-1] != params.dim:
        raise ValueError("next-state dimension mismatch")
    out = nets.mlp_forward(params.e, s_next)
    d = params.dim
    return out[..., :d], out[..., d:2 * d], out[..., 2 * d:]


def generate_next(params, s, a, eps):
    for v in (s, a, eps):
        if np.asarray(v).shape[-1] != params.dim:
            raise ValueError("generator input dimension mismatch")
    z = np.concatenate([np.asarray(s, dtype=float), np.asarray(a, dtype=float),
                        np.asarray(eps, dtype=float)], axis=-1)
    return nets.mlp_forward(params.g, z)


def counterfactual_step(params, transition, a_new, noise_mode="abduct", rng=None):
    """Abduct noise from the observed next state, then regenerate with a_new."""
    if noise_mode == "abduct":
        _, _, eps = encode(params, transition.s_next)
    else:
        rng = rng or np.random.default_rng(0)
        eps = rng.standard_normal(params.dim)
    return generate_next(params, transition.s, a_new, eps)


@dataclass(frozen=True)
class CfDialogue:
    dialogue_id: str
    states: tuple            # k+1 state vectors, states[0] == ground-truth s_0
    actions: tuple           # k action vectors
    action_labels: tuple = ()

    def slots(self):
        """Alternating (role, vector) sequence."""
        out = [(EE, self.states[0])]
        for a, s in zip(self.actions, self.states[1:]):
            out.append((ER, a))
            out.append((EE, s))
        return out


@dataclass(frozen=True)
class CfDatabaseSet:
    databases: tuple         # N tuples of CfDialogue
    dim: int

    @property
    def n(self):
        return len(self.databases)


def build_cf_databases(params, corp, selector, n_dbs, seed, max_len=25,
                       noise_mode="abduct"):
    """N counterfactual databases: per dialogue, roll (state, action) pairs
    starting from the ground-truth opening state.

    Noise is abducted per step from the factual next state at the same index
    while one exists, then sampled fresh.
    """
    dbs = []
    for i in range(n_dbs):
        rng = np.random.default_rng([seed, i])
        db = []
        for d in corp.dialogues:
            trans = to_transitions(d)
            if not trans:
                continue
            n_steps = min(len(trans), (max_len - 1) // 2)
            s_cur = trans[0].s.copy()
            states = [s_cur]
            acts, labels = [], []
            ee_utts = {t.s_turn: t for t in trans}
            for t in range(n_steps):
                factual = trans[t]
                proxy = replace(_ee_utt(d, factual.s_turn), embedding=s_cur)
                chosen = selector.select(proxy, rng)
                a_new = np.asarray(chosen.embedding, dtype=float)
                if noise_mode == "abduct":
                    _, _, eps = encode(params, factual.s_next)
                else:
                    eps = rng.standard_normal(params.dim)
                s_cur = generate_next(params, s_cur, a_new, eps)
                states.append(s_cur)
                acts.append(a_new)
                labels.append(chosen.label_or_argmax(selector.er_vocab))
            db.append(CfDialogue(d.id, tuple(states), tuple(acts), tuple(labels)))
        dbs.append(tuple(db))
    return CfDatabaseSet(tuple(dbs), params.dim)


def _ee_utt(dialogue, turn):
    for u in dialogue.utterances:
        if u.turn == turn:
            return u
    raise KeyError(turn)


def save_cf_databases(cf, path):
    """Binary embedding block plus a JSON index of (db, dialogue, slot, role)."""
    from .corpus import EMB_MAGIC
    rows, index = [], []
    for bi, db in enumerate(cf.databases):
        for cd in db:
            for slot, (role, vec) in enumerate(cd.slots()):
                rows.append(np.asarray(vec, dtype="<f4"))
                index.append({"db": bi, "dialogue": cd.dialogue_id,
                              "slot": slot, "role": role})
    rows = np.asarray(rows, dtype="<f4") if rows else np.zeros((0, cf.dim), "<f4")
    with open(path, "wb") as f:
        f.write(EMB_MAGIC)
        f.write(struct.pack("<II", rows.shape[0], rows.shape[1] if rows.size else cf.dim))
        f.write(rows.tobytes())
    with open(str(path) + ".json", "w") as f:
        json.dump({"n_databases": cf.n, "dim": cf.dim, "index": index}, f)


def load_cf_databases(path):
    from .corpus import EMB_MAGIC
    with open(path, "rb") as f:
        if f.read(len(EMB_MAGIC)) != EMB_MAGIC:
            raise ValueError(f"{path}: bad magic")
        n, d = struct.unpack("<II", f.read(8))
        rows = np.frombuffer(f.read(4 * n * d), dtype="<f4").reshape(n, d).astype(float)
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    dbs = []
    for bi in range(meta["n_databases"]):
        recs = [(i, r) for i, r in enumerate(meta["index"]) if r["db"] == bi]
        by_dlg = {}
        for i, r in recs:
            by_dlg.setdefault(r["dialogue"], []).append((r["slot"], r["role"], rows[i]))
        db = []
        for did in sorted(by_dlg):
            slots = sorted(by_dlg[did], key=lambda t: t[0])
            states = tuple(v for _, role, v in slots if role == EE)
            acts = tuple(v for _, role, v in slots if role == ER)
            db.append(CfDialogue(did, states, acts))
        dbs.append(tuple(db))
    return CfDatabaseSet(tuple(dbs), meta["dim"])
