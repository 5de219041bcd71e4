"""End-to-end pipeline: ingest -> annotate -> discover -> train-cf -> gen-cf
-> train-ddp -> train-policy -> evaluate.

Every stage reads its inputs from the output directory (or the configured
source paths) and writes fixed-name artifacts back, so stages can run
individually and a rerun with an unchanged configuration skips work via the
manifest's content hashes. Metric CSVs are written deterministically:
identical config and seeds give byte-identical files.
"""
import dataclasses
import hashlib
import json
import os
from configparser import ConfigParser
from dataclasses import dataclass

import numpy as np

from . import actions, bicogan, discovery, dqn, nets, reward, strategy
from .corpus import (EE, ER, load_corpus, normalize_donations, write_corpus,
                     all_transitions, to_transitions, filter_by_donation)

MANIFEST = "manifest.json"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    # paths
    corpus: str = ""
    embeddings: str = ""          # default: corpus path + ".emb"
    out: str = "out"
    # ingest
    max_amount: float = float("inf")
    # annotate
    cls_epochs: int = 200
    cls_lr: float = 0.05
    # discover
    grasp_depth: int = 3
    restarts: int = 5
    bic_penalty: float = 2.0
    use_tiers: int = 1
    # counterfactual model
    gan_epochs: int = 40
    lam: float = 1.0
    cycle_weight: float = 10.0
    noise_mode: str = "abduct"
    # counterfactual databases
    n_databases: int = 3
    pool_strategy: int = 2
    topk: int = 3
    selector: str = "causal"      # or "random"
    # reward model
    ddp_epochs: int = 60
    ddp_hidden: int = 64
    max_donation: float = 20.0
    # policy
    gamma: float = 0.99
    sync_interval: int = 100
    dqn_epochs: int = 20
    # evaluation
    prefix_len: int = 3
    max_len: int = 25
    # seeds
    seed: int = 0


def load_config(path=None, overrides=None):
    """Build a PipelineConfig from an INI file plus explicit overrides.

    The file uses flat key = value pairs; section names are organisational
    only. Unknown keys and unparseable values are configuration errors.
    """
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    values = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        cp = ConfigParser()
        cp.read(path)
        for section in cp.sections():
            for key, raw in cp.items(section):
                values[key] = raw
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    cfg = {}
    for key, raw in values.items():
        f = fields.get(key)
        if f is None:
            raise ConfigError(f"unknown config key: {key}")
        try:
            cfg[key] = f.type(raw) if not isinstance(raw, f.type) else raw
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from e
    config = PipelineConfig(**cfg)
    if config.selector not in ("causal", "random"):
        raise ConfigError(f"selector must be causal or random, got {config.selector}")
    if config.pool_strategy not in (1, 2, 3):
        raise ConfigError(f"pool_strategy must be 1, 2 or 3, got {config.pool_strategy}")
    return config


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_digest(cfg):
    rec = dataclasses.asdict(cfg)
    rec.pop("out", None)
    return hashlib.sha256(json.dumps(rec, sort_keys=True).encode()).hexdigest()


def _fmt(v):
    """Deterministic short float formatting for metric CSVs."""
    return f"{float(v):.10g}"


# ------------------------------------------------------------- checkpoints

def save_classifier(path, params):
    nets.save_net(path, nets.mlp_header(params.mlp, kind="classifier",
                                        role=params.vocab.role,
                                        labels=list(params.vocab.labels)),
                  nets.param_list(params.mlp))


def load_classifier(path):
    header, arrays = nets.load_net(path)
    if header.get("kind") != "classifier":
        raise ValueError(f"{path}: not a classifier checkpoint")
    vocab = strategy.StrategyVocab(header["role"], tuple(header["labels"]))
    return strategy.ClassifierParams(nets.mlp_from_checkpoint(header, arrays), vocab)


def save_bicogan(out_dir, params):
    for name, mlp in (("g", params.g), ("e", params.e), ("d", params.d)):
        nets.save_net(os.path.join(out_dir, f"bicogan_{name}.net"),
                      nets.mlp_header(mlp, kind=f"bicogan_{name}"),
                      nets.param_list(mlp))
    with open(os.path.join(out_dir, "bicogan.json"), "w") as f:
        json.dump({"lam": params.lam, "dim": params.dim}, f, sort_keys=True)


def load_bicogan(out_dir):
    mlps = {}
    for name in ("g", "e", "d"):
        header, arrays = nets.load_net(os.path.join(out_dir, f"bicogan_{name}.net"))
        mlps[name] = nets.mlp_from_checkpoint(header, arrays)
    with open(os.path.join(out_dir, "bicogan.json")) as f:
        meta = json.load(f)
    return bicogan.BicoganParams(mlps["g"], mlps["e"], mlps["d"],
                                 meta["lam"], meta["dim"])


def save_ddp(path, params):
    nets.save_net(path, {"kind": "ddp", "hidden": params.lstm.hidden,
                         "max_donation": params.max_donation},
                  [params.lstm.wx, params.lstm.wh, params.lstm.b,
                   params.w_out, np.atleast_1d(params.b_out)])


def load_ddp(path):
    header, arrays = nets.load_net(path)
    if header.get("kind") != "ddp":
        raise ValueError(f"{path}: not a reward-model checkpoint")
    lstm = nets.Lstm(arrays[0], arrays[1], arrays[2])
    return reward.DdpParams(lstm, arrays[3], arrays[4], header["max_donation"])


def save_qnet(path, qnet):
    arrays = []
    header = {"kind": "qnet", "gamma": qnet.gamma,
              "sync_interval": qnet.sync_interval, "parts": {}}
    for name, mlp in (("trunk", qnet.trunk), ("adv", qnet.adv),
                      ("value", qnet.value)):
        header["parts"][name] = {"acts": list(mlp.acts),
                                 "n_arrays": 2 * len(mlp.weights)}
        arrays.extend(nets.param_list(mlp))
    nets.save_net(path, header, arrays)


def load_qnet(path):
    header, arrays = nets.load_net(path)
    if header.get("kind") != "qnet":
        raise ValueError(f"{path}: not a policy checkpoint")
    mlps = {}
    i = 0
    for name in ("trunk", "adv", "value"):
        part = header["parts"][name]
        chunk = arrays[i:i + part["n_arrays"]]
        i += part["n_arrays"]
        mlps[name] = nets.Mlp(list(chunk[0::2]), list(chunk[1::2]),
                              list(part["acts"]))

    def clone(m):
        return nets.Mlp([w.copy() for w in m.weights],
                        [b.copy() for b in m.biases], list(m.acts))

    return dqn.QNet(mlps["trunk"], mlps["adv"], mlps["value"],
                    clone(mlps["trunk"]), clone(mlps["adv"]),
                    clone(mlps["value"]), header["gamma"],
                    header["sync_interval"])


# ------------------------------------------------------------------ stages

def _out(cfg, name):
    return os.path.join(cfg.out, name)


def _load_out_corpus(cfg):
    corp = load_corpus(_out(cfg, "corpus.jsonl"))
    corp, _ = normalize_donations(corp)
    return corp


def _load_annotated(cfg):
    corp = _load_out_corpus(cfg)
    ee_cls = load_classifier(_out(cfg, "ee_classifier.net"))
    er_cls = load_classifier(_out(cfg, "er_classifier.net"))
    return strategy.annotate_corpus(corp, ee_cls, er_cls), ee_cls, er_cls


def stage_ingest(cfg):
    corp = load_corpus(cfg.corpus, cfg.embeddings or None)
    corp = filter_by_donation(corp, cfg.max_amount)
    corp, stats = normalize_donations(corp)
    write_corpus(corp, _out(cfg, "corpus.jsonl"))
    with open(_out(cfg, "norm_stats.json"), "w") as f:
        json.dump({"min_cents": stats.min_cents, "max_cents": stats.max_cents,
                   "dialogues": len(corp)}, f, sort_keys=True)


def _observed_vocab(corp, role):
    labels = sorted({u.strategy for u in corp.utterances(role)
                     if u.strategy is not None})
    if not labels:
        raise ValueError(f"no gold {role} strategy labels; cannot train annotator")
    return strategy.StrategyVocab(role, tuple(labels))


def stage_annotate(cfg):
    corp = _load_out_corpus(cfg)
    for role, fname in ((EE, "ee_classifier.net"), (ER, "er_classifier.net")):
        vocab = _observed_vocab(corp, role)
        params = strategy.train_classifier(corp.utterances(role), vocab,
                                           seed=cfg.seed, epochs=cfg.cls_epochs,
                                           lr=cfg.cls_lr)
        save_classifier(_out(cfg, fname), params)


def stage_discover(cfg):
    corp, ee_cls, er_cls = _load_annotated(cfg)
    ds = discovery.build_dataset(corp, ee_cls.vocab, er_cls.vocab)
    tiers = discovery.dialogue_tiers(ds) if cfg.use_tiers else None
    dag = discovery.grasp_search(ds, depth=cfg.grasp_depth, seed=cfg.seed,
                                 restarts=cfg.restarts, penalty=cfg.bic_penalty,
                                 tiers=tiers)
    score = discovery.bic_score(ds, dag, penalty=cfg.bic_penalty)
    discovery.write_edge_list(dag, _out(cfg, "edges.csv"), _out(cfg, "edges.json"),
                              score=score)
    pairs = discovery.extract_effect_pairs(dag, ee_cls.vocab, er_cls.vocab)
    with open(_out(cfg, "cause_effect.json"), "w") as f:
        json.dump(pairs, f, sort_keys=True, indent=2)


def stage_train_cf(cfg):
    corp = _load_out_corpus(cfg)
    trans = all_transitions(corp)
    conf = bicogan.BicoganConfig(epochs=cfg.gan_epochs, lam=cfg.lam,
                                 cycle_weight=cfg.cycle_weight,
                                 noise_mode=cfg.noise_mode)
    params = bicogan.train_bicogan(trans, conf, cfg.seed)
    save_bicogan(cfg.out, params)


def _build_selector(cfg, corp, ee_cls, er_cls):
    pool = actions.build_action_pool(corp, f"S{cfg.pool_strategy}")
    mode = "tfidf" if any(u.text for u in pool.utterances) else "embedding"
    index = actions.tfidf_index(pool.utterances, mode=mode)
    if cfg.selector == "causal":
        with open(_out(cfg, "cause_effect.json")) as f:
            cause_effect = json.load(f)
    else:
        cause_effect = {}
    return actions.ActionSelector(pool, index, cause_effect, ee_cls,
                                  er_cls.vocab, top_k=cfg.topk)


def stage_gen_cf(cfg):
    corp, ee_cls, er_cls = _load_annotated(cfg)
    params = load_bicogan(cfg.out)
    selector = _build_selector(cfg, corp, ee_cls, er_cls)
    cf = bicogan.build_cf_databases(params, corp, selector, cfg.n_databases,
                                    cfg.seed, max_len=cfg.max_len,
                                    noise_mode=cfg.noise_mode)
    bicogan.save_cf_databases(cf, _out(cfg, "cf_databases.bin"))


def stage_train_ddp(cfg):
    corp = _load_out_corpus(cfg)
    conf = reward.DdpConfig(hidden=cfg.ddp_hidden, epochs=cfg.ddp_epochs,
                            max_donation=cfg.max_donation)
    params, info = reward.train_ddp(corp, conf, cfg.seed)
    save_ddp(_out(cfg, "ddp.net"), params)
    with open(_out(cfg, "ddp_info.json"), "w") as f:
        json.dump({k: v for k, v in info.items() if k != "trace"},
                  f, sort_keys=True)


def stage_train_policy(cfg):
    cf = bicogan.load_cf_databases(_out(cfg, "cf_databases.bin"))
    ddp = load_ddp(_out(cfg, "ddp.net"))
    conf = dqn.DqnConfig(gamma=cfg.gamma, sync_interval=cfg.sync_interval,
                         epochs=cfg.dqn_epochs)
    qnet, _ = dqn.train_d3qn(cf, ddp, conf, cfg.seed)
    save_qnet(_out(cfg, "qnet.net"), qnet)


def stage_evaluate(cfg):
    corp = _load_out_corpus(cfg)
    cf = bicogan.load_cf_databases(_out(cfg, "cf_databases.bin"))
    ddp = load_ddp(_out(cfg, "ddp.net"))
    qnet = load_qnet(_out(cfg, "qnet.net"))
    res = dqn.evaluate_policy(qnet, cf, corp, ddp, prefix_len=cfg.prefix_len,
                              max_len=cfg.max_len)
    variant = cfg.selector
    with open(_out(cfg, "qvalues.csv"), "w") as f:
        f.write("dialogue,max_q,mean_q,variant\n")
        for row in res["rows"]:
            f.write(f"{row['dialogue']},{_fmt(row['max_q'])},"
                    f"{_fmt(row['mean_q'])},{variant}\n")
    roll = res["rollout_cumulative"]
    gt = res["ground_truth_cumulative"]
    with open(_out(cfg, "cumulative_rewards.csv"), "w") as f:
        f.write("k,ground_truth,variant_reward,variant\n")
        for k in range(max(len(roll), len(gt))):
            g = _fmt(gt[k]) if k < len(gt) else ""
            r = _fmt(roll[k]) if k < len(roll) else ""
            f.write(f"{k + 1},{g},{r},{variant}\n")
    with open(_out(cfg, "rollouts.jsonl"), "w") as f:
        for d in corp.dialogues:
            trans = to_transitions(d)
            if not trans:
                continue
            gt_s = [trans[0].s] + [t.s_next for t in trans]
            gt_a = [t.a for t in trans]
            try:
                states, acts = dqn.rollout_for_dialogue(
                    qnet, cf, d.id, (gt_s, gt_a), cfg.prefix_len, cfg.max_len)
            except ValueError:
                continue
            rec = {"dialogue": d.id, "variant": variant,
                   "states": [[round(float(v), 6) for v in s] for s in states],
                   "actions": [[round(float(v), 6) for v in a] for a in acts]}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


STAGES = (
    ("ingest", stage_ingest,
     lambda cfg: [cfg.corpus, cfg.embeddings or str(cfg.corpus) + ".emb"],
     ["corpus.jsonl", "corpus.jsonl.emb", "corpus.jsonl.emb.idx",
      "norm_stats.json"]),
    ("annotate", stage_annotate,
     lambda cfg: [_out(cfg, "corpus.jsonl")],
     ["ee_classifier.net", "er_classifier.net"]),
    ("discover", stage_discover,
     lambda cfg: [_out(cfg, n) for n in
                  ("corpus.jsonl", "ee_classifier.net", "er_classifier.net")],
     ["edges.csv", "edges.json", "cause_effect.json"]),
    ("train-cf", stage_train_cf,
     lambda cfg: [_out(cfg, "corpus.jsonl")],
     ["bicogan_g.net", "bicogan_e.net", "bicogan_d.net", "bicogan.json"]),
    ("gen-cf", stage_gen_cf,
     lambda cfg: [_out(cfg, n) for n in
                  ("corpus.jsonl", "ee_classifier.net", "er_classifier.net",
                   "cause_effect.json", "bicogan_g.net", "bicogan_e.net")],
     ["cf_databases.bin", "cf_databases.bin.json"]),
    ("train-ddp", stage_train_ddp,
     lambda cfg: [_out(cfg, "corpus.jsonl")],
     ["ddp.net", "ddp_info.json"]),
    ("train-policy", stage_train_policy,
     lambda cfg: [_out(cfg, n) for n in ("cf_databases.bin", "ddp.net")],
     ["qnet.net"]),
    ("evaluate", stage_evaluate,
     lambda cfg: [_out(cfg, n) for n in
                  ("corpus.jsonl", "cf_databases.bin", "ddp.net", "qnet.net")],
     ["qvalues.csv", "cumulative_rewards.csv", "rollouts.jsonl"]),
)

STAGE_NAMES = tuple(s[0] for s in STAGES)


def _load_manifest(cfg):
    path = _out(cfg, MANIFEST)
    if os.path.isfile(path):
        with open(path) as f:
            return json.load(f)
    return {"version": 1, "stages": {}}


def _save_manifest(cfg, manifest):
    with open(_out(cfg, MANIFEST), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)


def _stage_record(cfg, inputs, outputs):
    return {
        "config": _config_digest(cfg),
        "seed": cfg.seed,
        "inputs": {p: _sha256(p) for p in inputs if os.path.isfile(p)},
        "outputs": {p: _sha256(_out(cfg, p)) for p in outputs
                    if os.path.isfile(_out(cfg, p))},
    }


def _can_skip(cfg, rec, inputs, outputs):
    if rec is None or rec.get("config") != _config_digest(cfg):
        return False
    for p in inputs:
        if not os.path.isfile(p) or rec["inputs"].get(p) != _sha256(p):
            return False
    for p in outputs:
        full = _out(cfg, p)
        if not os.path.isfile(full) or rec["outputs"].get(p) != _sha256(full):
            return False
    return True


def run_stage(cfg, name, manifest=None, log=None):
    """Run one stage by name, honouring manifest skips; updates the manifest."""
    for sname, fn, inputs_fn, outputs in STAGES:
        if sname == name:
            break
    else:
        raise ConfigError(f"unknown stage: {name}")
    os.makedirs(cfg.out, exist_ok=True)
    manifest = manifest if manifest is not None else _load_manifest(cfg)
    inputs = inputs_fn(cfg)
    if _can_skip(cfg, manifest["stages"].get(name), inputs, outputs):
        if log:
            log(f"{name}: up to date, skipped")
        return manifest
    if log:
        log(f"{name}: running")
    try:
        fn(cfg)
    except Exception as e:
        raise StageError(name, e) from e
    manifest["stages"][name] = _stage_record(cfg, inputs, outputs)
    _save_manifest(cfg, manifest)
    return manifest


def run_pipeline(cfg, log=None):
    """All stages in order; fails before any stage on a bad input path."""
    if not cfg.corpus:
        raise ConfigError("no corpus path configured")
    if not os.path.isfile(cfg.corpus):
        raise ConfigError(f"corpus file not found: {cfg.corpus}")
    emb = cfg.embeddings or str(cfg.corpus) + ".emb"
    if not os.path.isfile(emb):
        raise ConfigError(f"embedding file not found: {emb}")
    os.makedirs(cfg.out, exist_ok=True)
    manifest = _load_manifest(cfg)
    for name, _, _, _ in STAGES:
        manifest = run_stage(cfg, name, manifest, log=log)
    return manifest
