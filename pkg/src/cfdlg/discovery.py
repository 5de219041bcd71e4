"""Permutation-based DAG search over strategy variables plus donation.

Score is decomposable Gaussian BIC computed from the scatter matrix, so a
local score is a couple of small solves regardless of sample count. The
search greedily applies score-improving tuck moves on variable orderings,
with depth-limited sideways recursion and seeded restarts.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import EE, ER

RIDGE = 1e-8
SCORE_TOL = 1e-9


@dataclass(frozen=True)
class CausalDataset:
    names: tuple
    x: np.ndarray          # (n rows, p columns), one row per dialogue

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class Dag:
    nodes: tuple
    parents: tuple         # tuple of sorted index tuples, one per node

    def edges(self):
        for child, ps in enumerate(self.parents):
            for p in ps:
                yield p, child

    def n_edges(self):
        return sum(len(ps) for ps in self.parents)


def is_acyclic(dag):
    indeg = [len(ps) for ps in dag.parents]
    children = [[] for _ in dag.nodes]
    for p, c in dag.edges():
        children[p].append(c)
    stack = [i for i, d in enumerate(indeg) if d == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for c in children[u]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == len(dag.nodes)


def build_dataset(corp, ee_vocab, er_vocab):
    """One row per dialogue: mean EE dist, mean ER dist, normalized donation."""
    names = tuple(f"ee:{l}" for l in ee_vocab.labels) + \
        tuple(f"er:{l}" for l in er_vocab.labels) + ("y",)
    rows = []
    for d in corp.dialogues:
        ee = [u.strategy_dist for u in d.utterances if u.role == EE]
        er = [u.strategy_dist for u in d.utterances if u.role == ER]
        if not ee or not er or any(v is None for v in ee + er):
            warnings.warn(f"dialogue {d.id}: missing a role or distributions, skipped")
            continue
        if d.donation_norm is None:
            raise ValueError(f"dialogue {d.id}: donations not normalized")
        rows.append(np.concatenate([np.mean(ee, axis=0), np.mean(er, axis=0),
                                    [d.donation_norm]]))
    return CausalDataset(names, np.asarray(rows, dtype=float))


class BicScorer:
    """Cached local Gaussian BIC: -n*log(RSS_i/n) - penalty*|pa_i|*log n."""

    def __init__(self, dataset, penalty=2.0):
        x = dataset.x
        self.n = x.shape[0]
        self.p = x.shape[1]
        xc = x - x.mean(axis=0)
        self.scatter = xc.T @ xc
        self.penalty = penalty
        self._cache = {}

    def local(self, node, parents):
        parents = tuple(sorted(parents))
        key = (node, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        c = self.scatter
        if parents:
            cpp = c[np.ix_(parents, parents)]
            cpi = c[np.ix_(parents, (node,))][:, 0]
            try:
                beta = np.linalg.solve(cpp, cpi)
            except np.linalg.LinAlgError:
                beta = np.linalg.solve(cpp + RIDGE * np.eye(len(parents)), cpi)
            rss = c[node, node] - cpi @ beta
        else:
            rss = c[node, node]
        rss = max(rss, 1e-10)
        score = -self.n * np.log(rss / self.n) - self.penalty * len(parents) * np.log(self.n)
        self._cache[key] = score
        return score


def bic_score(dataset, dag, penalty=2.0, scorer=None):
    if tuple(dag.nodes) != tuple(dataset.names):
        raise ValueError("dag nodes do not match dataset columns")
    scorer = scorer or BicScorer(dataset, penalty)
    return sum(scorer.local(i, ps) for i, ps in enumerate(dag.parents))


def _select_parents(scorer, node, preds):
    """Greedy forward-add / backward-delete over the predecessor set."""
    parents = []
    best = scorer.local(node, parents)
    improved = True
    while improved:
        improved = False
        gain, pick = SCORE_TOL, None
        for q in preds:
            if q in parents:
                continue
            s = scorer.local(node, parents + [q])
            if s - best > gain:
                gain, pick = s - best, q
        if pick is not None:
            parents.append(pick)
            best += gain
            improved = True
    improved = True
    while improved and parents:
        improved = False
        for q in list(parents):
            rest = [r for r in parents if r != q]
            s = scorer.local(node, rest)
            if s > best + SCORE_TOL:
                parents, best = rest, s
                improved = True
                break
    return tuple(sorted(parents)), best


def dag_from_permutation(dataset, order, penalty=2.0, scorer=None):
    """Best DAG consistent with `order` under greedy local BIC selection."""
    scorer = scorer or BicScorer(dataset, penalty)
    parents = [()] * dataset.p
    for k, node in enumerate(order):
        parents[node], _ = _select_parents(scorer, node, list(order[:k]))
    return Dag(tuple(dataset.names), tuple(parents))


def _order_dag_score(scorer, order):
    parents = [()] * scorer.p
    total = 0.0
    for k, node in enumerate(order):
        parents[node], s = _select_parents(scorer, node, list(order[:k]))
        total += s
    return total, tuple(parents)


def _ancestor_sets(p, parents):
    anc = [set() for _ in range(p)]
    # parents are earlier in some valid order; iterate until fixpoint
    changed = True
    while changed:
        changed = False
        for c in range(p):
            for q in parents[c]:
                add = anc[q] | {q}
                if not add <= anc[c]:
                    anc[c] |= add
                    changed = True
    return anc


def tuck(order, i, j, dag=None):
    """Move order[j] (plus intervening ancestors w.r.t. `dag`) before order[i].

    Relative order inside the moved block and the untouched remainder is
    preserved; i == j is the identity. Always returns a permutation.
    """
    order = list(order)
    if i == j:
        return tuple(order)
    if not 0 <= i < j < len(order):
        raise ValueError("tuck requires position i < position j")
    anc = set()
    if dag is not None:
        anc = _ancestor_sets(len(dag.nodes), dag.parents)[order[j]]
    block = [order[k] for k in range(i, j) if order[k] in anc] + [order[j]]
    rest = [order[k] for k in range(i, j) if order[k] not in anc]
    return tuple(order[:i] + block + rest + order[j + 1:])


def grasp_search(dataset, depth=3, seed=0, restarts=5, penalty=2.0, tiers=None):
    """Seeded-restart greedy tuck search; returns the best-scoring DAG found.

    `tiers`: optional ordered partition of column indices (background
    knowledge). Restarts shuffle within each tier only, so score ties inside a
    Markov equivalence class resolve toward the tier order; tucks may still
    cross tiers when the score strictly improves.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if tiers is not None:
        flat = sorted(i for t in tiers for i in t)
        if flat != list(range(dataset.p)):
            raise ValueError("tiers must partition the column indices")
    scorer = BicScorer(dataset, penalty)
    cache = {}

    def ev(order):
        hit = cache.get(order)
        if hit is None:
            hit = _order_dag_score(scorer, order)
            cache[order] = hit
        return hit

    def candidates(order, parents):
        pos = {v: k for k, v in enumerate(order)}
        out = []
        for c in range(len(order)):
            for q in parents[c]:
                # tuck the child before its parent
                out.append((pos[q], pos[c]))
        out.sort()
        return out

    def dfs(order, score, parents, d, seen):
        anc = _ancestor_sets(len(order), parents)
        pos = {v: k for k, v in enumerate(order)}
        for c in range(len(order)):
            for q in sorted(parents[c]):
                i, j = pos[q], pos[c]
                block = [order[k] for k in range(i, j) if order[k] in anc[order[j]]] \
                    + [order[j]]
                rest = [order[k] for k in range(i, j) if order[k] not in anc[order[j]]]
                new = tuple(list(order[:i]) + block + rest + list(order[j + 1:]))
                if new == order or new in seen:
                    continue
                s2, par2 = ev(new)
                if s2 > score + SCORE_TOL:
                    return new, s2, par2
                if d > 1:
                    seen.add(new)
                    r = dfs(new, score, par2, d - 1, seen)
                    if r is not None:
                        return r
        return None

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        if tiers is None:
            order = tuple(int(v) for v in rng.permutation(dataset.p))
        else:
            order = tuple(int(v) for t in tiers
                          for v in rng.permutation(np.asarray(t, dtype=int)))
        score, parents = ev(order)
        while True:
            r = dfs(order, score, parents, depth, {order})
            if r is None:
                break
            order, score, parents = r
        if best is None or score > best[0] + SCORE_TOL:
            best = (score, order, parents)
    return Dag(tuple(dataset.names), best[2])


def dialogue_tiers(dataset):
    """Temporal tiers for a dialogue dataset: EE columns, ER columns, outcome."""
    ee = [i for i, n in enumerate(dataset.names) if n.startswith("ee:")]
    er = [i for i, n in enumerate(dataset.names) if n.startswith("er:")]
    rest = [i for i in range(dataset.p) if i not in set(ee) | set(er)]
    return [t for t in (ee, er, rest) if t]


def extract_effect_pairs(dag, ee_vocab, er_vocab):
    """EE-strategy -> ordered ER-strategy effect lists from the DAG's edges."""
    col_role = []
    col_label = []
    for name in dag.nodes:
        if name.startswith("ee:"):
            col_role.append(EE)
            col_label.append(name[3:])
        elif name.startswith("er:"):
            col_role.append(ER)
            col_label.append(name[3:])
        else:
            col_role.append("y")
            col_label.append(name)
    out = {}
    for tail, head in dag.edges():
        if col_role[tail] == EE and col_role[head] == ER:
            out.setdefault(col_label[tail], []).append(col_label[head])
    return {k: sorted(v) for k, v in sorted(out.items())}


def write_edge_list(dag, csv_path, json_path, score=None):
    import json
    with open(csv_path, "w") as f:
        f.write("cause,effect\n")
        for p, c in sorted(dag.edges()):
            f.write(f"{dag.nodes[p]},{dag.nodes[c]}\n")
    with open(json_path, "w") as f:
        json.dump({"nodes": list(dag.nodes), "score": score}, f, indent=2)
