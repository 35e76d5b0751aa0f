"""Instance families: model, action catalog and admissible sequences.

Every generator returns an :class:`Instance` whose sequences have been checked
with :func:`~ccpe.graph.verify_admissible_sequence`; an action whose candidate
sequence fails the check carries ``None`` and is estimated from interventions
only.  Structural randomness comes from ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ParamError, ParseError
from .graph import (
    NULL_ACTION,
    Action,
    AdmissibleSequence,
    CausalGraph,
    NodeKind,
    construct_admissible_sequence_no_hidden,
    make_action,
    verify_admissible_sequence,
)
from .scm import BglmScm, Scm, TabularScm, exact_joint, model_from_dict, model_to_dict


@dataclass
class Instance:
    kind: str
    params: dict
    seed: int | None
    model: Scm
    actions: tuple[Action, ...]
    sequences: tuple[AdmissibleSequence | None, ...]
    info: dict = field(default_factory=dict)

    @property
    def graph(self) -> CausalGraph:
        return self.model.graph

    @property
    def is_bglm(self) -> bool:
        return isinstance(self.model, BglmScm)

    @property
    def null_index(self) -> int | None:
        return next((i for i, a in enumerate(self.actions) if a.is_null), None)

    def labels(self) -> list[str]:
        return [a.label(self.graph) for a in self.actions]

    def to_dict(self) -> dict:
        g = self.graph
        name = lambda v: g.nodes[v].name  # noqa: E731
        return {
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "model": model_to_dict(self.model),
            "actions": [[[name(v), b] for v, b in a.targets] for a in self.actions],
            "sequences": [
                None if s is None else [sorted(name(v) for v in block) for block in s.blocks] for s in self.sequences
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Instance":
        try:
            model = model_from_dict(doc["model"])
            g = model.graph
            bglm = isinstance(model, BglmScm)
            actions = tuple(make_action(g, [(n, b) for n, b in a], bglm=bglm) for a in doc["actions"])
            seqs = []
            for a, s in zip(actions, doc.get("sequences", [None] * len(actions))):
                seqs.append(None if s is None else AdmissibleSequence(a.nodes, tuple(g.idx_set(b) for b in s)))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"instance document malformed: {exc}") from exc
        return cls(doc.get("kind", "custom"), dict(doc.get("params", {})), doc.get("seed"), model, actions, tuple(seqs))


def _finish(kind, params, seed, model, actions, candidates, info=None) -> Instance:
    """Keep candidate sequences that pass verification."""
    seqs = []
    for a, seq in zip(actions, candidates):
        if a.is_null or seq is None:
            seqs.append(None)
            continue
        seqs.append(seq if verify_admissible_sequence(model.graph, a, seq) else None)
    return Instance(kind, dict(params), seed, model, tuple(actions), tuple(seqs), info or {})


def _constructed_sequences(graph, actions):
    return [None if a.is_null else construct_admissible_sequence_no_hidden(graph, a) for a in actions]


def _all_assignments(graph, node_sets, bglm=False):
    actions = []
    for nodes in node_sets:
        for bits in itertools.product((0, 1), repeat=len(nodes)):
            actions.append(make_action(graph, list(zip(nodes, bits)), bglm=bglm))
    return actions


# -- BGLM families ------------------------------------------------------------------------


def experiment1(n: int = 8, seed: int = 0, link: str = "identity") -> Instance:
    """Layered BGLM: ``X0`` global, ``X1..Xn`` each with up to two random earlier parents.

    ``P(X_i=1) = 0.4 X0 + 0.1 (sum of its random parents)``; the reward has four
    random parents with weights ``0.3, 0.3, 0.3, 0.05``; actions set every
    3-subset of ``X1..Xn`` to one.
    """
    if not 4 <= n <= 17:
        raise ParamError(f"experiment1 needs 4 <= n <= 17, got {n}")
    if link not in ("identity",):
        raise ParamError("experiment1 probabilities are linear; only the identity link applies")
    rng = np.random.default_rng(seed)
    names = [f"X{i}" for i in range(n + 1)]
    edges = []
    theta = {}
    random_parents = {}
    for i in range(1, n + 1):
        pool = list(range(1, i))
        chosen = sorted(rng.choice(pool, size=min(2, len(pool)), replace=False).tolist()) if pool else []
        random_parents[i] = chosen
        edges.append(("X0", f"X{i}"))
        edges.extend((f"X{j}", f"X{i}") for j in chosen)
    y_parents = rng.choice(np.arange(1, n + 1), size=4, replace=False).tolist()
    edges.append(("X0", "Y"))
    edges.extend((f"X{j}", "Y") for j in y_parents)
    graph = CausalGraph.from_names(names, edges, reward="Y", global_node="X0")
    for i in range(1, n + 1):
        w = {0: 0.4, **{j: 0.1 for j in random_parents[i]}}
        theta[f"X{i}"] = [w[p] for p in graph.parents[i]]
    y_w = {0: 0.0, **{j: wt for j, wt in zip(y_parents, (0.3, 0.3, 0.3, 0.05))}}
    theta["Y"] = [y_w[p] for p in graph.parents[graph.reward]]
    model = BglmScm(graph, theta, link)
    subsets = list(itertools.combinations([f"X{i}" for i in range(1, n + 1)], 3))
    actions = [make_action(graph, {v: 1 for v in s}, bglm=True) for s in subsets]
    info = {"reward_parents": [f"X{j}" for j in y_parents]}
    return _finish("experiment1", {"n": n, "link": link}, seed, model, actions, _constructed_sequences(graph, actions), info)


# -- general-graph families ---------------------------------------------------------------


def experiment2(seed: int = 0, action_nodes: Sequence[str] | None = None) -> Instance:
    """Seven-node graph with random two-parent structure and a three-branch reward.

    Reward parents ``X3..X7``: 0.9 if ``X3 = X4 = 1``; otherwise ``0.7 + 0.05 X3 +
    0.05 X4`` if ``X5 = X6 = 1``; otherwise 0.  Actions fix two of
    ``action_nodes`` (default all seven) to every bit pattern.
    """
    rng = np.random.default_rng(seed)
    names = [f"X{i}" for i in range(1, 8)]
    edges = [("X1", "X2")]
    for i in range(3, 8):
        chosen = sorted(rng.choice(np.arange(1, i), size=2, replace=False).tolist())
        edges.extend((f"X{j}", f"X{i}") for j in chosen)
    edges.extend((f"X{i}", "Y") for i in range(3, 8))
    graph = CausalGraph.from_names(names, edges, reward="Y")
    cpt = {"X1": [0.5], "X2": [0.45, 0.55]}
    for i in range(3, 8):
        cpt[f"X{i}"] = [0.55, 0.45, 0.45, 0.55]
    y = []
    for x3, x4, x5, x6, _x7 in itertools.product((0, 1), repeat=5):
        if x3 == x4 == 1:
            y.append(0.9)
        elif x5 == x6 == 1:
            y.append(0.7 + 0.05 * x3 + 0.05 * x4)
        else:
            y.append(0.0)
    cpt["Y"] = y
    model = TabularScm(graph, cpt)
    pool = list(action_nodes) if action_nodes is not None else names
    for v in pool:
        if v not in names:
            raise ParamError(f"unknown action node {v!r}")
    if len(pool) < 2:
        raise ParamError("experiment2 needs at least two action nodes")
    actions = _all_assignments(graph, list(itertools.combinations(pool, 2)))
    params = {"action_nodes": pool}
    return _finish("experiment2", params, seed, model, actions, _constructed_sequences(graph, actions))


def experiment3(n: int = 4, seed: int | None = None) -> Instance:
    """Hidden-confounder graph: ``X1`` drives ``X0, X2..X_{n+1}``; ``U_j`` confounds ``X_{j+2}`` and ``X0``.

    ``P(X0=1) = min(mean(U) + 0.1 X1, 1)``; ``P(X_i=1) = 0.5`` if ``X1 = U_{i-2} = 1``
    else 0.4; ``P(Y=1) = 0.4 X2 + 0.4 X3 + (0.2/n) sum_{i>=4} X_i``.  Actions fix
    two of ``X2..X_{n+1}``; every action uses blocks ``({X1}, {})``.
    """
    if not 2 <= n <= 8:
        raise ParamError(f"experiment3 needs 2 <= n <= 8, got {n}")
    xs = [f"X{i}" for i in range(n + 2)]
    us = [f"U{j}" for j in range(n)]
    edges = [("X1", "X0")]
    edges += [("X1", f"X{i}") for i in range(2, n + 2)]
    edges += [(f"U{j}", f"X{j + 2}") for j in range(n)]
    edges += [(f"U{j}", "X0") for j in range(n)]
    edges += [(f"X{i}", "Y") for i in range(2, n + 2)]
    graph = CausalGraph.from_names(xs, edges, reward="Y", hidden=us)
    cpt = {"X1": [0.5], **{u: [0.5] for u in us}}
    # parents of X0 in index order: X1 then U0..U_{n-1}
    cpt["X0"] = [min(sum(bits[1:]) / n + 0.1 * bits[0], 1.0) for bits in itertools.product((0, 1), repeat=n + 1)]
    for i in range(2, n + 2):
        cpt[f"X{i}"] = [0.4, 0.4, 0.4, 0.5]
    weights = [0.4, 0.4] + [0.2 / n] * (n - 2)
    cpt["Y"] = [float(np.dot(weights, bits)) for bits in itertools.product((0, 1), repeat=n)]
    model = TabularScm(graph, cpt)
    pairs = list(itertools.combinations([f"X{i}" for i in range(2, n + 2)], 2))
    actions = _all_assignments(graph, pairs)
    x1 = graph.idx("X1")
    cands = [AdmissibleSequence(a.nodes, (frozenset({x1}), frozenset())) for a in actions]
    return _finish("experiment3", {"n": n}, seed, model, actions, cands)


def _parallel_model(p, base, weights):
    n = len(p)
    names = [f"X{i}" for i in range(1, n + 1)]
    graph = CausalGraph.from_names(names, [(x, "Y") for x in names], reward="Y")
    y = [base + float(np.dot(weights, bits)) for bits in itertools.product((0, 1), repeat=n)]
    if min(y) < 0 or max(y) > 1:
        raise ParamError("reward probabilities leave [0, 1]")
    cpt = {x: [pi] for x, pi in zip(names, p)}
    cpt["Y"] = y
    return TabularScm(graph, cpt), names


def _default_weights(n):
    return [0.6 * (n - i) / (n * (n + 1)) for i in range(n)]


def parallel(
    n: int = 3,
    p: float | Sequence[float] = 0.5,
    base: float = 0.2,
    weights: Sequence[float] | None = None,
    include_null: bool = True,
) -> Instance:
    """``X1..Xn -> Y`` with independent causes and ``P(Y=1) = base + sum w_i X_i``.

    Actions: ``do(X_i = x)`` for all ``i, x``, then ``do()``.  Every atomic action
    has an empty block, so its do-effect is the conditional mean.
    """
    if n < 1:
        raise ParamError("parallel needs n >= 1")
    p = [float(p)] * n if np.isscalar(p) else [float(v) for v in p]
    weights = _default_weights(n) if weights is None else [float(w) for w in weights]
    if len(p) != n or len(weights) != n:
        raise ParamError("p and weights need one entry per cause")
    if any(not 0 <= v <= 1 for v in p):
        raise ParamError("probabilities must lie in [0, 1]")
    model, names = _parallel_model(p, base, weights)
    actions = _all_assignments(model.graph, [[x] for x in names])
    if include_null:
        actions.append(NULL_ACTION)
    cands = [None if a.is_null else AdmissibleSequence(a.nodes, (frozenset(),)) for a in actions]
    params = {"n": n, "p": p, "base": base, "weights": weights, "include_null": include_null}
    return _finish("parallel", params, None, model, actions, cands)


def lower_bound_xi(
    n: int = 5,
    p: float | Sequence[float] = 0.5,
    base: float = 0.2,
    weights: Sequence[float] | None = None,
    epsilon: float = 0.0,
) -> Instance:
    """Parallel instance checked against the lower-bound class constraints.

    Requires ``p_min + min gap >= 0.1`` and ``p_max + 2 max gap + 2 eps <= 0.9`` where
    ``p_min, p_max`` are the extreme values of ``P(Y=1 | X=x)``.
    """
    weights = _default_weights(n) if weights is None else weights
    inst = parallel(n, p, base, weights, include_null=True)
    from .scm import gaps

    y = inst.model.tables[inst.graph.reward]
    report = gaps(inst.model, inst.actions, epsilon)
    p_min, p_max = float(y.min()), float(y.max())
    if p_min + report.delta.min() < 0.1 - 1e-12:
        raise ParamError(f"p_min + min gap = {p_min + report.delta.min():.4g} < 0.1")
    if p_max + 2 * report.delta.max() + 2 * epsilon > 0.9 + 1e-12:
        raise ParamError(f"p_max + 2 max gap + 2 eps = {p_max + 2 * report.delta.max() + 2 * epsilon:.4g} > 0.9")
    inst.kind = "lower_bound_xi"
    inst.params["epsilon"] = epsilon
    inst.info.update({"p_min": p_min, "p_max": p_max})
    return inst


def two_layer(k: int = 2, m: int = 4, max_size: int = 1, seed: int = 0) -> Instance:
    """Upper layer ``A = X1..Xk`` (random DAG), lower layer ``B`` of ``m`` nodes, ``B -> Y``.

    Each ``B`` node has a random non-empty parent set in ``A``.  Actions fix up to
    ``max_size`` nodes of ``B`` (``do()`` included); ``A`` is an adjustment set.
    """
    if k < 1 or m < 1 or not 0 <= max_size <= m or k + m > 16:
        raise ParamError("two_layer needs k, m >= 1, 0 <= max_size <= m and k + m <= 16")
    rng = np.random.default_rng(seed)
    a_nodes = [f"X{i}" for i in range(1, k + 1)]
    b_nodes = [f"X{i}" for i in range(k + 1, k + m + 1)]
    edges = [(a_nodes[i], a_nodes[j]) for i in range(k) for j in range(i + 1, k) if rng.random() < 0.5]
    for b in b_nodes:
        size = int(rng.integers(1, k + 1))
        edges += [(a_nodes[i], b) for i in sorted(rng.choice(k, size=size, replace=False).tolist())]
    edges += [(b, "Y") for b in b_nodes]
    graph = CausalGraph.from_names(a_nodes + b_nodes, edges, reward="Y")
    cpt = _random_cpts(graph, rng, exclude={graph.reward})
    w = rng.dirichlet(np.ones(m))
    cpt[graph.reward] = [0.1 + 0.8 * float(np.dot(w, bits)) for bits in itertools.product((0, 1), repeat=m)]
    model = TabularScm(graph, cpt)
    sets = [list(c) for size in range(1, max_size + 1) for c in itertools.combinations(b_nodes, size)]
    actions = [NULL_ACTION] + _all_assignments(graph, sets)
    adj = graph.idx_set(a_nodes)
    cands = [
        None if a.is_null else AdmissibleSequence(a.nodes, (adj,) + tuple(frozenset() for _ in a.nodes[1:]))
        for a in actions
    ]
    return _finish("two_layer", {"k": k, "m": m, "max_size": max_size}, seed, model, actions, cands)


def collaborative(groups: int = 2, group_size: int = 2, max_size: int = 1, seed: int = 0) -> Instance:
    """Disjoint groups with random internal DAGs and one hidden confounder per group.

    All nodes point to ``Y``.  Actions take at most one node per group and at most
    ``max_size`` nodes.  The candidate adjustment set is the union of the touched
    groups minus the targets and their descendants; actions where it fails the
    admissibility check carry no sequence.
    """
    if groups < 1 or group_size < 1 or not 0 <= max_size <= groups or groups * group_size + groups > 19:
        raise ParamError("collaborative parameters out of range")
    rng = np.random.default_rng(seed)
    members = [[f"X{g * group_size + j + 1}" for j in range(group_size)] for g in range(groups)]
    names = [x for grp in members for x in grp]
    edges, hidden = [], []
    for g, grp in enumerate(members):
        edges += [(grp[i], grp[j]) for i in range(group_size) for j in range(i + 1, group_size) if rng.random() < 0.5]
        if group_size >= 2:
            u = f"U{g + 1}"
            hidden.append(u)
            pair = sorted(rng.choice(group_size, size=2, replace=False).tolist())
            edges += [(u, grp[pair[0]]), (u, grp[pair[1]])]
    edges += [(x, "Y") for x in names]
    graph = CausalGraph.from_names(names, edges, reward="Y", hidden=hidden)
    cpt = _random_cpts(graph, rng, exclude={graph.reward})
    w = rng.dirichlet(np.ones(len(names)))
    cpt[graph.reward] = [0.1 + 0.8 * float(np.dot(w, bits)) for bits in itertools.product((0, 1), repeat=len(names))]
    model = TabularScm(graph, cpt)
    sets = []
    for size in range(1, max_size + 1):
        for gs in itertools.combinations(range(groups), size):
            for pick in itertools.product(*(members[g] for g in gs)):
                sets.append(list(pick))
    actions = [NULL_ACTION] + _all_assignments(graph, sets)
    cands = []
    group_of = {graph.idx(x): g for g, grp in enumerate(members) for x in grp}
    for a in actions:
        if a.is_null:
            cands.append(None)
            continue
        touched = {graph.idx(x) for v in a.nodes for x in members[group_of[v]]}
        adj = frozenset(touched - graph.descendants(a.nodes))
        cands.append(AdmissibleSequence(a.nodes, (adj,) + tuple(frozenset() for _ in a.nodes[1:])))
    params = {"groups": groups, "group_size": group_size, "max_size": max_size}
    return _finish("collaborative", params, seed, model, actions, cands)


def causal_tree(targets: Sequence[Sequence[str]] | None = None, seed: int | None = None) -> Instance:
    """Rooted tree ``X0..X8`` with two hidden confounders inside layers.

    Layers: ``{X0}``, ``{X1, X2}``, ``{X3..X6}``, ``{X7, X8}``; ``U1`` confounds
    ``X3, X4`` and ``U2`` confounds ``X7, X8``; the leaves ``X5..X8`` feed ``Y``.
    Default actions: every single node of ``X1..X8`` and the triple
    ``{X3, X4, X8}``, each at every bit pattern.  Blocks follow the layer rule:
    the first target of a layer receives its c-component plus that component's
    parents, minus earlier blocks and targets.
    """
    names = [f"X{i}" for i in range(9)]
    tree = [("X0", "X1"), ("X0", "X2"), ("X1", "X3"), ("X2", "X4"), ("X1", "X5"), ("X2", "X6"), ("X3", "X7"), ("X4", "X8")]
    conf = [("U1", "X3"), ("U1", "X4"), ("U2", "X7"), ("U2", "X8")]
    leaves = [("X5", "Y"), ("X6", "Y"), ("X7", "Y"), ("X8", "Y")]
    graph = CausalGraph.from_names(names, tree + conf + leaves, reward="Y", hidden=["U1", "U2"])
    cpt = {"X0": [0.5], "U1": [0.5], "U2": [0.5]}
    for child in ("X1", "X2", "X5", "X6"):
        cpt[child] = [0.45, 0.55]
    for child in ("X3", "X4", "X7", "X8"):
        # parents in index order: tree parent, then the confounder
        cpt[child] = [0.35, 0.55, 0.45, 0.65]
    cpt["Y"] = [0.1 + float(np.dot([0.2, 0.2, 0.3, 0.15], bits)) for bits in itertools.product((0, 1), repeat=4)]
    model = TabularScm(graph, cpt)
    if targets is None:
        targets = [[f"X{i}"] for i in range(1, 9)] + [["X3", "X4", "X8"]]
    actions = _all_assignments(graph, [list(t) for t in targets])
    cands = [layered_sequence(graph, a) for a in actions]
    return _finish("causal_tree", {"targets": [list(t) for t in targets]}, seed, model, actions, cands)


def layered_sequence(graph: CausalGraph, action: Action) -> AdmissibleSequence:
    """Per-layer blocks ``C(S_i) + Pa(C(S_i))`` minus earlier blocks and targets.

    Layers are depths in the observed part of the graph; ``C(T)`` is the set of
    observed nodes joined to ``T`` through shared hidden parents.
    """
    depth = {}
    for v in graph.order:
        obs_pa = [p for p in graph.parents[v] if graph.nodes[p].kind == NodeKind.OBSERVED]
        depth[v] = 1 + max((depth[p] for p in obs_pa), default=-1)
    bidirected = {v: set() for v in graph.observed}
    for u in graph.hidden:
        kids = [c for c in graph.children[u] if graph.nodes[c].kind == NodeKind.OBSERVED]
        for c in kids:
            bidirected[c].update(k for k in kids if k != c)
    targets = set(action.nodes)
    used: set[int] = set()
    blocks = {}
    for layer in sorted({depth[v] for v in action.nodes}):
        s_i = [v for v in action.nodes if depth[v] == layer]
        comp, stack = set(s_i), list(s_i)
        while stack:
            v = stack.pop()
            for w in bidirected.get(v, ()):
                if w not in comp:
                    comp.add(w)
                    stack.append(w)
        pa = {p for v in comp for p in graph.parents[v] if graph.nodes[p].kind == NodeKind.OBSERVED}
        z = (comp | pa) - used - targets
        blocks[s_i[0]] = frozenset(z)
        used |= z | set(s_i)
    return AdmissibleSequence(action.nodes, tuple(blocks.get(v, frozenset()) for v in action.nodes))


def _random_cpts(graph: CausalGraph, rng: np.random.Generator, exclude=()) -> dict:
    cpt = {}
    for v in range(len(graph)):
        if v in exclude:
            continue
        cpt[v] = rng.uniform(0.2, 0.8, size=2 ** len(graph.parents[v])).tolist()
    return cpt


GENERATORS: dict[str, Callable[..., Instance]] = {
    "experiment1": experiment1,
    "experiment2": experiment2,
    "experiment3": experiment3,
    "parallel": parallel,
    "two_layer": two_layer,
    "collaborative": collaborative,
    "causal_tree": causal_tree,
    "lower_bound_xi": lower_bound_xi,
}

_SEEDED = {"experiment1", "experiment2", "experiment3", "two_layer", "collaborative", "causal_tree"}


def generate_instance(kind: str, params: Mapping | None = None, seed: int | None = None) -> Instance:
    """Build an instance of family ``kind`` with generator keyword ``params``."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ParamError(f"unknown instance kind {kind!r}; expected one of {sorted(GENERATORS)}") from None
    kwargs = dict(params or {})
    if kind in _SEEDED and seed is not None:
        kwargs["seed"] = seed
    try:
        inst = gen(**kwargs)
    except TypeError as exc:
        raise ParamError(f"bad parameters for {kind}: {exc}") from exc
    return inst
