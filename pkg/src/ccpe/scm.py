"""Structural causal models over binary variables.

Two model families share one executable form:

* :class:`TabularScm` stores ``P(V=1 | pa)`` for every node, hidden nodes included.
* :class:`BglmScm` derives those tables from per-node weights ``theta`` and a
  link function, ``P(X=1 | pa) = f(theta . pa)``, with an always-one global node.

Conditional probability tables are flat arrays indexed by the parent
assignment, parents in ascending node index with the first parent as the most
significant bit (the order of ``itertools.product``).

Sampling consumes one uniform per node per sample (two when BGLM noise is
enabled), read in node-index order, so a batch of ``k`` samples drawn with
``rng.random((k, width))`` reproduces ``k`` single draws exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ModelError, NoGlobalNodeError, TooLargeError
from .graph import (
    NULL_ACTION,
    Action,
    AdmissibleSequence,
    CausalGraph,
    check_action,
    graph_from_dict,
    graph_to_dict,
    path_nodes_to_reward,
)

ENUMERATION_LIMIT = 20


# -- link functions ------------------------------------------------------------------


@dataclass(frozen=True)
class Link:
    """Monotone link with derivative bounds ``m1 >= sup f'`` and ``m2 >= sup |f''|``."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    m1: float
    m2: float


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def _dsigmoid(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


LINKS: dict[str, Link] = {
    "identity": Link("identity", lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(np.asarray(x, dtype=float)), 1.0, 0.0),
    # f'' of the sigmoid peaks at |s(1-s)(1-2s)| = 1/(6 sqrt 3)
    "logistic": Link("logistic", _sigmoid, _dsigmoid, 0.25, 1.0 / (6.0 * math.sqrt(3.0))),
}


def get_link(name: str) -> Link:
    try:
        return LINKS[name]
    except KeyError:
        raise ModelError(f"unknown link {name!r}; expected one of {sorted(LINKS)}") from None


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the BGLM analysis: derivative bounds, curvature floor, parent freedom."""

    m1: float
    m2: float
    kappa: float
    eta: float
    c: float
    d_max: int

    def __post_init__(self):
        if not (self.m1 > 0 and self.kappa > 0 and self.eta > 0 and self.c > 0 and self.d_max > 0):
            raise ModelError(f"assumption constants must be positive: {self}")
        if self.m2 < 0:
            raise ModelError("m2 must be non-negative")


# -- observations --------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """Values of the observed non-reward nodes (ascending index) and the reward."""

    x: tuple[int, ...]
    y: int


# -- enumeration helpers -------------------------------------------------------------


@lru_cache(maxsize=None)
def assignment_bits(n: int) -> np.ndarray:
    """All ``2**n`` assignments as an int8 matrix; column ``j`` is node ``j``."""
    rows = np.arange(2**n, dtype=np.int64)
    return ((rows[:, None] >> np.arange(n)) & 1).astype(np.int8)


def config_codes(bits: np.ndarray, nodes: Sequence[int]) -> np.ndarray:
    """Row-wise index of the assignment to ``nodes``, first node most significant."""
    code = np.zeros(bits.shape[0], dtype=np.int64)
    for v in nodes:
        code = 2 * code + bits[:, v]
    return code


@dataclass(frozen=True)
class Joint:
    """Exact distribution over full assignments of a graph's nodes."""

    graph: CausalGraph
    probs: np.ndarray

    @property
    def bits(self) -> np.ndarray:
        return assignment_bits(len(self.graph))

    def marginal(self, nodes: Sequence[int]) -> np.ndarray:
        """Probabilities of the ``2**len(nodes)`` assignments in product order."""
        nodes = [self.graph.idx(v) for v in nodes]
        codes = config_codes(self.bits, nodes)
        return np.bincount(codes, weights=self.probs, minlength=2 ** len(nodes))

    def prob(self, assignment: Mapping) -> float:
        mask = np.ones(self.probs.shape[0], dtype=bool)
        bits = self.bits
        for node, b in assignment.items():
            mask &= bits[:, self.graph.idx(node)] == b
        return float(self.probs[mask].sum())

    def expect(self, node) -> float:
        return float(self.probs @ self.bits[:, self.graph.idx(node)])

    def observed_table(self) -> dict[tuple[int, ...], float]:
        """Atoms over (observed non-reward nodes ascending, reward) with hidden nodes summed out."""
        nodes = list(self.graph.observed) + [self.graph.reward]
        marg = self.marginal(nodes)
        k = len(nodes)
        table = {}
        for code in np.flatnonzero(marg > 0):
            key = tuple((int(code) >> (k - 1 - i)) & 1 for i in range(k))
            table[key] = float(marg[code])
        return table


# -- models --------------------------------------------------------------------------


class Scm:
    """Executable binary SCM defined by per-node tables ``P(V=1 | pa)``."""

    graph: CausalGraph
    tables: tuple[np.ndarray, ...]
    noise: float = 0.0

    def _init_tables(self, graph: CausalGraph, tables: Sequence) -> None:
        self.graph = graph
        checked = []
        for v, table in enumerate(tables):
            arr = np.asarray(table, dtype=float).reshape(-1)
            if arr.shape[0] != 2 ** len(graph.parents[v]):
                raise ModelError(
                    f"table of {graph.nodes[v].name!r} has {arr.shape[0]} entries, "
                    f"expected {2 ** len(graph.parents[v])}"
                )
            if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ModelError(f"table of {graph.nodes[v].name!r} has entries outside [0, 1]")
            arr.setflags(write=False)
            checked.append(arr)
        if len(checked) != len(graph):
            raise ModelError(f"expected {len(graph)} tables, got {len(checked)}")
        self.tables = tuple(checked)
        self._plan = None
        self._factors = None

    # -- sampling ------------------------------------------------------------------

    @property
    def uniforms_per_sample(self) -> int:
        return len(self.graph) * (2 if self.noise > 0 else 1)

    def _sampling_plan(self):
        if self._plan is None:
            widths = self._noise_widths()
            self._plan = [
                (v, self.graph.parents[v], self.tables[v].tolist(), None if widths is None else widths[v].tolist())
                for v in self.graph.order
            ]
        return self._plan

    def _noise_widths(self):
        if self.noise <= 0:
            return None
        # symmetric truncation keeps p + e inside [0, 1] with zero-mean e
        return [np.minimum(self.noise, np.minimum(t, 1.0 - t)) for t in self.tables]

    def draw(self, u: Sequence[float], forced: Mapping[int, int]) -> list[int]:
        """Forward-propagate one sample from a row of uniforms; returns all node values."""
        n = len(self.graph)
        vals = [0] * n
        for v, parents, table, width in self._sampling_plan():
            b = forced.get(v)
            if b is not None:
                vals[v] = b
                continue
            k = 0
            for p in parents:
                k = 2 * k + vals[p]
            p1 = table[k]
            if width is not None:
                p1 += width[k] * (2.0 * u[n + v] - 1.0)
            vals[v] = 1 if u[v] < p1 else 0
        return vals

    def draw_batch(self, u: np.ndarray, forced: Mapping[int, int]) -> np.ndarray:
        """Vectorized :meth:`draw` over the rows of ``u``; returns an int8 matrix."""
        n = len(self.graph)
        vals = np.zeros((u.shape[0], n), dtype=np.int8)
        widths = self._noise_widths()
        for v in self.graph.order:
            if v in forced:
                vals[:, v] = forced[v]
                continue
            k = config_codes(vals, self.graph.parents[v])
            p1 = self.tables[v][k]
            if widths is not None:
                p1 = p1 + widths[v][k] * (2.0 * u[:, n + v] - 1.0)
            vals[:, v] = u[:, v] < p1
        return vals

    def observation(self, vals: Sequence[int]) -> Observation:
        return Observation(tuple(int(vals[v]) for v in self.graph.observed), int(vals[self.graph.reward]))

    # -- exact enumeration -----------------------------------------------------------

    def _check_size(self, limit: int) -> None:
        if len(self.graph) > limit:
            raise TooLargeError(f"{len(self.graph)} nodes exceed the enumeration limit {limit}")

    def node_factors(self) -> np.ndarray:
        """``P(V = bit | pa)`` for every full assignment (rows) and node (columns)."""
        if self._factors is None:
            n = len(self.graph)
            bits = assignment_bits(n)
            fac = np.empty(bits.shape, dtype=float)
            for v in range(n):
                p1 = self.tables[v][config_codes(bits, self.graph.parents[v])]
                fac[:, v] = np.where(bits[:, v] == 1, p1, 1.0 - p1)
            fac.setflags(write=False)
            self._factors = fac
        return self._factors

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_plan"] = None
        state["_factors"] = None
        return state


class TabularScm(Scm):
    """Model given directly by conditional probability tables.

    Parameters
    ----------
    graph:
        The causal graph; hidden nodes are allowed.
    cpt:
        Either a sequence indexed by node or a mapping from node (index or
        name) to the table of that node.
    """

    def __init__(self, graph: CausalGraph, cpt: Sequence | Mapping):
        if isinstance(cpt, Mapping):
            by_index = {graph.idx(k): v for k, v in cpt.items()}
            missing = [graph.nodes[v].name for v in range(len(graph)) if v not in by_index]
            if missing:
                raise ModelError(f"missing tables for {missing}")
            cpt = [by_index[v] for v in range(len(graph))]
        self._init_tables(graph, cpt)

    def __repr__(self) -> str:
        return f"TabularScm({len(self.graph)} nodes)"


class BglmScm(Scm):
    """Binary generalized linear model, ``P(X=1 | pa) = f_X(theta_X . pa)``.

    Parameters
    ----------
    graph:
        Graph with a global node and no hidden nodes.
    theta:
        Mapping node -> weights over ``graph.parents[node]`` (ascending index,
        global node included).  Required for every observed node but the global
        node, and for the reward node.
    link:
        Link name for all nodes or a mapping node -> link name.
    noise:
        Half-width of the optional zero-mean uniform noise added to each success
        probability, truncated so it never leaves ``[0, 1]``.
    c:
        Constant of the minimum-eigenvalue condition in the stopping rule.
    """

    def __init__(
        self,
        graph: CausalGraph,
        theta: Mapping,
        link: str | Mapping = "identity",
        noise: float = 0.0,
        c: float = 1.0,
    ):
        if graph.global_node is None:
            raise NoGlobalNodeError("BGLM models require a global node")
        if graph.hidden:
            raise ModelError("BGLM models cannot contain hidden nodes")
        if noise < 0:
            raise ModelError("noise half-width must be non-negative")
        g = graph.global_node
        self.noise = float(noise)
        self.c = float(c)
        self.fitted_nodes = tuple(v for v in range(len(graph)) if v != g)
        weights = {graph.idx(k): np.asarray(w, dtype=float).reshape(-1) for k, w in theta.items()}
        links = {}
        for v in self.fitted_nodes:
            name = link if isinstance(link, str) else link.get(graph.nodes[v].name, link.get(v, "identity"))
            links[v] = get_link(name)
            if v not in weights:
                raise ModelError(f"missing weights for {graph.nodes[v].name!r}")
            if weights[v].shape[0] != len(graph.parents[v]):
                raise ModelError(
                    f"weights of {graph.nodes[v].name!r} need {len(graph.parents[v])} entries, "
                    f"got {weights[v].shape[0]}"
                )
        if g in weights and weights[g].size:
            raise ModelError("the global node takes no weights")
        self.theta = {v: weights[v] for v in self.fitted_nodes}
        self.links = links
        tables = []
        for v in range(len(graph)):
            if v == g:
                tables.append([1.0])
                continue
            tables.append(self._table(graph, v, self.theta[v]))
        self._init_tables(graph, tables)
        self._constants = None

    def _table(self, graph: CausalGraph, v: int, theta: np.ndarray) -> np.ndarray:
        parents = graph.parents[v]
        p = self.links[v].f(parent_design(len(parents)) @ theta)
        # assignments with the global parent at 0 never occur, so they may leave [0, 1]
        reachable = np.ones(p.shape[0], dtype=bool)
        if graph.global_node in parents:
            reachable = parent_design(len(parents))[:, parents.index(graph.global_node)] == 1
        bad = reachable & ((p < -1e-12) | (p > 1 + 1e-12))
        if np.any(bad):
            raise ModelError(f"link output of {graph.nodes[v].name!r} leaves [0, 1] for a reachable parent assignment")
        return np.clip(p, 0.0, 1.0)

    def with_theta(self, theta: Mapping[int, np.ndarray]) -> "TabularScm":
        """Noise-free tabular model for other weights on the same graph and links."""
        return TabularScm(self.graph, bglm_tables(self.graph, self.links, theta))

    @property
    def constants(self) -> AssumptionConstants:
        if self._constants is None:
            self._constants = compute_constants(self)
        return self._constants

    def __repr__(self) -> str:
        return f"BglmScm({len(self.graph)} nodes)"


def bglm_tables(graph: CausalGraph, links: Mapping[int, Link], theta: Mapping[int, np.ndarray]) -> list[np.ndarray]:
    """Tables ``clip(f(theta . pa), 0, 1)`` for every node; the global node is always one.

    Estimated weights may push a link outside ``[0, 1]``; such values are clipped.
    """
    tables = []
    for v in range(len(graph)):
        if v == graph.global_node:
            tables.append(np.ones(1))
            continue
        p = links[v].f(parent_design(len(graph.parents[v])) @ np.asarray(theta[v], dtype=float))
        tables.append(np.clip(p, 0.0, 1.0))
    return tables


@lru_cache(maxsize=None)
def parent_design(k: int) -> np.ndarray:
    """Rows of all parent assignments in product order, as a float matrix."""
    rows = np.arange(2**k, dtype=np.int64)
    bits = (rows[:, None] >> np.arange(k - 1, -1, -1)) & 1
    out = bits.astype(float)
    out.setflags(write=False)
    return out


def compute_constants(model: BglmScm) -> AssumptionConstants:
    graph = model.graph
    g = graph.global_node
    m1 = max(model.links[v].m1 for v in model.fitted_nodes)
    m2 = max(model.links[v].m2 for v in model.fitted_nodes)
    kappa = math.inf
    for v in model.fitted_nodes:
        link = model.links[v]
        th = model.theta[v]
        reach = max(th[th > 0].sum(), -th[th < 0].sum()) + math.sqrt(len(th))
        # f' of both links is symmetric and non-increasing in |x|
        kappa = min(kappa, float(link.df(np.array([reach]))[0]))
    joint = exact_joint(model)
    eta = math.inf
    for v in model.fitted_nodes:
        for xp in graph.parents[v]:
            if xp == g:
                continue
            others = [w for w in graph.parents[v] if w not in (xp, g)]
            marg = joint.marginal(others + [xp]).reshape(-1, 2)
            tot = marg.sum(axis=1)
            live = tot > 1e-15
            if np.any(live):
                eta = min(eta, float((marg[live] / tot[live, None]).min()))
    if eta == math.inf:
        eta = 1.0
    if eta <= 0:
        raise ModelError("parent-freedom constant eta is zero: some parent is deterministic given the others")
    return AssumptionConstants(m1, m2, kappa, eta, model.c, max(graph.d_max(), 1))


# -- sampling and exact oracles -------------------------------------------------------


def sample(model: Scm, action: Action, rng: np.random.Generator) -> Observation:
    """One draw from the interventional distribution of ``action``."""
    check_action(model.graph, action)
    u = rng.random(model.uniforms_per_sample)
    return model.observation(model.draw(u.tolist(), action.as_dict()))


def sample_batch(model: Scm, action: Action, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` draws as an int8 matrix over all nodes (hidden columns included)."""
    check_action(model.graph, action)
    u = rng.random((size, model.uniforms_per_sample))
    return model.draw_batch(u, action.as_dict())


def exact_joint(model: Scm, action: Action = NULL_ACTION, limit: int = ENUMERATION_LIMIT) -> Joint:
    """Exact distribution of all nodes under ``action`` by truncated factorization."""
    model._check_size(limit)
    check_action(model.graph, action)
    fac = model.node_factors()
    if action.is_null:
        return Joint(model.graph, fac.prod(axis=1))
    forced = action.as_dict()
    bits = assignment_bits(len(model.graph))
    free = [v for v in range(len(model.graph)) if v not in forced]
    w = fac[:, free].prod(axis=1)
    for v, b in forced.items():
        w = w * (bits[:, v] == b)
    return Joint(model.graph, w)


def exact_mu(model: Scm, action: Action = NULL_ACTION, limit: int = ENUMERATION_LIMIT) -> float:
    """``E[Y | do(S=s)]`` by exhaustive enumeration."""
    return exact_joint(model, action, limit).expect(model.graph.reward)


def exact_mus(model: Scm, actions: Sequence[Action], limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    return np.array([exact_mu(model, a, limit) for a in actions])


@dataclass(frozen=True)
class GapReport:
    mus: np.ndarray
    best: int
    delta: np.ndarray
    clamped: np.ndarray
    delta_min: float
    ranking: tuple[int, ...]


def gaps_from_means(mus: Sequence[float], epsilon: float = 0.0) -> GapReport:
    """Gaps of a mean vector; the optimum is the lowest index among ties."""
    mus = np.asarray(mus, dtype=float)
    if mus.size == 0:
        raise ModelError("gaps need at least one arm")
    best = int(np.argmax(mus))
    delta = mus[best] - mus
    others = np.delete(mus, best)
    delta[best] = mus[best] - others.max() if others.size else 0.0
    clamped = np.maximum(delta, epsilon / 2.0)
    ranking = tuple(int(i) for i in np.argsort(-mus, kind="stable"))
    return GapReport(mus, best, delta, clamped, float(delta.min()), ranking)


def gaps(model: Scm, actions: Sequence[Action], epsilon: float = 0.0) -> GapReport:
    return gaps_from_means(exact_mus(model, actions), epsilon)


def q_general(model: Scm, action: Action, seq: AdmissibleSequence | None, joint: Joint | None = None) -> float:
    """``min_z P(S=s, Z=z)`` under passive observation; 1 for ``do()``, 0 without a sequence."""
    if action.is_null:
        return 1.0
    if seq is None:
        return 0.0
    if joint is None:
        joint = exact_joint(model)
    nodes = list(action.nodes) + list(seq.union_nodes)
    marg = joint.marginal(nodes).reshape(2 ** len(action), -1)
    s_code = 0
    for b in action.values:
        s_code = 2 * s_code + b
    return float(marg[s_code].min())


def q_bglm(graph: CausalGraph, action: Action, d_max: int | None = None) -> float:
    """Structural ease score ``1 / (l_S^2 D^3)``; 1 for ``do()`` and when no path survives."""
    if graph.global_node is None:
        raise NoGlobalNodeError("q for BGLM graphs needs a global node")
    if action.is_null:
        return 1.0
    ell = len(path_nodes_to_reward(graph, action.nodes))
    if ell == 0:
        return 1.0
    d = graph.d_max() if d_max is None else d_max
    return 1.0 / (ell**2 * d**3)


# -- JSON format ---------------------------------------------------------------------


def model_to_dict(model: Scm) -> dict:
    graph = model.graph
    doc = {"graph": graph_to_dict(graph)}
    if isinstance(model, BglmScm):
        doc["kind"] = "bglm"
        doc["theta"] = {graph.nodes[v].name: model.theta[v].tolist() for v in model.fitted_nodes}
        doc["link"] = {graph.nodes[v].name: model.links[v].name for v in model.fitted_nodes}
        doc["noise"] = model.noise
        doc["c"] = model.c
    else:
        doc["kind"] = "tabular"
        doc["cpt"] = {graph.nodes[v].name: model.tables[v].tolist() for v in range(len(graph))}
    return doc


def model_from_dict(doc) -> Scm:
    from .errors import ParseError

    if not isinstance(doc, Mapping) or "graph" not in doc:
        raise ParseError("model document needs a 'graph' field")
    graph = graph_from_dict(doc["graph"])
    kind = doc.get("kind", "tabular")
    try:
        if kind == "tabular":
            return TabularScm(graph, doc["cpt"])
        if kind == "bglm":
            return BglmScm(graph, doc["theta"], doc.get("link", "identity"), doc.get("noise", 0.0), doc.get("c", 1.0))
    except KeyError as exc:
        raise ParseError(f"model document missing field {exc}") from exc
    except ModelError as exc:
        raise ParseError(f"invalid model: {exc}") from exc
    raise ParseError(f"field 'kind': unknown model kind {kind!r}")
