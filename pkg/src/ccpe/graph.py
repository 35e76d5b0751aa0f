"""Causal graphs, interventions and admissible sequences.

A :class:`CausalGraph` is an immutable DAG over observed nodes, hidden nodes and
a single reward node.  Nodes are addressed by their integer index (position in
``graph.nodes``); every public function also accepts node names.

The module provides d-separation by reachability, graph surgery, directed path
machinery for BGLM graphs, and construction/verification of admissible
sequences used for sequential back-door identification of do-effects.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from .errors import (
    ActionDomainError,
    CycleError,
    DanglingEdgeError,
    GraphError,
    HiddenNodesError,
    NoGlobalNodeError,
    OverlapError,
    ParseError,
    SequenceError,
    UnknownNodeError,
)

NodeRef = Union[int, str]


class NodeKind(str, Enum):
    OBSERVED = "observed"
    HIDDEN = "hidden"
    REWARD = "reward"


@dataclass(frozen=True)
class Node:
    index: int
    name: str
    kind: NodeKind


@dataclass(frozen=True)
class CausalGraph:
    """Directed acyclic graph with observed, hidden and reward nodes.

    Parameters
    ----------
    nodes:
        Nodes in index order; ``nodes[i].index == i``.
    edges:
        Directed ``(parent, child)`` index pairs.  Stored sorted and deduplicated.
    global_node:
        Index of the always-one node of a BGLM graph, if any.
    """

    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...]
    global_node: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(sorted({(int(p), int(c)) for p, c in self.edges})))
        n = len(self.nodes)
        for i, node in enumerate(self.nodes):
            if node.index != i:
                raise GraphError(f"node {node.name!r} has index {node.index}, expected {i}")
        names = [node.name for node in self.nodes]
        if len(set(names)) != n:
            raise GraphError("node names must be unique")
        rewards = [node.index for node in self.nodes if node.kind == NodeKind.REWARD]
        if len(rewards) != 1:
            raise GraphError(f"exactly one reward node required, found {len(rewards)}")
        for p, c in self.edges:
            if not (0 <= p < n and 0 <= c < n):
                raise DanglingEdgeError(f"edge ({p}, {c}) references an unknown node")
            if p == c:
                raise CycleError([p, p])
            if p == rewards[0]:
                raise GraphError("the reward node must not have outgoing edges")
        if self.global_node is not None:
            g = self.global_node
            if not 0 <= g < n or self.nodes[g].kind != NodeKind.OBSERVED:
                raise GraphError("global node must be an observed node of the graph")
            if self.parents[g]:
                raise GraphError("global node must not have parents")
        self.order  # raises CycleError

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_names(
        cls,
        observed: Sequence[str],
        edges: Iterable[tuple[str, str]],
        reward: str = "Y",
        hidden: Sequence[str] = (),
        global_node: str | None = None,
    ) -> "CausalGraph":
        """Build a graph from node names; observed, then hidden, then the reward node."""
        specs = [(name, NodeKind.OBSERVED) for name in observed]
        specs += [(name, NodeKind.HIDDEN) for name in hidden]
        specs.append((reward, NodeKind.REWARD))
        nodes = tuple(Node(i, name, kind) for i, (name, kind) in enumerate(specs))
        index = {node.name: node.index for node in nodes}
        if len(index) != len(nodes):
            raise GraphError("node names must be unique")
        idx_edges = []
        for p, c in edges:
            if p not in index or c not in index:
                raise DanglingEdgeError(f"edge {p!r} -> {c!r} references an unknown node")
            idx_edges.append((index[p], index[c]))
        g = None if global_node is None else index[global_node]
        return cls(nodes, tuple(idx_edges), g)

    # -- cached structure -------------------------------------------------------

    @cached_property
    def index_of(self) -> dict[str, int]:
        return {node.name: node.index for node in self.nodes}

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        pa: list[list[int]] = [[] for _ in self.nodes]
        for p, c in self.edges:
            pa[c].append(p)
        return tuple(tuple(sorted(x)) for x in pa)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.nodes]
        for p, c in self.edges:
            ch[p].append(c)
        return tuple(tuple(sorted(x)) for x in ch)

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Topological order, ties broken by ascending index."""
        indeg = [len(p) for p in self.parents]
        heap = [i for i, d in enumerate(indeg) if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            v = heapq.heappop(heap)
            out.append(v)
            for c in self.children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(out) != len(self.nodes):
            raise CycleError(_find_cycle(self.children, set(range(len(self.nodes))) - set(out)))
        return tuple(out)

    @cached_property
    def position(self) -> tuple[int, ...]:
        pos = [0] * len(self.nodes)
        for k, v in enumerate(self.order):
            pos[v] = k
        return tuple(pos)

    @cached_property
    def reward(self) -> int:
        return next(n.index for n in self.nodes if n.kind == NodeKind.REWARD)

    @cached_property
    def observed(self) -> tuple[int, ...]:
        """Observed non-reward nodes in ascending index order."""
        return tuple(n.index for n in self.nodes if n.kind == NodeKind.OBSERVED)

    @cached_property
    def hidden(self) -> tuple[int, ...]:
        return tuple(n.index for n in self.nodes if n.kind == NodeKind.HIDDEN)

    def __len__(self) -> int:
        return len(self.nodes)

    # -- node resolution ----------------------------------------------------------

    def idx(self, node: NodeRef) -> int:
        if isinstance(node, str):
            try:
                return self.index_of[node]
            except KeyError:
                raise UnknownNodeError(f"unknown node {node!r}") from None
        i = int(node)
        if not 0 <= i < len(self.nodes):
            raise UnknownNodeError(f"unknown node index {i}")
        return i

    def idx_set(self, nodes: Iterable[NodeRef]) -> frozenset[int]:
        return frozenset(self.idx(v) for v in nodes)

    def name(self, node: NodeRef) -> str:
        return self.nodes[self.idx(node)].name

    def kind(self, node: NodeRef) -> NodeKind:
        return self.nodes[self.idx(node)].kind

    def descendants(self, nodes: Iterable[NodeRef]) -> frozenset[int]:
        """Proper and improper descendants: the start nodes are included."""
        return _reach(self.children, self.idx_set(nodes))

    def ancestors(self, nodes: Iterable[NodeRef]) -> frozenset[int]:
        return _reach(self.parents, self.idx_set(nodes))

    def d_max(self) -> int:
        """Largest parent-set size over observed and reward nodes."""
        return max((len(self.parents[v]) for v in (*self.observed, self.reward)), default=0)


def _reach(adjacency, start: frozenset[int]) -> frozenset[int]:
    seen = set(start)
    stack = list(start)
    while stack:
        v = stack.pop()
        for w in adjacency[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return frozenset(seen)


def _find_cycle(children, candidates: set[int]) -> list[int]:
    # every remaining node lies on or downstream of a cycle; walk until a repeat
    start = min(candidates)
    path, seen = [start], {start: 0}
    v = start
    while True:
        v = next(c for c in children[v] if c in candidates)
        if v in seen:
            return path[seen[v]:] + [v]
        seen[v] = len(path)
        path.append(v)


def validate_and_order(graph: CausalGraph) -> list[int]:
    """Topological order over all nodes, hidden included, ties by index."""
    return list(graph.order)


def surgery(
    graph: CausalGraph,
    remove_incoming: Iterable[NodeRef] = (),
    remove_outgoing: Iterable[NodeRef] = (),
) -> CausalGraph:
    """Copy of ``graph`` without the in-edges of ``remove_incoming`` and the
    out-edges of ``remove_outgoing``."""
    inc = graph.idx_set(remove_incoming)
    out = graph.idx_set(remove_outgoing)
    if not inc and not out:
        return graph
    edges = tuple((p, c) for p, c in graph.edges if c not in inc and p not in out)
    return CausalGraph(graph.nodes, edges, graph.global_node)


def d_separated(
    graph: CausalGraph,
    set_a: Iterable[NodeRef],
    set_b: Iterable[NodeRef],
    given: Iterable[NodeRef] = (),
) -> bool:
    """True iff every path between ``set_a`` and ``set_b`` is blocked by ``given``.

    Reachability ("Bayes-ball") in O(|V| + |E|).  Hidden nodes take part as
    ordinary nodes but may not be conditioned on.
    """
    a, b, z = graph.idx_set(set_a), graph.idx_set(set_b), graph.idx_set(given)
    if a & b or a & z or b & z:
        raise OverlapError("set_a, set_b and given must be pairwise disjoint")
    if any(graph.nodes[v].kind == NodeKind.HIDDEN for v in z):
        raise GraphError("cannot condition on hidden nodes")
    if not a or not b:
        return True
    return not (_reachable(graph, a, z) & b)


def _reachable(graph: CausalGraph, sources: frozenset[int], z: frozenset[int]) -> set[int]:
    anc_z = graph.ancestors(z) if z else frozenset()
    parents, children = graph.parents, graph.children
    # direction True: arrived from a child (moving up); False: from a parent
    stack = [(s, True) for s in sources]
    visited: set[tuple[int, bool]] = set()
    found: set[int] = set()
    while stack:
        v, up = stack.pop()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v not in z:
            found.add(v)
        if up:
            if v not in z:
                stack.extend((p, True) for p in parents[v])
                stack.extend((c, False) for c in children[v])
        else:
            if v not in z:
                stack.extend((c, False) for c in children[v])
            if v in anc_z:
                stack.extend((p, True) for p in parents[v])
    return found


# -- actions -------------------------------------------------------------------


@dataclass(frozen=True)
class Action:
    """Intervention ``do(S=s)``; an empty target list is the null intervention."""

    targets: tuple[tuple[int, int], ...] = ()

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.targets)

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(b for _, b in self.targets)

    @property
    def is_null(self) -> bool:
        return not self.targets

    def __len__(self) -> int:
        return len(self.targets)

    def as_dict(self) -> dict[int, int]:
        return dict(self.targets)

    def label(self, graph: CausalGraph | None = None) -> str:
        if graph is None:
            inner = ",".join(f"{v}={b}" for v, b in self.targets)
        else:
            inner = ",".join(f"{graph.nodes[v].name}={b}" for v, b in self.targets)
        return f"do({inner})"


NULL_ACTION = Action(())


def make_action(
    graph: CausalGraph,
    assignment: Mapping[NodeRef, int] | Iterable[tuple[NodeRef, int]] = (),
    *,
    bglm: bool = False,
) -> Action:
    """Build a validated action with targets stored in topological order."""
    items = assignment.items() if isinstance(assignment, Mapping) else assignment
    targets = {}
    for node, bit in items:
        v = graph.idx(node)
        if v in targets:
            raise ActionDomainError(f"node {graph.nodes[v].name!r} targeted twice")
        if bit not in (0, 1):
            raise ActionDomainError(f"intervention value must be a bit, got {bit!r}")
        targets[v] = int(bit)
    action = Action(tuple(sorted(targets.items(), key=lambda t: graph.position[t[0]])))
    check_action(graph, action, bglm=bglm)
    return action


def check_action(graph: CausalGraph, action: Action, *, bglm: bool = False) -> None:
    seen = set()
    for v, bit in action.targets:
        if not 0 <= v < len(graph.nodes):
            raise ActionDomainError(f"unknown target index {v}")
        kind = graph.nodes[v].kind
        if kind != NodeKind.OBSERVED:
            raise ActionDomainError(f"cannot intervene on {kind.value} node {graph.nodes[v].name!r}")
        if v == graph.global_node:
            raise ActionDomainError("cannot intervene on the global node")
        if v in seen:
            raise ActionDomainError(f"node {graph.nodes[v].name!r} targeted twice")
        if bit not in (0, 1):
            raise ActionDomainError("intervention values must be bits")
        seen.add(v)
    if bglm and graph.global_node is None:
        raise NoGlobalNodeError("BGLM actions require a graph with a global node")


# -- admissible sequences --------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleSequence:
    """Blocks ``Z_1..Z_k`` paired with intervened nodes ``X_1..X_k``."""

    intervened: tuple[int, ...]
    blocks: tuple[frozenset[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "intervened", tuple(int(v) for v in self.intervened))
        object.__setattr__(self, "blocks", tuple(frozenset(int(v) for v in b) for b in self.blocks))
        if len(self.intervened) != len(self.blocks):
            raise SequenceError("one block per intervened node required")
        hit = self.union & set(self.intervened)
        if hit:
            raise SequenceError(f"blocks contain intervened nodes {sorted(hit)}")

    @cached_property
    def union(self) -> frozenset[int]:
        return frozenset().union(*self.blocks) if self.blocks else frozenset()

    @property
    def union_size(self) -> int:
        return len(self.union)

    @cached_property
    def union_nodes(self) -> tuple[int, ...]:
        """Nodes of the block union in ascending index order (the z-vector layout)."""
        return tuple(sorted(self.union))


def empty_sequence(action: Action) -> AdmissibleSequence:
    return AdmissibleSequence(action.nodes, tuple(frozenset() for _ in action.targets))


@dataclass(frozen=True)
class Verdict:
    """Result of :func:`verify_admissible_sequence`.

    ``condition`` is 1 (non-descendant requirement) or 2 (d-separation
    requirement); ``index`` is the 1-based block position of the first failure.
    """

    valid: bool
    condition: int | None = None
    index: int | None = None

    def __bool__(self) -> bool:
        return self.valid


def verify_admissible_sequence(graph: CausalGraph, action: Action, seq: AdmissibleSequence) -> Verdict:
    if tuple(seq.intervened) != action.nodes:
        raise SequenceError("sequence intervened nodes must equal the action targets in order")
    bad = [v for v in seq.union if graph.nodes[v].kind != NodeKind.OBSERVED]
    if bad:
        raise SequenceError(f"blocks contain hidden or reward nodes {sorted(bad)}")
    xs = seq.intervened
    y = graph.reward
    for i, block in enumerate(seq.blocks):
        if block & graph.descendants(xs[i:]):
            return Verdict(False, 1, i + 1)
    for i, block in enumerate(seq.blocks):
        cut = surgery(graph, remove_incoming=xs[i + 1:], remove_outgoing=(xs[i],))
        given = set(xs[:i]).union(*seq.blocks[: i + 1])
        if not d_separated(cut, {y}, {xs[i]}, given):
            return Verdict(False, 2, i + 1)
    return Verdict(True)


def construct_admissible_sequence_no_hidden(graph: CausalGraph, action: Action) -> AdmissibleSequence:
    """Parent-based admissible sequence for graphs without hidden nodes.

    Targets are taken in topological order; block ``i`` is the parent set of the
    ``i``-th target minus all earlier blocks and earlier targets.
    """
    if graph.hidden:
        raise HiddenNodesError("construction requires a graph without hidden nodes")
    xs = sorted(action.nodes, key=lambda v: graph.position[v])
    if tuple(xs) != action.nodes:
        action = Action(tuple(sorted(action.targets, key=lambda t: graph.position[t[0]])))
    used: set[int] = set()
    blocks = []
    for x in xs:
        z = frozenset(graph.parents[x]) - used
        blocks.append(z)
        used |= z
        used.add(x)
    return AdmissibleSequence(tuple(xs), tuple(blocks))


def path_nodes_to_reward(graph: CausalGraph, excluded: Iterable[NodeRef] = ()) -> frozenset[int]:
    """Nodes on at least one directed global-node -> reward path avoiding ``excluded``."""
    if graph.global_node is None:
        raise NoGlobalNodeError("graph has no global node")
    ex = graph.idx_set(excluded)
    g, y = graph.global_node, graph.reward
    if g in ex or y in ex:
        return frozenset()
    fwd = _reach_avoiding(graph.children, g, ex)
    if y not in fwd:
        return frozenset()
    bwd = _reach_avoiding(graph.parents, y, ex)
    return fwd & bwd


def _reach_avoiding(adjacency, start: int, avoid: frozenset[int]) -> frozenset[int]:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adjacency[v]:
            if w not in seen and w not in avoid:
                seen.add(w)
                stack.append(w)
    return frozenset(seen)


# -- JSON format -------------------------------------------------------------------


def graph_to_dict(graph: CausalGraph) -> dict:
    return {
        "nodes": [{"name": n.name, "kind": n.kind.value} for n in graph.nodes],
        "edges": [[graph.nodes[p].name, graph.nodes[c].name] for p, c in graph.edges],
        "reward": graph.nodes[graph.reward].name,
        "global": None if graph.global_node is None else graph.nodes[graph.global_node].name,
    }


def graph_from_dict(doc) -> CausalGraph:
    if not isinstance(doc, Mapping):
        raise ParseError("graph document must be a JSON object")
    nodes_doc = doc.get("nodes")
    if not isinstance(nodes_doc, list) or not nodes_doc:
        raise ParseError("field 'nodes': non-empty list required (a reward node is mandatory)")
    nodes = []
    for i, item in enumerate(nodes_doc):
        if not isinstance(item, Mapping) or not isinstance(item.get("name"), str):
            raise ParseError(f"field 'nodes[{i}]': object with string 'name' required")
        try:
            kind = NodeKind(item.get("kind", "observed"))
        except ValueError:
            raise ParseError(f"field 'nodes[{i}].kind': unknown kind {item.get('kind')!r}") from None
        nodes.append(Node(i, item["name"], kind))
    index = {n.name: n.index for n in nodes}
    if len(index) != len(nodes):
        raise ParseError("field 'nodes': duplicate node names")
    reward = doc.get("reward")
    if reward not in index or nodes[index[reward]].kind != NodeKind.REWARD:
        raise ParseError(f"field 'reward': {reward!r} is not a node of kind 'reward'")
    edges = []
    for j, edge in enumerate(doc.get("edges", [])):
        if not (isinstance(edge, list) and len(edge) == 2):
            raise ParseError(f"field 'edges[{j}]': [parent, child] pair required")
        for end in edge:
            if end not in index:
                raise ParseError(f"field 'edges[{j}]': unknown node {end!r}")
        edges.append((index[edge[0]], index[edge[1]]))
    glob = doc.get("global")
    if glob is not None and glob not in index:
        raise ParseError(f"field 'global': unknown node {glob!r}")
    try:
        return CausalGraph(tuple(nodes), tuple(edges), None if glob is None else index[glob])
    except GraphError as exc:
        raise ParseError(f"invalid graph: {exc}") from exc


def serialize_graph(graph: CausalGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2)


def parse_graph(text: str) -> CausalGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}: {exc.msg}") from exc
    return graph_from_dict(doc)
